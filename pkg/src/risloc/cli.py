"""Command-line front end: ``risloc <command> [flags]``.

Every command writes UTF-8 CSV into ``--out`` with ``#``-prefixed metadata
lines (command, scenario, seed, sigmas) so that figures can be reproduced.
Commands that have a natural picture also write a PNG next to the CSV
unless ``--no-figures`` is given. Set ``RISLOC_LOG=INFO`` (or ``DEBUG``)
for progress messages on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .identifiability import (
    TABLE1_BY_KEY,
    fim,
    fraunhofer_distance,
    ident_report,
    nearfield_ident_sweep,
    rank_drop_range,
    reproduce_table,
    table_csv,
    table_text,
)
from .measurements import delay_kinds_present, from_csv, generate, to_csv
from .model import BLOCK_ORDER, BLOCK_SIZES
from .scene import (
    MEASUREMENT_KINDS,
    WB_RULE,
    ScenarioError,
    gallery_paths,
    load,
    validate,
)

log = logging.getLogger("risloc")

COMMANDS = ("simulate", "solve", "fim", "table1", "sweep", "crb-mc", "nf-sweep")


class CommandError(Exception):
    """Scenario/command mismatch or invalid input; reported without a traceback."""


# ---------------------------------------------------------------------------
# argument helpers


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _sigma(text: str) -> tuple[str, float]:
    kind, sep, val = text.partition("=")
    if not sep or kind not in MEASUREMENT_KINDS:
        raise argparse.ArgumentTypeError(f"expected KIND=VALUE with KIND in {', '.join(MEASUREMENT_KINDS)}")
    v = float(val)
    if not v >= 0:
        raise argparse.ArgumentTypeError("sigma must be >= 0")
    return kind, v


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risloc", description="RIS-aided localization: simulate, solve, identifiability.")
    p.add_argument("--version", action="version", version=f"risloc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", type=Path, required=True, help="scenario YAML file")
        sp.add_argument("--seed", type=_seed, default=0, help="RNG seed (uint64, default 0)")
        sp.add_argument("--sigma", type=_sigma, action="append", default=[], metavar="KIND=VALUE", help="override a measurement std (repeatable)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG output")

    sp = sub.add_parser("simulate", help="generate a noisy measurement set")
    common(sp)

    sp = sub.add_parser("solve", help="estimate the UE state")
    common(sp)
    sp.add_argument("--measurements", type=Path, help="measurement CSV (default: simulate with --seed)")
    sp.add_argument("--nearfield", action="store_true", help="signal-level curvature solve through the single RIS")
    sp.add_argument("--profiles", type=int, default=32, help="random RIS phase profiles for --nearfield (default 32)")
    sp.add_argument("--snr-db", type=float, help="per-sample SNR for --nearfield (default: noiseless)")

    sp = sub.add_parser("fim", help="Fisher information rank and CRB at the scenario's UE")
    common(sp)

    sp = sub.add_parser("table1", help="identifiability table over a scenario gallery")
    common(sp, scenario=False)
    sp.add_argument("--gallery", type=Path, help="directory of scenario files (default: shipped gallery)")

    sp = sub.add_parser("sweep", help="two-RIS beam-sweep power map")
    common(sp)
    sp.add_argument("--grid", type=str, help="X0,Y0,X1,Y1,STEP in meters; write --grid=-1,... for negative values (default: node bounding box, 1 cm)")
    sp.add_argument("--beams", type=int, default=None, help="beams per RIS (default 63)")
    sp.add_argument("--span-deg", type=float, default=None, help="codebook azimuth span (default 120)")
    sp.add_argument("--snr-db", type=float, default=20.0, help="SNR of the weakest RIS's best beam (default 20)")
    sp.add_argument("--noiseless", action="store_true")

    sp = sub.add_parser("crb-mc", help="Monte-Carlo RMSE against the CRB")
    common(sp)
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--scales", type=_floats, default=None, help="comma-separated sigma scales (default 0.25,0.5,1)")

    sp = sub.add_parser("nf-sweep", help="position-FIM rank versus range through a single RIS")
    common(sp)
    sp.add_argument("--ranges", type=_floats, default=None, help="comma-separated ranges in meters (default: 0.1 m to 10 km, 25 log steps)")
    sp.add_argument("--profiles", type=int, default=32)
    return p


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args):
    s = load(args.scenario)
    errs = validate(s)
    if errs:
        raise CommandError(f"{args.scenario}: invalid scenario\n  " + "\n  ".join(errs))
    return s


def _sigmas(args, s) -> dict:
    sig = s.all_sigmas()
    sig.update(dict(args.sigma))
    return sig


def _meta(args, **extra) -> dict:
    m = {"risloc": __version__, "command": args.command}
    if getattr(args, "scenario", None) is not None:
        m["scenario"] = str(args.scenario)
    m["seed"] = args.seed
    if args.sigma:
        m["sigma_overrides"] = " ".join(f"{k}={v!r}" for k, v in args.sigma)
    m.update(extra)
    return m


def _write(args, name: str, text: str) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / name
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _need_truth(s, what: str):
    if s.ue is None:
        raise CommandError(f"{s.name}: {what} needs a true UE state ('ue' field) in the scenario file")


def _row_hint(s) -> str:
    row = TABLE1_BY_KEY.get(s.table_row)
    if row is None:
        return ""
    return f" (Table 1 row {row[1]}, {row[2]}: {row[3]}, {row[4]})"


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    s = _load(args)
    _need_truth(s, "simulate")
    ms = generate(s, s.ue, _sigmas(args, s), seed=args.seed)
    _write(args, "measurements.csv", to_csv(ms, _meta(args)))
    counts = {}
    for m in ms:
        counts[m.kind] = counts.get(m.kind, 0) + 1
    print(f"{s.name}: {len(ms.measurements)} measurements (" + ", ".join(f"{k} {v}" for k, v in counts.items()) + ")")
    return 0


def _solve_nearfield(args, s):
    from .signal import observe, random_profiles
    from .solvers import nf_position_from_curvature

    if len(s.riss) != 1 or not s.bss:
        raise CommandError(f"{s.name}: curvature solve needs one RIS and one BS (Table 1: 'in near-field w/o LOS to BS')")
    _need_truth(s, "solve --nearfield")
    ris = s.riss[0]
    P = random_profiles(ris, args.profiles, args.seed)
    clean = observe(s, ris, s.ue.p, P)
    sigma = 0.0
    if args.snr_db is not None:
        sigma = float(np.sqrt(np.mean(np.abs(clean.samples) ** 2)) / 10 ** (args.snr_db / 20))
    obs = observe(s, ris, s.ue.p, P, noise_sigma=sigma, seed=args.seed)
    return nf_position_from_curvature(s, obs), {"profiles": args.profiles, "snr_db": args.snr_db}


def cmd_solve(args) -> int:
    from .solvers import SolveRequest, SolverError, solve

    s = _load(args)
    if args.nearfield:
        res, extra = _solve_nearfield(args, s)
    else:
        if args.measurements is not None:
            ms = from_csv(args.measurements.read_text(encoding="utf-8"))
        else:
            _need_truth(s, "solve without --measurements")
            ms = generate(s, s.ue, _sigmas(args, s), seed=args.seed)
        if s.signaling == "NB" and delay_kinds_present(ms):
            raise CommandError(f"{s.name}: NB scenario with delay measurements: {WB_RULE}")
        try:
            res = solve(SolveRequest(s, ms))
        except SolverError as e:
            raise CommandError(f"{s.name}: {e}{_row_hint(s)}") from e
        extra = {"measurements": str(args.measurements) if args.measurements else "simulated"}
    meta = _meta(args, solver=res.solver, iterations=res.iterations, converged=res.converged, **extra)
    for w in res.warnings:
        meta.setdefault("warning", w)
    _write(args, "solution.csv", res.to_csv(meta))
    p = res.state.p
    print(f"{s.name}: {res.solver} position ({p[0]:.6f}, {p[1]:.6f}, {p[2]:.6f}) residual {res.residual_norm:.3g} "
          f"candidates {max(1, len(res.candidates))} converged {res.converged}")
    return 0


def fim_csv(rep, meta: dict) -> str:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append("block,size,identifiable_dim,crb_1,crb_2,crb_3")
    for b in BLOCK_ORDER:
        if b not in rep.block_dims:
            continue
        c = list(rep.crb[b]) + [float("nan")] * (3 - BLOCK_SIZES[b])
        lines.append(f"{b},{BLOCK_SIZES[b]},{rep.block_dims[b]}," + ",".join(repr(float(v)) for v in c[:3]))
    return "\n".join(lines) + "\n"


def cmd_fim(args) -> int:
    s = _load(args)
    _need_truth(s, "fim")
    sig = _sigmas(args, s)
    bad = [k for k in s.measurement_mix if not sig[k] > 0]
    if bad:
        raise CommandError(f"fim needs positive sigmas (got 0 for {', '.join(sorted(bad))})")
    f = fim(s, s.ue, sig)
    rep = ident_report(f)
    meta = _meta(args, verdict=rep.verdict, total_rank=rep.total_rank, state=rep.state_label())
    if f.chart_singular:
        meta["chart"] = "near gimbal lock; orientation uses a local rotation-vector chart"
    _write(args, "fim.csv", fim_csv(rep, meta))
    print(f"{s.name}: {rep.verdict}; {rep.state_label()}")
    return 0


def cmd_table1(args) -> int:
    paths = sorted(args.gallery.glob("*.yaml")) if args.gallery else gallery_paths()
    if not paths:
        raise CommandError(f"no scenario files in {args.gallery}")
    gallery = [load(p) for p in paths]
    for p, s in zip(paths, gallery):
        errs = validate(s)
        if errs:
            raise CommandError(f"{p}: invalid scenario\n  " + "\n  ".join(errs))
    rows = reproduce_table(gallery)
    text = table_text(rows)
    print(text)
    meta = _meta(args, gallery=str(args.gallery or "shipped"))
    _write(args, "table1.csv", "".join(f"# {k}: {v}\n" for k, v in meta.items()) + table_csv(rows))
    return 0 if all(r.match for r in rows) else 1


def _default_grid(s):
    from .signal import Grid2D

    pts = np.array([n.p for n in (*s.bss, *s.riss)] + ([s.ue.p] if s.ue is not None else []))
    lo, hi = pts.min(axis=0)[:2], pts.max(axis=0)[:2]
    return Grid2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]), 0.01)


def cmd_sweep(args) -> int:
    from .signal import AZ_SPAN, N_BEAMS, Grid2D, beam_sweep_estimate, make_codebook, noise_sigma_for_snr

    s = _load(args)
    if len(s.riss) != 2 or not s.bss:
        raise CommandError(
            f"{s.name}: sweep needs exactly 2 RISs and 1 BS (Table 1 row SISO, 2 RISs, 1 BS: NB, AoD; "
            f"the UE is the intersection of the two RIS AoD half-lines)"
        )
    if s.signaling != "NB":
        log.info("sweep uses narrowband beam powers; signalling %s ignored", s.signaling)
    _need_truth(s, "sweep")
    grid = Grid2D.parse(args.grid) if args.grid else _default_grid(s)
    n = args.beams or N_BEAMS
    span = np.deg2rad(args.span_deg) if args.span_deg else AZ_SPAN
    cbs = [make_codebook(r, n, span, s.bss[0], s.wavelength) for r in s.riss]
    sigma = 0.0 if args.noiseless else noise_sigma_for_snr(s, s.ue.p, cbs, args.snr_db)
    pm, est = beam_sweep_estimate(s, s.ue.p, cbs, grid, sigma, args.seed)
    err = float(np.linalg.norm(est[:2] - s.ue.p[:2]))
    meta = _meta(
        args,
        grid=f"{grid.x0},{grid.y0},{grid.x1},{grid.y1},{grid.step}",
        beams=n,
        span_deg=f"{float(np.rad2deg(span)):g}",
        snr_db="inf" if args.noiseless else args.snr_db,
        estimate=f"{float(est[0])!r},{float(est[1])!r}",
        error_m=repr(err),
    )
    _write(args, "power_map.csv", pm.to_csv(meta))
    lines = [f"# {k}: {v}" for k, v in meta.items()] + ["ris,beam,az_label,normalized_power"]
    for cb in cbs:
        for b, (lab, pw) in enumerate(zip(cb.labels, pm.beam_power[cb.ris_id])):
            lines.append(f"{cb.ris_id},{b},{float(lab)!r},{float(pw)!r}")
    _write(args, "beams.csv", "\n".join(lines) + "\n")
    if not args.no_figures:
        from .plotting import power_map_png

        power_map_png(pm, args.out / "power_map.png", s.ue.p, est, [(r.id, r.p) for r in s.riss])
    print(f"{s.name}: estimate ({est[0]:.4f}, {est[1]:.4f}) error {err * 100:.2f} cm")
    return 0


def cmd_crb_mc(args) -> int:
    from .montecarlo import DEFAULT_SCALES, crb_monte_carlo, loglog_slope, mc_csv

    s = _load(args)
    _need_truth(s, "crb-mc")
    if args.trials < 1:
        raise CommandError("--trials must be >= 1")
    sig = _sigmas(args, s)
    if not all(sig[k] > 0 for k in s.measurement_mix):
        raise CommandError("crb-mc needs positive sigmas")
    rep = ident_report(fim(s, s.ue, sig))
    if rep.block_dims.get("position", 0) < 3:
        raise CommandError(f"{s.name}: position is not identifiable ({rep.state_label() or 'nothing'}); no finite CRB{_row_hint(s)}")
    base = replace(s, sigmas=sig) if args.sigma else s
    scales = args.scales or list(DEFAULT_SCALES)
    pts = crb_monte_carlo(base, scales, args.trials, args.seed)
    slope = loglog_slope(pts) if len(pts) > 1 else float("nan")
    _write(args, "crb_mc.csv", mc_csv(pts, _meta(args, trials=args.trials, loglog_slope=repr(slope))))
    if not args.no_figures:
        from .plotting import crb_mc_png

        crb_mc_png(pts, args.out / "crb_mc.png", s.name)
    for p in pts:
        print(f"{s.name}: scale {p.scale:g} rmse {p.rmse:.4g} m crb {p.crb:.4g} m ratio {p.ratio:.3f}")
    print(f"{s.name}: log-log slope {slope:.3f}")
    return 0


def cmd_nf_sweep(args) -> int:
    s = _load(args)
    if len(s.riss) != 1 or not s.bss:
        raise CommandError(f"{s.name}: nf-sweep needs one RIS and one BS (Table 1: 'in near-field w/o LOS to BS')")
    ranges = args.ranges or list(np.geomspace(0.1, 1e4, 25))
    pts = nearfield_ident_sweep(s, ranges, n_profiles=args.profiles, seed=args.seed)
    dF = fraunhofer_distance(s, s.riss[0])
    drop = rank_drop_range(pts)
    lines = [f"# {k}: {v}" for k, v in _meta(args, fraunhofer_m=repr(dF), rank_drop_m=repr(drop), profiles=args.profiles).items()]
    lines.append("range_m,position_rank,sv_1,sv_2,sv_3")
    for p in pts:
        lines.append(f"{float(p.range_m)!r},{p.position_rank}," + ",".join(repr(float(v)) for v in p.singular_values))
    _write(args, "nf_sweep.csv", "\n".join(lines) + "\n")
    if not args.no_figures:
        from .plotting import nearfield_png

        nearfield_png(pts, args.out / "nf_sweep.png", dF)
    print(f"{s.name}: Fraunhofer distance {dF:.3f} m; position rank drops below 3 at {drop if drop is not None else 'none'} m")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "fim": cmd_fim,
    "table1": cmd_table1,
    "sweep": cmd_sweep,
    "crb-mc": cmd_crb_mc,
    "nf-sweep": cmd_nf_sweep,
}


def main(argv=None) -> int:
    level = os.environ.get("RISLOC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except (CommandError, ScenarioError, OSError) as e:
        print(f"risloc {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
