"""Geometric initializers for each canonical downlink scenario.

Every solver builds candidate positions from the scenario's geometry
(hyperboloids, half-lines, spheres, spindle tori), then hands them to
:func:`finish`, which fills in clock, velocity and orientation and refines
the full state against all measurements.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.optimize import brentq

from ..geometry import azel_to_direction
from ..measurements import Path
from ..scene import SPEED_OF_LIGHT, WB_RULE, ScenarioError, UeState
from .core import (
    InfeasibleError,
    NonIdentifiableError,
    SolveRequest,
    SolveResult,
    finish,
    refine,
    weighted_problem,
    halfline_from_aod,
    solve_orientation,
    solve_two_halflines,
)

N_SEEDS = 6


def _grid(req: SolveRequest):
    lo, hi = req.scenario.bounding_box()
    step = req.grid_step
    axes = [lo[i] + step * np.arange(int(np.floor((hi[i] - lo[i]) / step)) + 1) for i in range(3)]
    return axes, np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _grid_seeds(cost: np.ndarray, pts: np.ndarray, n: int = N_SEEDS) -> list[np.ndarray]:
    """Best ``n`` local minima of a 3D cost grid."""
    is_min = cost == minimum_filter(cost, size=3, mode="nearest")
    idx = np.argwhere(is_min)
    vals = cost[is_min]
    order = np.argsort(vals, kind="stable")[:n]
    return [pts[tuple(idx[i])] for i in order]


def _orientation_from_aoas(req: SolveRequest):
    s, ms = req.scenario, req.measurements
    aoas = ms.of_kind("AoA")

    def fn(p):
        g = [s.node(m.node).p - p for m in aoas]
        l = [azel_to_direction(m.value) for m in aoas]
        return solve_orientation(g, l)

    return fn


def _aod_halflines(req: SolveRequest):
    s = req.scenario
    return [halfline_from_aod(s.node(m.node), m.value) for m in req.measurements.of_kind("AoD")]


# ---------------------------------------------------------------------------


def solve_tdoa_4bs(req: SolveRequest) -> SolveResult:
    """Hyperboloid intersection from BS ToAs (or sphere intersection from RTTs)."""
    s, ms = req.scenario, req.measurements
    toas = [m for m in ms.of_kind("ToA") if Path.parse(m.node).kind == "direct"]
    rtts = [m for m in ms.of_kind("RTT") if Path.parse(m.node).kind == "direct"]
    if len(toas) >= 4:
        anchors = np.array([s.node(m.node).p for m in toas])
        rng = SPEED_OF_LIGHT * np.array([m.value[0] for m in toas])
        diff = True
    elif len(rtts) >= 3:
        anchors = np.array([s.node(m.node).p for m in rtts])
        rng = SPEED_OF_LIGHT * np.array([m.value[0] for m in rtts]) / 2.0
        diff = False
    else:
        raise InfeasibleError(
            f"{len(toas)} BS ToAs and {len(rtts)} BS RTTs: Table 1 row SISO, 0 RISs, 4 BSs needs ToAs from 4 BSs (TDoA), "
            "or RTTs from 3 BSs"
        )
    _, pts = _grid(req)
    L = np.linalg.norm(pts[..., None, :] - anchors, axis=-1)
    r = L - rng
    if diff:
        r = r - r.mean(axis=-1, keepdims=True)
    cost = np.sum(r * r, axis=-1)
    return finish(req, _grid_seeds(cost, pts), "tdoa_4bs" if diff else "rtt_3bs")


def solve_siso_1ris_1bs(req: SolveRequest) -> SolveResult:
    """Intersect the RIS AoD half-line with the direct/reflected TDoA hyperboloid."""
    s, ms = req.scenario, req.measurements
    toa = {Path.parse(m.node).kind: m for m in ms.of_kind("ToA")}
    aods = [m for m in ms.of_kind("AoD") if m.node in {r.id for r in s.riss}]
    if "direct" not in toa:
        raise InfeasibleError(
            "direct path blocked: the far-field TDoA/AoD solution is unavailable; "
            "use nf_position_from_curvature for a near-field UE"
        )
    if "reflected" not in toa or not aods:
        raise InfeasibleError("needs direct and reflected ToAs plus the RIS AoD (SISO, 1 RIS, 1 BS)")
    path = Path.parse(toa["reflected"].node)
    ris, bs = s.node(path.ris), s.node(path.bs)
    h = halfline_from_aod(ris, aods[0].value)
    rho = SPEED_OF_LIGHT * (toa["reflected"].value[0] - toa["direct"].value[0])
    w = bs.p - ris.p
    a = rho - np.linalg.norm(w)
    den = 2.0 * (w @ h.direction - a)
    if abs(den) < 1e-12:
        raise NonIdentifiableError("half-line is asymptotic to the hyperboloid")
    t = (w @ w - a * a) / den
    if t < 0 or t - a < -1e-9 * max(1.0, abs(a)):
        raise InfeasibleError("TDoA and AoD are inconsistent (no intersection with t >= 0)")
    return finish(req, [h.at(t)], "siso_1ris_1bs")


def solve_halflines(req: SolveRequest) -> SolveResult:
    """Intersection of two AoD half-lines (from RISs and/or multi-antenna BSs)."""
    hl = _aod_halflines(req)
    if len(hl) < 2:
        raise InfeasibleError("needs two AoDs")
    p, _ = solve_two_halflines(hl[0], hl[1])
    ori = _orientation_from_aoas(req) if "AoA" in req.scenario.measurement_mix else None
    return finish(req, [p], "two_halflines", ori)


def solve_siso_1ris_0bs(req: SolveRequest) -> SolveResult:
    """Sphere (RTT) centered on the RIS intersected with the AoD half-line."""
    s, ms = req.scenario, req.measurements
    rtts = [m for m in ms.of_kind("RTT") if Path.parse(m.node).kind == "monostatic"]
    if not rtts or not ms.of_kind("AoD"):
        raise InfeasibleError("needs the RIS echo RTT and the RIS AoD (SISO, 1 RIS, 0 BSs)")
    m = rtts[0]
    if m.value[0] < 0:
        raise InfeasibleError("negative RTT")
    ris = s.node(Path.parse(m.node).ris)
    aod = next(a for a in ms.of_kind("AoD") if a.node == ris.id)
    h = halfline_from_aod(ris, aod.value)
    return finish(req, [h.at(SPEED_OF_LIGHT * m.value[0] / 2.0)], "siso_1ris_0bs")


def simo_position_candidates(anchors, local_dirs, grid_pts, n_seeds: int = N_SEEDS, tol: float = 1e-6):
    """Positions consistent with the orientation-free inter-AoA angles.

    Grid search over ``cos(theta_ij)`` mismatch followed by local least
    squares. Returns ``[(position, residual)]`` sorted by residual; mirror
    images across the anchor plane appear as separate entries.
    """
    from .lm import levenberg_marquardt

    A = np.asarray(anchors, dtype=float)
    Ld = np.asarray(local_dirs, dtype=float)
    Ld = Ld / np.linalg.norm(Ld, axis=1, keepdims=True)
    if np.linalg.matrix_rank(A[1:] - A[0], tol=1e-9) < 2:
        raise NonIdentifiableError("collinear anchors: inter-AoA angles leave a circle of solutions")
    pairs = [(i, j) for i in range(len(A)) for j in range(i + 1, len(A))]
    meas = np.array([Ld[i] @ Ld[j] for i, j in pairs])

    def cosines(p):
        g = A - p
        g = g / np.linalg.norm(g, axis=1, keepdims=True)
        return np.array([g[i] @ g[j] for i, j in pairs])

    g = A - grid_pts[..., None, :]
    # grid points on an anchor get a zero direction and score badly
    g = g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-12)
    cost = sum((np.sum(g[..., i, :] * g[..., j, :], axis=-1) - meas[k]) ** 2 for k, (i, j) in enumerate(pairs))
    seeds = _grid_seeds(cost, grid_pts, n_seeds)

    def res(p):
        return cosines(p) - meas

    def jac(p):
        h = 1e-6 * max(1.0, float(np.max(np.abs(p))))
        return np.stack([(res(p + h * e) - res(p - h * e)) / (2 * h) for e in np.eye(3)], axis=1)

    out = []
    for p0 in seeds:
        r = levenberg_marquardt(res, jac, p0)
        if all(np.linalg.norm(r.x - q) > tol for q, _ in out):
            out.append((r.x, float(np.sqrt(r.cost))))
    return sorted(out, key=lambda t: t[1])


def solve_simo_aoa(req: SolveRequest) -> SolveResult:
    """Spindle-torus localization from AoAs at a multi-antenna UE."""
    s, ms = req.scenario, req.measurements
    aoas = ms.of_kind("AoA")
    anchors = np.array([s.node(m.node).p for m in aoas])
    local = np.array([azel_to_direction(m.value) for m in aoas])
    ris_aods = [m for m in ms.of_kind("AoD") if m.node in {r.id for r in s.riss}]
    if len(aoas) >= 3:
        _, pts = _grid(req)
        seeds = [p for p, _ in simo_position_candidates(anchors, local, pts)]
    elif len(aoas) == 2 and ris_aods:
        seeds = torus_halfline_intersections(anchors, local, halfline_from_aod(s.node(ris_aods[0].node), ris_aods[0].value), req)
        if not seeds:
            raise InfeasibleError("AoD half-line misses the spindle torus")
    else:
        raise InfeasibleError("needs AoAs from 3 BSs, or 2 AoAs and a RIS AoD (SIMO)")
    return finish(req, seeds, "simo_aoa", _orientation_from_aoas(req))


def torus_halfline_intersections(anchors, local_dirs, h, req: SolveRequest, n_scan: int = 4000):
    """Points on half-line ``h`` that see the two anchors under the measured angle."""
    a, b = np.asarray(anchors, dtype=float)
    l0, l1 = (np.asarray(x) / np.linalg.norm(x) for x in local_dirs)
    target = float(l0 @ l1)
    lo, hi = req.scenario.bounding_box()
    t_max = float(np.linalg.norm(hi - lo)) * 2.0

    def f(t):
        p = h.at(t)
        ua, ub = a - p, b - p
        return ua @ ub / (np.linalg.norm(ua) * np.linalg.norm(ub)) - target

    ts = np.geomspace(1e-3, t_max, n_scan)
    vals = np.array([f(t) for t in ts])
    out = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]:
        try:
            t = brentq(f, ts[i], ts[i + 1], xtol=1e-14, rtol=1e-15)
        except ValueError:
            continue
        out.append(h.at(t))
    return out


def solve_generic(req: SolveRequest) -> SolveResult:
    """Grid search on the full weighted residual (position only), then refine."""
    s, ms = req.scenario, req.measurements
    n_rows = sum(m.size for m in ms)
    if n_rows < 3:
        hint = "; for a single RIS without a direct path use nf_position_from_curvature" if len(s.riss) == 1 else ""
        raise NonIdentifiableError(f"{n_rows} measurement components cannot fix 3 position unknowns{hint}")
    _, pts = _grid(req)
    flat = pts.reshape(-1, 3)
    # coarse evaluation through the scalar model is slow; subsample the grid
    stride = max(1, int(round((flat.shape[0] / 20000) ** (1 / 3))))
    sub = pts[::stride, ::stride, ::stride]
    _, residual, _ = weighted_problem(s, ms, ("position",), UeState())
    cost = np.array([float(np.sum(residual(p) ** 2)) for p in sub.reshape(-1, 3)]).reshape(sub.shape[:3])
    return finish(req, _grid_seeds(cost, sub), "generic")


def solve(req: SolveRequest) -> SolveResult:
    """Pick the scenario-specific solver from the scenario's structure."""
    s = req.scenario
    mix = s.measurement_mix
    if s.signaling == "NB" and mix & {"ToA", "TDoA", "RTT"}:
        raise ScenarioError(WB_RULE)
    ms = req.measurements
    ids = {n.id for n in (*s.bss, *s.riss)}
    for m in ms:
        names = [m.node] if m.kind in ("AoD", "AoA") else [n for n in (Path.parse(m.node).bs, Path.parse(m.node).ris) if n]
        missing = [n for n in names if n not in ids]
        if missing:
            raise InfeasibleError(f"measurement {m.kind} {m.node} refers to unknown node {missing[0]!r}")
    if req.initial is not None:
        return refine(req)
    n_aod = len(ms.of_kind("AoD"))
    paths = [Path.parse(m.node) for m in ms.of_kind("ToA")]
    if "AoA" in mix:
        return solve_halflines(req) if n_aod >= 2 else solve_simo_aoa(req)
    if n_aod >= 2:
        return solve_halflines(req)
    if s.riss and not s.bss:
        return solve_siso_1ris_0bs(req)
    if s.riss and any(p.kind == "reflected" for p in paths):
        return solve_siso_1ris_1bs(req)
    if not s.riss:
        return solve_tdoa_4bs(req)
    return solve_generic(req)
