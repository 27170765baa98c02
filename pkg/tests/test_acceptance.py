"""End-to-end acceptance checks, one per criterion, each printing a PASS/FAIL line."""

import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from risloc.cli import _default_grid
from risloc.identifiability import fraunhofer_distance, nearfield_ident_sweep, rank_drop_range, reproduce_table, state_label
from risloc.measurements import generate
from risloc.montecarlo import crb_monte_carlo, loglog_slope
from risloc.signal import AZ_SPAN, N_BEAMS, beam_sweep_estimate, make_codebook, noise_sigma_for_snr
from risloc.solvers import NonIdentifiableWarning, SolveRequest, solve

TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok

    return emit


def test_criterion_1_table1(gallery, report):
    t0 = time.perf_counter()
    rows = reproduce_table(gallery)
    dt = time.perf_counter() - t0
    bad = [f"{r.architecture} {r.scenario}: got '{state_label(r.computed)}'" for r in rows if not r.match]
    ok = len(rows) == 10 and not bad and dt < 30
    report("1 Table 1 identifiable state", ok, f"{len(rows) - len(bad)}/{len(rows)} rows match in {dt:.1f} s " + "; ".join(bad))
    assert ok


def test_criterion_2_noiseless_recovery(gallery, report):
    t0 = time.perf_counter()
    worst = {}
    for s in gallery:
        ms = generate(s, s.ue, {k: 0.0 for k in s.all_sigmas()}, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonIdentifiableWarning)
            res = solve(SolveRequest(s, ms))
        u, e = s.ue, res.state
        errs = [np.max(np.abs(e.p - u.p))]
        if "clock" in res.identified:
            errs.append(299792458.0 * abs(e.clock_bias - u.clock_bias))
        if "velocity" in res.identified:
            errs.append(np.max(np.abs(res.velocity_basis @ (e.v - u.v))))
        if "orientation" in res.identified:
            errs.append(np.max(np.abs(np.angle(np.exp(1j * (e.orientation.as_array() - u.orientation.as_array()))))))
        worst[s.name] = max(errs)
    dt = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-6 and dt < 60
    report("2 noiseless recovery", ok, f"worst component error {max(worst.values()):.2e} over {len(worst)} rows in {dt:.1f} s")
    assert ok


def test_criterion_3_beam_sweep(experiment, report):
    s = experiment
    t0 = time.perf_counter()
    cbs = [make_codebook(r, N_BEAMS, AZ_SPAN, s.bss[0], s.wavelength) for r in s.riss]
    sigma = noise_sigma_for_snr(s, s.ue.p, cbs, 20.0)
    grid = _default_grid(s)
    errs = []
    for seed in range(100):
        _, est = beam_sweep_estimate(s, s.ue.p, cbs, grid, sigma, seed)
        errs.append(float(np.linalg.norm(est[:2] - s.ue.p[:2])))
    dt = time.perf_counter() - t0
    hits = sum(e < 0.10 for e in errs)
    ok = hits >= 95 and dt < 120
    report("3 beam sweep < 10 cm at 20 dB", ok, f"{hits}/100 trials, median error {np.median(errs) * 100:.2f} cm, {dt:.1f} s")
    assert ok


@pytest.mark.parametrize("name", ["siso_2ris_1bs", "siso_0ris_4bs"])
def test_criterion_4_crb(rows, name, report):
    s = rows[name]
    t0 = time.perf_counter()
    pts = crb_monte_carlo(s, (0.25, 0.5, 1.0), trials=500, seed=0)
    dt = time.perf_counter() - t0
    slope = loglog_slope(pts)
    small = pts[0]
    ok = 0.5 <= small.ratio <= 2.0 and abs(slope - 1.0) <= 0.15 and all(p.failures == 0 for p in pts)
    ratios = ", ".join(f"{p.scale:g}:{p.ratio:.3f}" for p in pts)
    report(f"4 CRB consistency {name}", ok, f"RMSE/CRB {ratios}; slope {slope:.3f}; failures {sum(p.failures for p in pts)}; {dt:.0f} s")
    assert ok


def test_criterion_5_near_far(nearfield, report):
    s = nearfield
    ris = s.riss[0]
    dF = fraunhofer_distance(s, ris)
    below = [dF / 8, dF / 4, dF / 2, dF]
    above = [1e3, 3e3, 1e4]
    ladder = list(np.geomspace(dF / 8, 1e4, 30))
    pb = nearfield_ident_sweep(s, below)
    pa = nearfield_ident_sweep(s, above)
    pl = nearfield_ident_sweep(s, ladder)
    ranks = [p.position_rank for p in pl]
    monotone = all(b <= a for a, b in zip(ranks, ranks[1:]))
    ok = (
        ris.grid[0] * ris.grid[1] == 64
        and "bs1" in s.los_blocked
        and all(p.position_rank == 3 for p in pb)
        and all(p.position_rank == 2 for p in pa)
        and monotone
        and set(ranks) == {2, 3}
    )
    drop = rank_drop_range(pl)
    report(
        "5 near/far-field rank transition",
        ok,
        f"d_F {dF:.3f} m; ranks {[p.position_rank for p in pb]} at <= d_F, {[p.position_rank for p in pa]} at 1-10 km; "
        f"ladder drop at {drop:.1f} m",
    )
    assert ok


PROPERTY_TESTS = [
    "test_geometry.py::test_group_laws",
    "test_geometry.py::test_rotation_is_proper_orthonormal",
    "test_measurements.py::test_clock_bias_laws",
    "test_measurements.py::test_aod_ignores_ue_orientation_and_bias",
    "test_measurements.py::test_aoa_yaw_equivariance",
    "test_measurements.py::test_inter_aoa_angle_orientation_invariant",
    "test_geometry.py::test_angle_between_rotation_invariance_1000",
    "test_measurements.py::test_doppler_linear_in_velocity",
    "test_identifiability.py::test_fim_symmetric_psd",
    "test_measurements.py::test_fd_jacobian_matches_analytic",
    "test_signal.py::test_element_gradient_matches_fd",
    "test_solvers.py::test_halflines_symmetric",
    "test_solvers.py::test_velocity_dimensions",
    "test_solvers.py::test_velocity_subspace_dims_per_row",
]


def test_criterion_6_property_suites(report):
    t0 = time.perf_counter()
    ids = [str(TESTS / t) for t in PROPERTY_TESTS]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *ids], capture_output=True, text=True)
    dt = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0
    report("6 property suites", ok, f"{len(PROPERTY_TESTS)} suites: {tail} ({dt:.1f} s)")
    assert ok, proc.stdout[-3000:]
