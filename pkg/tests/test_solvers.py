import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risloc.geometry import EulerZYX, azel_to_direction, direction_to_azel, rot_zyx, wrap_angle
from risloc.identifiability import TABLE1_BY_KEY
from risloc.measurements import Measurement, MeasurementSet, generate, layout, predict
from risloc.scene import SPEED_OF_LIGHT, Antenna, BsNode, RisNode, Scenario, UeState
from risloc.signal import observe, random_profiles
from risloc.solvers import (
    HalfLine,
    InfeasibleError,
    NonIdentifiableError,
    NonIdentifiableWarning,
    SolveRequest,
    nf_position_from_curvature,
    refine,
    simo_position_candidates,
    solve,
    solve_orientation,
    solve_siso_1ris_0bs,
    solve_siso_1ris_1bs,
    solve_tdoa_4bs,
    solve_two_halflines,
    solve_velocity,
)
from risloc.solvers.lm import levenberg_marquardt

TOL = 1e-6
unit3 = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


def noiseless(s, u=None):
    u = s.ue if u is None else u
    return generate(s, u, {k: 0.0 for k in s.all_sigmas()}, seed=0)


def components(u, res, s):
    """Errors of every identified block, in meters, m/s, c*seconds and radians."""
    out = {"position": np.max(np.abs(res.state.p - u.p))}
    if "clock" in res.identified:
        out["clock"] = SPEED_OF_LIGHT * abs(res.state.clock_bias - u.clock_bias)
    if "velocity" in res.identified:
        B = res.velocity_basis
        out["velocity"] = np.max(np.abs(B @ (res.state.v - u.v)))
    if "orientation" in res.identified:
        out["orientation"] = np.max(np.abs(rot_zyx(res.state.orientation) - rot_zyx(u.orientation)))
    return out


# ---------------------------------------------------------------------------
# gallery recovery


def test_noiseless_gallery_recovery(gallery):
    for s in gallery:
        res = solve(SolveRequest(s, noiseless(s)))
        assert res.converged, s.name
        errs = components(s.ue, res, s)
        assert max(errs.values()) < TOL, (s.name, errs)
        assert res.identified == TABLE1_BY_KEY[s.table_row][5], s.name


def test_refine_fixed_point(gallery):
    for s in gallery:
        res = refine(SolveRequest(s, noiseless(s), initial=s.ue))
        assert res.residual_norm < 1e-9 and res.iterations <= 1, s.name


def test_refine_from_perturbed_guess(gallery, rng):
    for s in gallery:
        u = s.ue
        ori = EulerZYX(*(u.orientation.as_array() + rng.uniform(-0.1, 0.1, 3)))
        guess = UeState(tuple(u.p + rng.normal(size=3) / math.sqrt(3)), tuple(u.v + 0.1), u.clock_bias + 1e-9, ori)
        res = solve(SolveRequest(s, noiseless(s), initial=guess))
        assert np.max(np.abs(res.state.p - u.p)) < TOL, s.name


def test_lm_history_non_increasing():
    A = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])

    def r(x):
        return np.array([np.sin(x[0]) + x[1] ** 2 - 0.3, x[0] * x[1] - 0.2, np.exp(x[0]) - 1.1]) + A @ x * 0.1

    def j(x):
        return np.array([[np.cos(x[0]), 2 * x[1]], [x[1], x[0]], [np.exp(x[0]), 0.0]]) + A * 0.1

    res = levenberg_marquardt(r, j, np.array([2.0, -3.0]))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


# ---------------------------------------------------------------------------
# TDoA / RTT


def tetra_scene(mix=("ToA",)):
    pts = [(10.0, 10.0, 10.0), (10.0, -10.0, -10.0), (-10.0, 10.0, -10.0), (-10.0, -10.0, 10.0)]
    return Scenario(
        "tetra",
        bss=tuple(BsNode(f"bs{i + 1}", p) for i, p in enumerate(pts)),
        signaling="WB",
        bandwidth_hz=1e8,
        measurement_mix=frozenset(mix),
        search_box=((-15.0, -15.0, -15.0), (15.0, 15.0, 15.0)),
    )


def test_tdoa_centroid_exact():
    s = tetra_scene()
    u = UeState((0.0, 0.0, 0.0))
    res = solve_tdoa_4bs(SolveRequest(s, noiseless(s, u)))
    assert np.linalg.norm(res.state.p) < 1e-9
    assert abs(res.state.clock_bias) < 1e-15


def test_tdoa_needs_four(rows):
    s = rows["siso_0ris_4bs"]
    ms = noiseless(s)
    three = MeasurementSet(tuple(m for m in ms if m.node != "bs4"))
    with pytest.raises(InfeasibleError, match="SISO, 0 RISs, 4 BSs"):
        solve_tdoa_4bs(SolveRequest(s, three))


def test_rtt_three_bs(rows):
    s0 = rows["siso_0ris_4bs"]
    s = replace(s0, bss=s0.bss[:3], measurement_mix=frozenset({"RTT"}))
    res = solve(SolveRequest(s, noiseless(s)))
    # three spheres meet in two mirror points; the truth is among them
    assert min(np.linalg.norm(c.state.p - s.ue.p) for c in res.candidates) < TOL


# ---------------------------------------------------------------------------
# SISO with one RIS


def boresight_scene(blocked=False, bss=True):
    ris = RisNode("ris1", (0.0, 0.0, 3.0), EulerZYX(0.4, 0.0, 0.0), (8, 8), 0.005)
    return Scenario(
        "bore",
        bss=(BsNode("bs1", (-5.0, 8.0, 6.0)),) if bss else (),
        riss=(ris,),
        signaling="WB",
        bandwidth_hz=4e8,
        measurement_mix=frozenset({"ToA", "AoD", "Doppler"} if bss else {"RTT", "AoD", "Doppler"}),
        los_blocked=frozenset({"bs1"}) if blocked else frozenset(),
    )


def test_siso_1ris_1bs_boresight():
    s = boresight_scene()
    u = UeState(tuple(s.riss[0].p + 7.0 * (s.riss[0].rotation @ [1, 0, 0])), clock_bias=3e-8)
    res = solve_siso_1ris_1bs(SolveRequest(s, noiseless(s, u)))
    assert np.linalg.norm(res.state.p - u.p) < 1e-9


def test_siso_1ris_1bs_blocked_points_to_curvature():
    s = boresight_scene(blocked=True)
    u = UeState((5.0, 3.0, 1.0))
    with pytest.raises(InfeasibleError, match="nf_position_from_curvature"):
        solve(SolveRequest(s, noiseless(s, u)))


def test_siso_1ris_1bs_inconsistent_tdoa_rejected():
    s = boresight_scene()
    u = UeState((5.0, 3.0, 1.0))
    ms = noiseless(s, u)
    # a reflected path arriving before the direct one cannot be met with t >= 0
    bad = tuple(replace(m, value=(m.value[0] - 5e-8,)) if m.kind == "ToA" and ">" in m.node else m for m in ms)
    with pytest.raises(InfeasibleError):
        solve_siso_1ris_1bs(SolveRequest(s, MeasurementSet(bad)))


def test_siso_1ris_0bs_construction():
    s = boresight_scene(bss=False)
    ris = s.riss[0]
    d = 6.5
    ms = MeasurementSet(
        (
            Measurement("RTT", "ris1~", (2 * d / SPEED_OF_LIGHT,), 0.0),
            Measurement("AoD", "ris1", (0.0, 0.0), 0.0),
            Measurement("Doppler", "ris1~", (0.0,), 0.0),
        )
    )
    res = solve_siso_1ris_0bs(SolveRequest(s, ms))
    np.testing.assert_allclose(res.state.p, ris.p + d * (ris.rotation @ [1, 0, 0]), atol=1e-12)
    neg = MeasurementSet((replace(ms.measurements[0], value=(-1e-9,)), *ms.measurements[1:]))
    with pytest.raises(InfeasibleError, match="negative RTT"):
        solve_siso_1ris_0bs(SolveRequest(s, neg))


def test_siso_1ris_0bs_velocity_only_radial(rows):
    s = rows["siso_1ris_0bs"]
    ris = s.riss[0]
    radial = (s.ue.p - ris.p) / np.linalg.norm(s.ue.p - ris.p)
    perp = np.cross(radial, [0.0, 0.0, 1.0])
    perp /= np.linalg.norm(perp)
    u = replace(s.ue, velocity=tuple(1.5 * perp))
    res = solve(SolveRequest(s, noiseless(s, u)))
    assert np.linalg.norm(res.state.v) < 1e-9
    assert res.identified["velocity"] == 1


# ---------------------------------------------------------------------------
# half-lines


def test_halflines_meet():
    p = np.array([2.0, 3.0, 1.0])
    o1, o2 = np.array([0.0, 0.0, 5.0]), np.array([10.0, -2.0, 0.0])
    h1 = HalfLine(o1, (p - o1) / np.linalg.norm(p - o1))
    h2 = HalfLine(o2, (p - o2) / np.linalg.norm(p - o2))
    q, gap = solve_two_halflines(h1, h2)
    np.testing.assert_allclose(q, p, atol=1e-12)
    assert gap < 1e-12


def test_halflines_skew_gap():
    h1 = HalfLine(np.array([0.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    h2 = HalfLine(np.array([5.0, -3.0, 2.0]), np.array([0.0, 1.0, 0.0]))
    q, gap = solve_two_halflines(h1, h2)
    np.testing.assert_allclose(q, [5.0, 0.0, 1.0], atol=1e-12)
    assert gap == pytest.approx(2.0, abs=1e-12)


@given(unit3, unit3, unit3, unit3)
def test_halflines_symmetric(o1, d1, o2, d2):
    h1 = HalfLine(np.array(o1) * 10, np.array(d1) / np.linalg.norm(d1))
    h2 = HalfLine(np.array(o2) * 10, np.array(d2) / np.linalg.norm(d2))
    try:
        a = solve_two_halflines(h1, h2)
    except (InfeasibleError, NonIdentifiableError) as e:
        with pytest.raises(type(e)):
            solve_two_halflines(h2, h1)
        return
    b = solve_two_halflines(h2, h1)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12 * max(1.0, np.max(np.abs(a[0]))))
    assert a[1] == pytest.approx(b[1], abs=1e-9)


def test_halflines_errors():
    h1 = HalfLine(np.zeros(3), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(NonIdentifiableError):
        solve_two_halflines(h1, HalfLine(np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])))
    # crossing point behind both origins
    with pytest.raises(InfeasibleError):
        solve_two_halflines(HalfLine(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])), HalfLine(np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0])))


# ---------------------------------------------------------------------------
# orientation and velocity


def test_orientation_identity():
    g = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.2]]
    assert np.allclose(solve_orientation(g, g).as_array(), 0.0, atol=1e-12)


@given(st.floats(-3, 3), st.floats(-1.4, 1.4), st.floats(-3, 3))
def test_orientation_recovery(a, b, c):
    e = EulerZYX(a, b, c)
    R = rot_zyx(e)
    rng = np.random.default_rng(0)
    g = rng.standard_normal((3, 3))
    l = (R.T @ g.T).T
    est = solve_orientation(g, l)
    Re = rot_zyx(est)
    np.testing.assert_allclose(Re.T @ Re, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(Re, R, atol=1e-9)
    np.testing.assert_allclose(wrap_angle(est.as_array() - e.as_array()), 0.0, atol=1e-9)


def test_orientation_needs_two_pairs():
    with pytest.raises(NonIdentifiableError):
        solve_orientation([[1.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]])
    with pytest.raises(NonIdentifiableError):
        solve_orientation([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], [[0.0, 1.0, 0.0], [0.0, 2.0, 0.0]])


def test_velocity_dimensions():
    lam = 0.01
    v = np.array([0.3, -1.2, 0.7])
    D = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.2, 0.9]])
    f = -(D @ v) / lam
    est, k, _ = solve_velocity(D, f, lam)
    assert k == 3 and np.allclose(est, v, atol=1e-12)
    est, k, B = solve_velocity(D[:2], f[:2], lam)
    assert k == 2 and np.allclose(est, [0.3, -1.2, 0.0], atol=1e-12)
    est, k, _ = solve_velocity(D[:1], f[:1], lam)
    assert k == 1 and np.allclose(est, [0.3, 0.0, 0.0], atol=1e-12)


@given(st.floats(1e-3, 1e3))
def test_velocity_sigma_scale_invariance(c):
    rng = np.random.default_rng(2)
    D = rng.standard_normal((5, 3))
    f = rng.standard_normal(5)
    sig = rng.uniform(0.5, 2.0, 5)
    a = solve_velocity(D, f, 0.01, sig)[0]
    b = solve_velocity(D, f, 0.01, c * sig)[0]
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_velocity_subspace_dims_per_row(gallery):
    for s in gallery:
        res = solve(SolveRequest(s, noiseless(s)))
        assert res.velocity_basis.shape[0] == TABLE1_BY_KEY[s.table_row][5]["velocity"], s.name


# ---------------------------------------------------------------------------
# SIMO


def triangle(h=0.0):
    r = 20.0
    return np.array([[r * math.cos(t), r * math.sin(t), h] for t in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)])


def _grid(lo, hi, step):
    axes = [np.arange(a, b + 1e-9, step) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def test_simo_symmetric_axis_and_mirror():
    A = triangle()
    u = np.array([0.0, 0.0, 8.0])
    R = rot_zyx(EulerZYX(0.5, 0.2, -0.3))
    L = [(R.T @ (a - u)) for a in A]
    cands = simo_position_candidates(A, L, _grid((-30, -30, -15), (30, 30, 15), 1.0))
    pts = [p for p, r in cands if r < 1e-9]
    assert min(np.linalg.norm(p - u) for p in pts) < TOL
    # coplanar anchors: the mirror image across their plane fits equally well
    assert min(np.linalg.norm(p - u * [1, 1, -1]) for p in pts) < TOL


def test_simo_truth_wins_after_full_refine(rows):
    s = rows["simo_0ris_3bs"]
    res = solve(SolveRequest(s, noiseless(s)))
    assert np.linalg.norm(res.candidates[0].state.p - s.ue.p) < TOL
    residuals = [c.residual for c in res.candidates]
    assert residuals == sorted(residuals)


def test_simo_collinear_anchors():
    A = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [25.0, 0.0, 0.0]])
    with pytest.raises(NonIdentifiableError):
        simo_position_candidates(A, np.eye(3), _grid((-5, -5, -5), (5, 5, 5), 1.0))


# ---------------------------------------------------------------------------
# near field


def test_curvature_recovery_2m(nearfield):
    s = nearfield
    ris = s.riss[0]
    obs = observe(s, ris, s.ue.p, random_profiles(ris, 32, 0), gain=0.3 + 0.8j)
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonIdentifiableWarning)
        res = nf_position_from_curvature(s, obs)
    assert np.linalg.norm(res.state.p - s.ue.p) < 1e-3
    assert res.identified == {"position": 3}


def test_curvature_far_field_warns(nearfield):
    s = nearfield
    ris = s.riss[0]
    u = ris.p + 500.0 * (s.ue.p - ris.p) / np.linalg.norm(s.ue.p - ris.p)
    obs = observe(s, ris, u, random_profiles(ris, 32, 0))
    with pytest.warns(NonIdentifiableWarning, match="rank"):
        nf_position_from_curvature(s, obs)


def test_curvature_single_element_warns(nearfield):
    s = nearfield
    one = replace(s.riss[0], grid=(1, 1))
    s1 = replace(s, riss=(one,))
    obs = observe(s1, one, s.ue.p, random_profiles(one, 8, 0))
    with pytest.warns(NonIdentifiableWarning):
        nf_position_from_curvature(s1, obs)


def test_solve_rejects_unknown_nodes(rows):
    s = rows["siso_0ris_4bs"]
    ms = noiseless(rows["siso_2ris_1bs"])
    with pytest.raises(InfeasibleError, match="unknown node"):
        solve(SolveRequest(s, ms))


def test_candidates_csv(rows):
    s = rows["miso_0ris_2bs"]
    res = solve(SolveRequest(s, noiseless(s)))
    text = res.to_csv({"seed": 0})
    lines = text.splitlines()
    assert lines[1] == "component,value,residual,converged,candidate_rank"
    names = [ln.split(",")[0] for ln in lines[2:]]
    assert names == ["position_x", "position_y", "position_z", "velocity_x", "velocity_y", "velocity_z"]


def test_aod_half_line_from_predict(rows):
    # the AoD half-line of every gallery RIS passes through the UE
    for s in rows.values():
        for m in layout(s):
            if m.kind != "AoD":
                continue
            node = s.node(m.node)
            d = node.rotation @ azel_to_direction(predict(m, s, s.ue))
            w = s.ue.p - node.p
            assert np.linalg.norm(np.cross(d, w)) < 1e-9 * np.linalg.norm(w)
            assert d @ w > 0
            assert direction_to_azel(node.rotation.T @ w) == pytest.approx(predict(m, s, s.ue))
