"""Solve requests/results, the generic refiner and geometric building blocks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import EulerZYX, azel_to_direction, euler_from_rot
from ..identifiability import fim, ident_report
from ..measurements import MeasurementSet, Path, radial_direction
from ..model import BLOCK_SIZES, Parameterization, StackedModel, scenario_mask
from ..scene import SPEED_OF_LIGHT, Scenario, UeState
from .lm import MAX_ITER, STEP_TOL, levenberg_marquardt

RANK_TOL = 1e-8


class SolverError(ValueError):
    """Base class for solver failures."""


class InfeasibleError(SolverError):
    """Measurements admit no solution under the solver's geometry."""


class NonIdentifiableError(SolverError):
    """The geometry leaves a continuum of solutions."""


class NonIdentifiableWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HalfLine:
    origin: np.ndarray
    direction: np.ndarray

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass
class SolveRequest:
    scenario: Scenario
    measurements: MeasurementSet
    mask: tuple | None = None
    initial: UeState | None = None
    grid_step: float = 1.0
    diagnostics: bool = True  # FIM rank check of the estimate

    def resolved_mask(self) -> tuple:
        return scenario_mask(self.scenario) if self.mask is None else tuple(self.mask)


@dataclass
class Candidate:
    state: UeState
    residual: float
    converged: bool = True


@dataclass
class SolveResult:
    """Estimated state plus diagnostics.

    ``identified`` maps each block to the dimension actually recovered
    (e.g. ``velocity: 2``); blocks with dimension 0 are not claimed.
    ``velocity_basis`` spans the identifiable velocity subspace.
    """

    state: UeState
    residual_norm: float
    iterations: int
    converged: bool
    candidates: list = field(default_factory=list)
    identified: dict = field(default_factory=dict)
    velocity_basis: np.ndarray | None = None
    solver: str = ""
    warnings: list = field(default_factory=list)

    def to_csv(self, meta: dict | None = None) -> str:
        lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
        lines.append("component,value,residual,converged,candidate_rank")
        cands = self.candidates or [Candidate(self.state, self.residual_norm, self.converged)]
        for rank, c in enumerate(cands):
            for name, val in state_components(c.state, self.identified):
                lines.append(f"{name},{float(val)!r},{float(c.residual)!r},{int(c.converged)},{rank}")
        return "\n".join(lines) + "\n"


def state_components(u: UeState, identified: dict) -> list[tuple[str, float]]:
    out = []
    if identified.get("position", 0):
        out += [(f"position_{a}", float(v)) for a, v in zip("xyz", u.position)]
    if identified.get("clock", 0):
        out.append(("clock_bias", float(u.clock_bias)))
    if identified.get("velocity", 0):
        out += [(f"velocity_{a}", float(v)) for a, v in zip("xyz", u.velocity)]
    if identified.get("orientation", 0):
        out += [(n, float(v)) for n, v in zip(("alpha", "beta", "gamma"), u.orientation.as_array())]
    return out


# ---------------------------------------------------------------------------
# weighted stacked residuals


def _slots_and_weights(s: Scenario, ms: MeasurementSet):
    slots = list(ms.measurements)
    w = []
    for m in slots:
        sd = m.sigma if m.sigma > 0 else s.sigma(m.kind)
        w += [1.0 / sd] * m.size
    return slots, np.asarray(w)


def weighted_problem(s: Scenario, ms: MeasurementSet, mask, base: UeState):
    slots, w = _slots_and_weights(s, ms)
    param = Parameterization(mask, base)
    model = StackedModel(s, slots, param)
    z = ms.vector()

    def residual(x):
        return model.difference(model(x), z) * w

    def jacobian(x):
        return model.jacobian(x) * w[:, None]

    return param, residual, jacobian


def refine(req: SolveRequest, max_iter: int = MAX_ITER, step_tol: float = STEP_TOL) -> SolveResult:
    """Local weighted least squares over every masked unknown.

    Minimizes ``sum(((model - measured) / sigma)^2)`` with wrapped azimuth
    residuals, starting from ``req.initial``.
    """
    if req.initial is None:
        raise SolverError("refine needs an initial guess")
    mask = req.resolved_mask()
    param, residual, jacobian = weighted_problem(req.scenario, req.measurements, mask, req.initial)
    res = levenberg_marquardt(residual, jacobian, param.pack(req.initial), max_iter, step_tol)
    state = param.unpack(res.x)
    state = replace(state, orientation=_canonical(state.orientation))
    return SolveResult(state, math.sqrt(res.cost), res.iterations, res.converged, solver="refine")


def residual_norm(s: Scenario, ms: MeasurementSet, u: UeState, mask=None) -> float:
    mask = scenario_mask(s) if mask is None else mask
    param, residual, _ = weighted_problem(s, ms, mask, u)
    r = residual(param.pack(u))
    return float(np.linalg.norm(r))


def _canonical(e: EulerZYX) -> EulerZYX:
    from ..geometry import rot_zyx

    return euler_from_rot(rot_zyx(e))


# ---------------------------------------------------------------------------
# geometric primitives


def halfline_from_aod(node, az_el) -> HalfLine:
    d = node.rotation @ azel_to_direction(tuple(az_el))
    return HalfLine(node.p.copy(), d / np.linalg.norm(d))


def solve_two_halflines(h1: HalfLine, h2: HalfLine, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Midpoint of the common perpendicular of two half-lines and its length.

    Negative line parameters are rejected rather than clamped.
    """
    d1, d2 = np.asarray(h1.direction, float), np.asarray(h2.direction, float)
    w0 = np.asarray(h1.origin, float) - np.asarray(h2.origin, float)
    a, b, c = d1 @ d1, d1 @ d2, d2 @ d2
    d, e = d1 @ w0, d2 @ w0
    den = a * c - b * b
    if den <= 1e-12 * a * c:
        raise NonIdentifiableError("parallel half-lines do not intersect in a point")
    t1 = (b * e - c * d) / den
    t2 = (a * e - b * d) / den
    scale = max(1.0, float(np.linalg.norm(w0)))
    if t1 < -tol * scale or t2 < -tol * scale:
        raise InfeasibleError(f"half-lines meet behind an origin (t1={t1:.3g}, t2={t2:.3g})")
    p1 = h1.origin + t1 * d1
    p2 = h2.origin + t2 * d2
    return (p1 + p2) / 2.0, float(np.linalg.norm(p1 - p2))


def solve_orientation(global_dirs, local_dirs) -> EulerZYX:
    """Rotation ``R`` minimizing ``sum |R^T g_i - l_i|^2`` (orthogonal Procrustes), as ZYX angles."""
    G = np.atleast_2d(np.asarray(global_dirs, dtype=float))
    L = np.atleast_2d(np.asarray(local_dirs, dtype=float))
    if len(G) < 2:
        raise NonIdentifiableError("orientation needs at least two direction pairs")
    G = G / np.linalg.norm(G, axis=1, keepdims=True)
    L = L / np.linalg.norm(L, axis=1, keepdims=True)
    if np.linalg.matrix_rank(G, tol=1e-9) < 2 or np.linalg.matrix_rank(L, tol=1e-9) < 2:
        raise NonIdentifiableError("orientation is underdetermined by parallel directions")
    M = G.T @ L  # sum g_i l_i^T; R l_i ~ g_i
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return euler_from_rot(U @ D @ Vt)


def solve_velocity(directions, dopplers, wavelength: float, sigmas=None) -> tuple[np.ndarray, int, np.ndarray]:
    """Minimum-norm weighted LS for ``-(1/lambda) g_i . v = f_i``.

    ``directions`` are path-length gradients (unit vectors, doubled for
    echoes). Returns the velocity, the identifiable dimension and an
    orthonormal basis (rows) of the identifiable subspace.
    """
    G = np.atleast_2d(np.asarray(directions, dtype=float))
    f = np.asarray(dopplers, dtype=float)
    if f.size == 0:
        return np.zeros(3), 0, np.zeros((0, 3))
    w = np.ones(f.size) if sigmas is None else 1.0 / np.asarray(sigmas, dtype=float)
    A = G * w[:, None]
    y = -wavelength * f * w
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    k = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    v = Vt[:k].T @ ((U[:, :k].T @ y) / sv[:k])
    return v, k, Vt[:k]


def velocity_from_measurements(s: Scenario, ms: MeasurementSet, position) -> tuple[np.ndarray, int, np.ndarray]:
    dop = ms.of_kind("Doppler")
    dirs = [radial_direction(Path.parse(m.node), s, position) for m in dop]
    sig = [m.sigma if m.sigma > 0 else s.sigma("Doppler") for m in dop]
    return solve_velocity(dirs, [m.value[0] for m in dop], s.wavelength, sig if dop else None)


def clock_from_toas(s: Scenario, ms: MeasurementSet, position) -> float:
    """Mean of ``ToA_i - L_i/c`` over the one-way delay measurements."""
    from ..measurements import path_length

    u = UeState(tuple(position))
    vals = [m.value[0] - path_length(Path.parse(m.node), s, u) / SPEED_OF_LIGHT for m in ms.of_kind("ToA")]
    return float(np.mean(vals)) if vals else 0.0


# ---------------------------------------------------------------------------
# shared finishing stage


def finish(req: SolveRequest, seeds, solver: str, orientation_fn=None) -> SolveResult:
    """Complete each seed position into a full state, refine, rank candidates.

    ``orientation_fn(position) -> EulerZYX`` is used when orientation is masked.
    """
    s, ms = req.scenario, req.measurements
    mask = req.resolved_mask()
    cands: list[Candidate] = []
    results: list[SolveResult] = []
    for p in seeds:
        p = np.asarray(p, dtype=float)
        clock = clock_from_toas(s, ms, p) if "clock" in mask else 0.0
        vel = velocity_from_measurements(s, ms, p)[0] if "velocity" in mask else np.zeros(3)
        ori = EulerZYX()
        if "orientation" in mask and orientation_fn is not None:
            try:
                ori = orientation_fn(p)
            except SolverError:
                continue
        init = UeState(tuple(p), tuple(vel), clock, ori)
        res = refine(SolveRequest(s, ms, mask, init, req.grid_step, False))
        results.append(res)
    if not results:
        raise InfeasibleError(f"{solver}: no admissible candidate")
    order = sorted(range(len(results)), key=lambda i: results[i].residual_norm)
    kept: list[SolveResult] = []
    for i in order:
        r = results[i]
        if all(np.linalg.norm(r.state.p - k.state.p) > 1e-6 for k in kept):
            kept.append(r)
    best = kept[0]
    state = best.state
    basis = None
    identified = {}
    if "velocity" in mask:
        _, k, basis = velocity_from_measurements(s, ms, state.p)
        v = basis.T @ (basis @ state.v) if k else np.zeros(3)
        state = replace(state, velocity=tuple(float(x) for x in v))
    notes = []
    if not req.diagnostics:
        identified = {b: BLOCK_SIZES[b] for b in mask}
        cands = [Candidate(state if r is best else r.state, r.residual_norm, r.converged) for r in kept]
        return SolveResult(state, best.residual_norm, best.iterations, best.converged, cands, identified, basis, solver)
    rep = ident_report(fim(s, state, mask=mask), n_candidates=len(kept))
    identified = {b: d for b, d in rep.block_dims.items() if d > 0}
    for b in mask:
        d = rep.block_dims.get(b, 0)
        if d < BLOCK_SIZES[b]:
            notes.append(f"{b}: rank {d} of {BLOCK_SIZES[b]} at the estimate")
    # partial velocity is expected for rows with fewer than three Doppler directions
    if any(rep.block_dims.get(b, 0) < BLOCK_SIZES[b] for b in mask if b != "velocity"):
        warnings.warn("; ".join(notes), NonIdentifiableWarning, stacklevel=3)
    cands = [Candidate(state if r is best else r.state, r.residual_norm, r.converged) for r in kept]
    return SolveResult(
        state,
        best.residual_norm,
        best.iterations,
        best.converged,
        cands,
        identified,
        basis,
        solver,
        notes,
    )
