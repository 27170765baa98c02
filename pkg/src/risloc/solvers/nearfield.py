"""Position from wavefront curvature through a single RIS with the direct path blocked."""

from __future__ import annotations

import warnings

import numpy as np

from ..geometry import azel_to_direction, direction_to_azel
from ..identifiability import nearfield_position_report
from ..scene import Scenario, UeState
from ..signal import NearFieldObservations, element_channel
from .core import InfeasibleError, NonIdentifiableWarning, SolveResult
from .lm import levenberg_marquardt

ANGLE_STEP = np.deg2rad(2.0)
N_RANGES = 48
MAX_RANGE = 5000.0


def _seed_grid(ris, max_range: float):
    half = np.pi / 2 - ANGLE_STEP
    az = np.arange(-half, half + 1e-12, ANGLE_STEP)
    el = np.arange(-half, half + 1e-12, ANGLE_STEP)
    A, E = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    dirs = dirs @ ris.rotation.T
    nx, ny = ris.grid
    aperture = max(nx, ny) * ris.spacing
    ranges = np.geomspace(max(2.0 * aperture, 0.05), max_range, N_RANGES)
    return dirs, ranges


def _profile_cost(s: Scenario, ris, obs: NearFieldObservations, pts: np.ndarray) -> np.ndarray:
    """``||y||^2 - |m^H y|^2 / ||m||^2`` with the gain eliminated, for each point."""
    W = np.exp(1j * obs.profiles)
    y = obs.samples
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        m = W @ element_channel(s.bss[0], ris, p, s.wavelength)
        mm = np.real(np.vdot(m, m))
        out[i] = np.real(np.vdot(y, y)) - (abs(np.vdot(m, y)) ** 2 / mm if mm > 0 else 0.0)
    return out


def nf_position_from_curvature(
    s: Scenario,
    obs: NearFieldObservations,
    max_range: float = MAX_RANGE,
    n_seeds: int = 4,
) -> SolveResult:
    """Maximum-likelihood UE position from signal samples with an unknown complex gain.

    A coarse search over directions (2 degree steps in the RIS half-space)
    and log-spaced ranges picks seeds on the gain-profiled likelihood;
    Levenberg-Marquardt then refines the position on the gain-profiled
    complex residuals. The FIM at the estimate decides identifiability; a
    rank-deficient position block raises :class:`NonIdentifiableWarning`.
    """
    ris = s.node(obs.ris_id)
    if obs.profiles.shape[0] < 2:
        raise InfeasibleError("curvature localization needs at least two phase profiles")
    W = np.exp(1j * obs.profiles)
    y = obs.samples
    bs = s.bss[0]

    dirs, ranges = _seed_grid(ris, max_range)
    # score directions at a mid range first, then scan range along the best ones
    mid = np.sqrt(ranges[0] * ranges[-1])
    c_dir = _profile_cost(s, ris, obs, ris.p + mid * dirs)
    top = np.argsort(c_dir, kind="stable")[: 4 * n_seeds]
    pts = (ris.p + ranges[:, None, None] * dirs[top][None, :, :]).reshape(-1, 3)
    c = _profile_cost(s, ris, obs, pts)
    seeds = pts[np.argsort(c, kind="stable")[:n_seeds]]

    # variable projection: the gain is profiled out and the position is
    # parameterized as RIS-local (az, el, log r), which keeps the range
    # direction (weak curvature information) well scaled
    R, c = ris.rotation, ris.p

    def to_pos(q):
        return c + np.exp(q[2]) * (R @ azel_to_direction((q[0], q[1])))

    def residual(q):
        m = W @ element_channel(bs, ris, to_pos(q), s.wavelength)
        r = y - m * (np.vdot(m, y) / np.real(np.vdot(m, m)))
        return np.concatenate([r.real, r.imag])

    def jacobian(q):
        h = 1e-7
        return np.stack([(residual(q + h * e) - residual(q - h * e)) / (2 * h) for e in np.eye(3)], axis=1)

    best = None
    for p0 in seeds:
        v = R.T @ (p0 - c)
        az, el = direction_to_azel(v)
        res = levenberg_marquardt(residual, jacobian, np.array([az, el, np.log(np.linalg.norm(v))]))
        if best is None or res.cost < best.cost:
            best = res
    p = to_pos(best.x)
    state = UeState(tuple(float(v) for v in p))
    rep = nearfield_position_report(s, ris, p, obs.profiles)
    out = SolveResult(
        state,
        float(np.sqrt(best.cost)),
        best.iterations,
        best.converged,
        identified={"position": rep.block_dims["position"]},
        solver="nf_curvature",
    )
    if rep.block_dims["position"] < 3:
        sv = ", ".join(f"{v:.3g}" for v in rep.singular_values)
        msg = f"position not identifiable from curvature: FIM position rank {rep.block_dims['position']} (singular values {sv})"
        out.warnings.append(msg)
        warnings.warn(msg, NonIdentifiableWarning, stacklevel=2)
    return out

