"""Fisher-information identifiability analysis.

Ranks are taken after symmetric diagonal equilibration of the FIM, with
singular values below ``1e-8`` times the largest treated as zero. The
identifiable dimension of a block is the rank of its equivalent FIM
(Schur complement against every other unknown), evaluated as
``rank(F) - rank(F_others)``; the two agree for any PSD matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .measurements import layout
from .model import BLOCK_ORDER, BLOCK_SIZES, Parameterization, StackedModel, scenario_mask
from .scene import Scenario, UeState, validate
from .signal import nearfield_efim, nearfield_fim

RANK_TOL = 1e-8
ROUNDOFF_FLOOR = 1e-24
GIMBAL_MARGIN = 0.1


class IdentifiabilityError(ValueError):
    pass


@dataclass(frozen=True)
class Fim:
    matrix: np.ndarray
    mask: tuple
    slices: dict
    chart_singular: bool = False
    row_labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class IdentReport:
    block_dims: dict
    total_rank: int
    verdict: str
    crb: dict
    singular_values: np.ndarray
    chart_singular: bool = False

    def state_label(self) -> str:
        return state_label(self.block_dims)


def fim(s: Scenario, u: UeState, sigmas: dict | None = None, mask=None) -> Fim:
    """``J^T Sigma^-1 J`` of every forward model in the scenario's mix.

    ``sigmas`` maps kind to standard deviation (defaults from the scenario).
    Near gimbal lock the orientation block switches to a body-frame
    rotation-vector chart and ``chart_singular`` is set.
    """
    problems = validate(s)
    if problems:
        raise IdentifiabilityError("; ".join(problems))
    sig = s.all_sigmas()
    if sigmas:
        sig.update(sigmas)
    mask = scenario_mask(s) if mask is None else tuple(b for b in BLOCK_ORDER if b in mask)
    singular = "orientation" in mask and abs(u.orientation.beta) > math.pi / 2 - GIMBAL_MARGIN
    param = Parameterization(mask, u, chart="tangent" if singular else "euler")
    slots = layout(s)
    n = param.dim
    if not slots:
        return Fim(np.zeros((n, n)), param.mask, param.slices, singular)
    model = StackedModel(s, slots, param)
    weights = []
    for m in slots:
        sd = float(sig[m.kind])
        if not sd > 0:
            raise IdentifiabilityError(f"sigma for {m.kind} must be positive")
        weights += [1.0 / sd] * m.size
    J = model.jacobian(param.pack(u)) * np.asarray(weights)[:, None]
    bad = ~np.all(np.isfinite(J), axis=1)
    if bad.any():
        raise IdentifiabilityError(f"non-finite Jacobian for {model.row_labels()[int(np.argmax(bad))]}")
    F = J.T @ J
    return Fim(0.5 * (F + F.T), param.mask, param.slices, singular, tuple(model.row_labels()))


def _equilibrate(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.sqrt(np.clip(np.diag(F), 0.0, None))
    d = np.where(d > 0, d, 1.0)
    return F / np.outer(d, d), d


def matrix_rank(F: np.ndarray, tol: float = RANK_TOL) -> int:
    if F.size == 0:
        return 0
    sv = np.linalg.svd(F, compute_uv=False)
    if sv[0] <= 0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def efim(F: np.ndarray, idx, tol: float = RANK_TOL) -> np.ndarray:
    """Equivalent FIM of the unknowns ``idx`` (Schur complement of the rest)."""
    idx = np.asarray(idx)
    rest = np.setdiff1d(np.arange(F.shape[0]), idx)
    A = F[np.ix_(idx, idx)]
    if rest.size == 0:
        return A
    B = F[np.ix_(idx, rest)]
    C = F[np.ix_(rest, rest)]
    return A - B @ np.linalg.pinv(C, rcond=tol, hermitian=True) @ B.T


def ident_report(f: Fim, n_candidates: int = 1, tol: float = RANK_TOL) -> IdentReport:
    """Per-block identifiable dimensions, total rank, verdict and CRB.

    The CRB (variance, in the block's units; clock in meters squared) is
    reported for blocks whose equivalent FIM is full rank and is NaN elsewhere.
    """
    Fs, d = _equilibrate(f.matrix)
    n = Fs.shape[0]
    total = matrix_rank(Fs, tol)
    dims, crb = {}, {}
    for b, sl in f.slices.items():
        idx = np.arange(n)[sl]
        others = np.setdiff1d(np.arange(n), idx)
        dims[b] = total - matrix_rank(Fs[np.ix_(others, others)], tol)
        E = efim(Fs, idx, tol)
        if dims[b] == BLOCK_SIZES[b] and matrix_rank(E, tol) == BLOCK_SIZES[b]:
            crb[b] = np.diag(np.linalg.inv(E)) / d[idx] ** 2
        else:
            crb[b] = np.full(BLOCK_SIZES[b], np.nan)
    if total < n:
        verdict = "non-identifiable"
    elif n_candidates > 1:
        verdict = "ambiguous"
    else:
        verdict = "identifiable"
    sv = np.linalg.svd(Fs, compute_uv=False) if n else np.zeros(0)
    return IdentReport(dims, total, verdict, crb, sv, f.chart_singular)


def position_crb_rmse(report: IdentReport) -> float:
    """sqrt(trace) of the position CRB (meters)."""
    return float(np.sqrt(np.sum(report.crb["position"])))


# ---------------------------------------------------------------------------
# Table 1

TABLE1 = (
    # (row key, architecture, scenario, signalling, measurements, identifiable dims, also possible)
    ("siso_0ris_4bs", "SISO", "0 RISs, 4 BSs", "WB", "TDoA", {"position": 3, "clock": 1, "velocity": 3}, "with 3 BSs and RTT measurements"),
    ("siso_1ris_1bs", "SISO", "1 RIS, 1 BS", "WB", "TDoA, AoD", {"position": 3, "clock": 1, "velocity": 2}, "in near-field w/o LOS to BS"),
    ("siso_2ris_1bs", "SISO", "2 RISs, 1 BS", "NB", "AoD", {"position": 3, "velocity": 3}, "w/o LOS to BS"),
    ("siso_1ris_0bs", "SISO", "1 RIS, 0 BSs", "WB", "RTT, AoD", {"position": 3, "velocity": 1}, "N/A"),
    ("miso_0ris_2bs", "MISO", "0 RISs, 2 BSs", "NB", "AoD", {"position": 3, "velocity": 2}, "N/A"),
    ("miso_1ris_1bs", "MISO", "1 RIS, 1 BS", "NB", "AoD", {"position": 3, "velocity": 2}, "in near-field w/o LOS to BS"),
    ("simo_0ris_3bs", "SIMO", "0 RISs, 3 BSs", "NB", "AoA", {"position": 3, "velocity": 3, "orientation": 3}, "N/A"),
    ("simo_1ris_1bs", "SIMO", "1 RIS, 1 BS", "NB", "AoD, AoA", {"position": 3, "velocity": 2, "orientation": 3}, "N/A"),
    ("mimo_0ris_2bs", "MIMO", "0 RISs, 2 BSs", "NB", "AoD, AoA", {"position": 3, "velocity": 2, "orientation": 3}, "N/A"),
    ("mimo_1ris_1bs", "MIMO", "1 RIS, 1 BS", "NB", "AoD, AoA", {"position": 3, "velocity": 2, "orientation": 3}, "in near-field w/o LOS to BS"),
)
TABLE1_BY_KEY = {row[0]: row for row in TABLE1}

_ABBREV = {"position": "pos", "velocity": "vel", "orientation": "ori"}


def state_label(dims: dict) -> str:
    """Render block dimensions as e.g. ``3D pos, clock, 2D vel``."""
    parts = []
    for b in BLOCK_ORDER:
        k = dims.get(b, 0)
        if k <= 0:
            continue
        parts.append("clock" if b == "clock" else f"{k}D {_ABBREV[b]}")
    return ", ".join(parts)


@dataclass(frozen=True)
class TableRow:
    key: str
    architecture: str
    scenario: str
    signalling: str
    measurements: str
    expected: dict
    computed: dict
    verdict: str

    @property
    def match(self) -> bool:
        keys = set(self.expected) | {k for k, v in self.computed.items() if v > 0}
        return all(self.expected.get(k, 0) == self.computed.get(k, 0) for k in keys)


def reproduce_table(gallery) -> list[TableRow]:
    """Compute each gallery scenario's identifiable state and compare with Table 1."""
    rows = []
    for s in gallery:
        if s.table_row not in TABLE1_BY_KEY:
            raise IdentifiabilityError(f"scenario {s.name!r} does not name a table row")
        if s.ue is None:
            raise IdentifiabilityError(f"scenario {s.name!r} has no UE placement")
        key, arch, scen, sig, meas, expected, _ = TABLE1_BY_KEY[s.table_row]
        rep = ident_report(fim(s, s.ue))
        rows.append(TableRow(key, arch, scen, sig, meas, expected, dict(rep.block_dims), rep.verdict))
    return rows


def perturb_scenario(s: Scenario, scale: float, rng) -> Scenario:
    """Move every node and the UE by independent Gaussian offsets of std ``scale``."""
    def jit(p):
        return tuple(float(v) for v in np.asarray(p) + scale * rng.standard_normal(3))

    bss = tuple(replace(b, position=jit(b.position)) for b in s.bss)
    riss = tuple(replace(r, center=jit(r.center)) for r in s.riss)
    ue = replace(s.ue, position=jit(s.ue.position)) if s.ue is not None else None
    return replace(s, bss=bss, riss=riss, ue=ue)


def table_text(rows) -> str:
    head = ("", "Scenario", "Signalling", "Measurements", "Identifiable State", "Computed", "Match")
    body = [
        (r.architecture, r.scenario, r.signalling, r.measurements, state_label(r.expected), state_label(r.computed), "yes" if r.match else "NO")
        for r in rows
    ]
    widths = [max(len(str(x[i])) for x in [head, *body]) for i in range(len(head))]
    fmt = " | ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
    lines += [fmt.format(*b) for b in body]
    n_ok = sum(r.match for r in rows)
    lines.append(f"{n_ok}/{len(rows)} rows match")
    return "\n".join(lines)


def table_csv(rows) -> str:
    lines = ["architecture,scenario,signalling,measurements,expected,computed,pos,clock,vel,ori,match"]
    for r in rows:
        c = r.computed
        lines.append(
            f'{r.architecture},"{r.scenario}",{r.signalling},"{r.measurements}","{state_label(r.expected)}",'
            f'"{state_label(c)}",{c.get("position", 0)},{c.get("clock", 0)},{c.get("velocity", 0)},'
            f'{c.get("orientation", 0)},{int(r.match)}'
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# near-field sweep


@dataclass(frozen=True)
class NearFieldPoint:
    range_m: float
    position_rank: int
    singular_values: np.ndarray
    report: IdentReport = field(repr=False)


def fraunhofer_distance(s: Scenario, ris) -> float:
    """``2 D^2 / lambda`` with ``D`` the RIS diagonal aperture."""
    nx, ny = ris.grid
    D = math.hypot((nx - 1) * ris.spacing, (ny - 1) * ris.spacing)
    return 2.0 * D**2 / s.wavelength


def nearfield_position_report(s: Scenario, ris, ue_pos, profiles) -> IdentReport:
    """Position identifiability from signal-level samples with unknown complex gain."""
    E = nearfield_efim(s, ris, ue_pos, profiles)
    # directions whose information is at round-off level relative to the raw
    # (gain-coupled) position information are exact zeros, not weak data
    raw = np.trace(nearfield_fim(s, ris, ue_pos, profiles)[:3, :3])
    lam, V = np.linalg.eigh(E)
    lam = np.where(lam > ROUNDOFF_FLOOR * raw, lam, 0.0)
    E = (V * lam) @ V.T
    Es, d = _equilibrate(E)
    dims = {"position": matrix_rank(Es)}
    if dims["position"] == 3:
        crb = {"position": np.diag(np.linalg.inv(Es)) / d**2}
    else:
        crb = {"position": np.full(3, np.nan)}
    verdict = "identifiable" if dims["position"] == 3 else "non-identifiable"
    return IdentReport(dims, dims["position"], verdict, crb, np.linalg.svd(Es, compute_uv=False))


def nearfield_ident_sweep(s: Scenario, ranges, direction=None, profiles=None, n_profiles: int = 32, seed: int = 0) -> list[NearFieldPoint]:
    """Position-FIM rank along a ray from the RIS center, one point per range.

    Uses the exact spherical-wave model of the single RIS (direct path
    blocked) with random phase profiles and an unknown complex path gain.
    """
    if len(s.riss) != 1:
        raise IdentifiabilityError("near-field sweep needs a single-RIS scenario")
    ris = s.riss[0]
    if direction is None:
        if s.ue is not None:
            direction = s.ue.p - ris.p
        else:
            direction = ris.rotation @ np.array([1.0, 0.3, 0.2])
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    if profiles is None:
        from .signal import random_profiles

        profiles = random_profiles(ris, n_profiles, seed)
    out = []
    for r in ranges:
        rep = nearfield_position_report(s, ris, ris.p + r * direction, profiles)
        out.append(NearFieldPoint(float(r), rep.block_dims["position"], rep.singular_values, rep))
    return out


def rank_drop_range(points) -> float | None:
    """First range in the sweep where the position rank falls below 3."""
    for p in points:
        if p.position_rank < 3:
            return p.range_m
    return None
