"""Complex-baseband RIS propagation and the two-RIS beam-sweep locator.

Amplitude model: unit per-element gain with cascaded ``1/(d1*d2)``
spreading and no reflection-efficiency constant. Absolute scale cancels in
every normalized quantity produced here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import azel_to_direction
from .scene import RisNode, Scenario, UeState, ris_element_positions


class DegenerateGeometryError(ValueError):
    pass


def _as_pos(x) -> np.ndarray:
    if isinstance(x, UeState):
        return x.p
    if hasattr(x, "p"):
        return x.p
    return np.asarray(x, dtype=float)


def element_channel(bs, ris: RisNode, ue, wavelength: float) -> np.ndarray:
    """Per-element cascaded coefficients ``exp(-jk(d1+d2)) / (d1 d2)``."""
    pb, pu = _as_pos(bs), _as_pos(ue)
    el = ris_element_positions(ris)
    d1 = np.linalg.norm(el - pb, axis=1)
    d2 = np.linalg.norm(el - pu, axis=1)
    if np.any(d1 < 1e-12) or np.any(d2 < 1e-12):
        raise DegenerateGeometryError("BS or UE coincides with a RIS element")
    k = 2.0 * np.pi / wavelength
    return np.exp(-1j * k * (d1 + d2)) / (d1 * d2)


def element_channel_grad(bs, ris: RisNode, ue, wavelength: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients and their gradient w.r.t. UE position, shapes ``(N,)`` and ``(N, 3)``."""
    pu = _as_pos(ue)
    a = element_channel(bs, ris, pu, wavelength)
    diff = pu - ris_element_positions(ris)
    d2 = np.linalg.norm(diff, axis=1)
    k = 2.0 * np.pi / wavelength
    da = (a * (-1j * k - 1.0 / d2) / d2)[:, None] * diff
    return a, da


def nf_received(s: Scenario, ris: RisNode, u, profile=None, bs=None) -> complex:
    """Exact spherical-wave received amplitude: sum of per-element rays."""
    bs = s.bss[0] if bs is None else bs
    ph = ris.phases if profile is None else np.asarray(profile, dtype=float)
    return complex(np.sum(element_channel(bs, ris, u, s.wavelength) * np.exp(1j * ph)))


def ff_received(s: Scenario, ris: RisNode, u, profile=None, bs=None) -> complex:
    """Plane-wave approximation about the RIS center."""
    bs = s.bss[0] if bs is None else bs
    pb, pu, c = _as_pos(bs), _as_pos(u), ris.p
    ph = ris.phases if profile is None else np.asarray(profile, dtype=float)
    d1, d2 = np.linalg.norm(pb - c), np.linalg.norm(pu - c)
    if d1 < 1e-12 or d2 < 1e-12:
        raise DegenerateGeometryError("BS or UE coincides with the RIS center")
    k = 2.0 * np.pi / s.wavelength
    u_in, u_out = (pb - c) / d1, (pu - c) / d2
    e = ris_element_positions(ris) - c
    af = np.sum(np.exp(1j * (k * e @ (u_in + u_out) + ph)))
    return complex(np.exp(-1j * k * (d1 + d2)) / (d1 * d2) * af)


def conjugate_profile(ris: RisNode, bs, target_dir, wavelength: float) -> np.ndarray:
    """Far-field phase profile steering the incident wave toward ``target_dir`` (global)."""
    pb = _as_pos(bs)
    c = ris.p
    u_in = (pb - c) / np.linalg.norm(pb - c)
    u_out = np.asarray(target_dir, dtype=float)
    u_out = u_out / np.linalg.norm(u_out)
    e = ris_element_positions(ris) - c
    k = 2.0 * np.pi / wavelength
    return np.mod(-k * e @ (u_in + u_out), 2.0 * np.pi)


def focusing_profile(ris: RisNode, bs, ue, wavelength: float) -> np.ndarray:
    """Near-field phase profile making every element ray arrive in phase at ``ue``."""
    return np.mod(-np.angle(element_channel(bs, ris, ue, wavelength)), 2.0 * np.pi)


@dataclass(frozen=True)
class Codebook:
    ris_id: str
    profiles: np.ndarray  # (n_beams, n_elements)
    labels: np.ndarray  # azimuth labels, RIS local frame, strictly increasing
    elevation: float = 0.0

    def __len__(self) -> int:
        return len(self.labels)


N_BEAMS = 63
AZ_SPAN = float(np.deg2rad(120.0))


def make_codebook(ris: RisNode, n_beams: int, az_span: float, bs, wavelength: float, elevation: float = 0.0) -> Codebook:
    """Steering beams toward ``n_beams`` azimuths equally spaced over ``az_span``, centered on boresight."""
    if n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    if n_beams == 1:
        labels = np.zeros(1)
    else:
        labels = np.linspace(-az_span / 2.0, az_span / 2.0, n_beams)
    R = ris.rotation
    profiles = np.array(
        [conjugate_profile(ris, bs, R @ azel_to_direction((az, elevation)), wavelength) for az in labels]
    )
    return Codebook(ris.id, profiles, labels, elevation)


def codebook_csv(cb: Codebook) -> str:
    n = cb.profiles.shape[1]
    head = "beam,az_label," + ",".join(f"phase{i}" for i in range(n))
    rows = [head]
    for b, (lab, ph) in enumerate(zip(cb.labels, cb.profiles)):
        rows.append(f"{b},{float(lab)!r}," + ",".join(repr(float(x)) for x in ph))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# beam sweep


@dataclass(frozen=True)
class Grid2D:
    x0: float
    y0: float
    x1: float
    y1: float
    step: float

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        if not (self.step > 0 and self.x1 > self.x0 and self.y1 > self.y0):
            raise DegenerateGeometryError("degenerate grid")
        nx = int(np.floor((self.x1 - self.x0) / self.step + 1e-9)) + 1
        ny = int(np.floor((self.y1 - self.y0) / self.step + 1e-9)) + 1
        return self.x0 + self.step * np.arange(nx), self.y0 + self.step * np.arange(ny)

    @classmethod
    def parse(cls, text: str) -> "Grid2D":
        vals = [float(v) for v in text.split(",")]
        if len(vals) != 5:
            raise ValueError("grid must be X0,Y0,X1,Y1,STEP")
        return cls(*vals)


@dataclass(frozen=True)
class PowerMap:
    xs: np.ndarray
    ys: np.ndarray
    z: float
    score: np.ndarray  # (len(ys), len(xs)), rows are y
    beam_power: dict  # ris id -> normalized power per beam
    best_beam: dict  # ris id -> index of the strongest beam

    def argmax(self) -> tuple[int, int]:
        i = int(np.argmax(self.score))  # first maximum in row-major order
        return divmod(i, self.score.shape[1])

    def to_csv(self, meta: dict | None = None) -> str:
        lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
        lines.append("x,y,score")
        for r, y in enumerate(self.ys):
            for c, x in enumerate(self.xs):
                lines.append(f"{float(x)!r},{float(y)!r},{float(self.score[r, c])!r}")
        return "\n".join(lines) + "\n"


def noise_sigma_for_snr(s: Scenario, u, codebooks, snr_db: float) -> float:
    """Complex noise std giving ``snr_db`` on the weakest RIS's strongest beam."""
    peaks = []
    for cb in codebooks:
        ris = s.node(cb.ris_id)
        a = element_channel(s.bss[0], ris, u, s.wavelength)
        peaks.append(np.max(np.abs(np.exp(1j * cb.profiles) @ a)))
    return float(min(peaks) / 10.0 ** (snr_db / 20.0))


def sweep_powers(s: Scenario, u, cb: Codebook, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Received power per beam through one RIS (near-field model, complex AWGN)."""
    ris = s.node(cb.ris_id)
    y = np.exp(1j * cb.profiles) @ element_channel(s.bss[0], ris, u, s.wavelength)
    if noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        n = rng.standard_normal((len(y), 2)) @ np.array([1.0, 1j])
        y = y + noise_sigma / np.sqrt(2.0) * n
    return np.abs(y) ** 2


def beam_sweep_estimate(s: Scenario, u_true, codebooks, grid: Grid2D, noise_sigma: float = 0.0, seed=None):
    """Locate the UE in 2D from per-RIS beam sweeps.

    Each RIS's beam powers are normalized by their maximum; a grid cell scores
    the sum over RISs of the normalized power of the beam whose azimuth label
    is nearest the cell's azimuth seen from that RIS. The estimate is the
    first highest-scoring cell center in row-major order.
    """
    if len(codebooks) != 2:
        raise ValueError("beam sweep localization needs exactly two RIS codebooks")
    xs, ys = grid.axes()
    z = float(s.node(codebooks[0].ris_id).p[2])
    X, Y = np.meshgrid(xs, ys)
    cells = np.stack([X, Y, np.full_like(X, z)], axis=-1)
    rng = np.random.default_rng(seed)
    score = np.zeros(X.shape)
    powers, best = {}, {}
    for cb in codebooks:
        ris = s.node(cb.ris_id)
        p = sweep_powers(s, u_true, cb, noise_sigma, rng)
        pn = p / np.max(p)
        powers[cb.ris_id], best[cb.ris_id] = pn, int(np.argmax(pn))
        local = (cells - ris.p) @ ris.rotation
        az = np.arctan2(local[..., 1], local[..., 0])
        score += pn[nearest_label(cb.labels, az)]
    pm = PowerMap(xs, ys, z, score, powers, best)
    r, c = pm.argmax()
    return pm, np.array([xs[c], ys[r], z])


def nearest_label(labels: np.ndarray, az: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(labels, az), 1, len(labels) - 1) if len(labels) > 1 else np.zeros(np.shape(az), int)
    if len(labels) == 1:
        return idx
    left, right = labels[idx - 1], labels[idx]
    return np.where(np.abs(az - left) <= np.abs(right - az), idx - 1, idx)


# ---------------------------------------------------------------------------
# signal-level observations for near-field positioning


@dataclass(frozen=True)
class NearFieldObservations:
    """Received samples through one RIS for a set of phase profiles."""

    ris_id: str
    profiles: np.ndarray  # (K, N)
    samples: np.ndarray  # (K,) complex
    noise_sigma: float = 0.0


def random_profiles(ris: RisNode, n_profiles: int, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=(n_profiles, ris.n_elements))


def observe(s: Scenario, ris: RisNode, u, profiles, gain: complex = 1.0, noise_sigma: float = 0.0, seed=None) -> NearFieldObservations:
    """Synthesize ``y_k = gain * sum_e a_e exp(j phi_ke) + noise``."""
    w = np.exp(1j * np.asarray(profiles, dtype=float))
    y = gain * (w @ element_channel(s.bss[0], ris, u, s.wavelength))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + noise_sigma / np.sqrt(2.0) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return NearFieldObservations(ris.id, np.asarray(profiles, dtype=float), y, noise_sigma)


def nearfield_fim(s: Scenario, ris: RisNode, ue_pos, profiles, gain: complex = 1.0, noise_sigma: float = 1.0) -> np.ndarray:
    """FIM over ``[x, y, z, Re g, Im g]`` for complex-Gaussian samples with unknown gain ``g``."""
    w = np.exp(1j * np.asarray(profiles, dtype=float))
    a, da = element_channel_grad(s.bss[0], ris, ue_pos, s.wavelength)
    m = w @ a  # (K,)
    dm = np.concatenate([gain * (w @ da), m[:, None], 1j * m[:, None]], axis=1)  # (K, 5)
    return 2.0 / noise_sigma**2 * np.real(dm.conj().T @ dm)


def nearfield_efim(s: Scenario, ris: RisNode, ue_pos, profiles, gain: complex = 1.0, noise_sigma: float = 1.0) -> np.ndarray:
    """Position FIM with the unknown complex gain eliminated, shape ``(3, 3)``.

    Equal to the Schur complement of :func:`nearfield_fim` on the gain block,
    but computed by projecting the position Jacobian off ``span{m, jm}``,
    which keeps the weak range (curvature) direction above round-off.
    """
    w = np.exp(1j * np.asarray(profiles, dtype=float))
    a, da = element_channel_grad(s.bss[0], ris, ue_pos, s.wavelength)
    m = w @ a
    J = gain * (w @ da)
    mm = np.real(np.vdot(m, m))
    if mm > 0:
        J = J - np.outer(m, m.conj() @ J) / mm
    return 2.0 / noise_sigma**2 * np.real(J.conj().T @ J)
