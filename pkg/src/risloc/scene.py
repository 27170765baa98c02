"""Radio scene description and scenario files.

A scenario file is YAML with the keys written by :func:`save`; see the
README for the full schema. Lengths are meters, angles radians,
frequencies Hz, clock bias seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .geometry import EulerZYX, rot_zyx

SPEED_OF_LIGHT = 299_792_458.0

MEASUREMENT_KINDS = ("ToA", "TDoA", "RTT", "AoD", "AoA", "Doppler")
DELAY_KINDS = frozenset({"ToA", "TDoA", "RTT"})
SIGNALING = ("WB", "NB")

# Per-kind default standard deviations (s, s, s, rad, rad, Hz).
DEFAULT_SIGMAS = {
    "ToA": 1e-9,
    "TDoA": 1e-9,
    "RTT": 1e-9,
    "AoD": 1e-2,
    "AoA": 1e-2,
    "Doppler": 1.0,
}

WB_RULE = "ToA-class measurement requires WB"


class ScenarioError(ValueError):
    """Malformed scenario document or inconsistent scenario."""


@dataclass(frozen=True)
class Antenna:
    """Uniform planar array; ``nx == ny == 1`` is a single antenna."""

    nx: int = 1
    ny: int = 1
    spacing: float = 0.0

    @property
    def is_array(self) -> bool:
        return self.nx * self.ny > 1


SINGLE = Antenna()


@dataclass(frozen=True)
class UeState:
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    clock_bias: float = 0.0
    orientation: EulerZYX = EulerZYX()

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.velocity, dtype=float)

    @property
    def rotation(self) -> np.ndarray:
        return rot_zyx(self.orientation)


@dataclass(frozen=True)
class BsNode:
    id: str
    position: tuple
    orientation: EulerZYX = EulerZYX()
    antenna: Antenna = SINGLE

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def rotation(self) -> np.ndarray:
        return rot_zyx(self.orientation)


@dataclass(frozen=True)
class RisNode:
    """Planar RIS. Elements lie in the local y-z plane, boresight is local +x.

    Element ``e = i * ny + j`` sits at local ``(0, (i - (nx-1)/2) s, (j - (ny-1)/2) s)``.
    """

    id: str
    center: tuple
    orientation: EulerZYX = EulerZYX()
    grid: tuple = (1, 1)
    spacing: float = 0.0
    phase_profile: tuple = ()

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def rotation(self) -> np.ndarray:
        return rot_zyx(self.orientation)

    @property
    def n_elements(self) -> int:
        return int(self.grid[0]) * int(self.grid[1])

    @property
    def phases(self) -> np.ndarray:
        if not self.phase_profile:
            return np.zeros(self.n_elements)
        return np.asarray(self.phase_profile, dtype=float)

    def with_phases(self, phases) -> "RisNode":
        ph = np.mod(np.asarray(phases, dtype=float), 2.0 * np.pi)
        return replace(self, phase_profile=tuple(float(x) for x in ph))


def ris_local_offsets(r: RisNode) -> np.ndarray:
    """Element offsets from the center in the RIS local frame, ``(N, 3)``."""
    nx, ny = int(r.grid[0]), int(r.grid[1])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    y = (i.ravel() - (nx - 1) / 2.0) * r.spacing
    z = (j.ravel() - (ny - 1) / 2.0) * r.spacing
    return np.stack([np.zeros_like(y), y, z], axis=1)


def ris_element_positions(r: RisNode) -> np.ndarray:
    """Global element positions, ``(nx*ny, 3)``; centroid equals ``r.center``."""
    return r.p + ris_local_offsets(r) @ r.rotation.T


@dataclass(frozen=True)
class Scenario:
    name: str
    bss: tuple = ()
    riss: tuple = ()
    signaling: str = "WB"
    bandwidth_hz: float | None = None
    ue_antenna: Antenna = SINGLE
    carrier_hz: float = 28e9
    measurement_mix: frozenset = frozenset()
    los_blocked: frozenset = frozenset()
    table_row: str | None = None
    ue: UeState | None = None
    sigmas: Mapping = field(default_factory=dict)
    search_box: tuple | None = None

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def node(self, node_id: str) -> BsNode | RisNode:
        for n in (*self.bss, *self.riss):
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def sigma(self, kind: str) -> float:
        return float(self.sigmas.get(kind, DEFAULT_SIGMAS[kind]))

    def all_sigmas(self) -> dict:
        return {k: self.sigma(k) for k in MEASUREMENT_KINDS}

    def bounding_box(self, scale: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
        """Search box: explicit ``search_box`` or node bbox scaled about its center."""
        if self.search_box is not None:
            lo, hi = self.search_box
            return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        pts = np.array([n.p for n in (*self.bss, *self.riss)])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0 * scale
        half = np.maximum(half, 1.0)
        return mid - half, mid + half


def validate(s: Scenario) -> list[str]:
    """Return the list of violated rules; empty means the scenario is usable."""
    out: list[str] = []
    mix = set(s.measurement_mix)
    if not s.bss and not s.riss:
        out.append("bss/riss: no anchors")
    unknown = mix - set(MEASUREMENT_KINDS)
    if unknown:
        out.append(f"measurement_mix: unknown kinds {sorted(unknown)}")
    if s.signaling not in SIGNALING:
        out.append(f"signaling: must be one of {SIGNALING}")
    if s.signaling == "NB" and mix & DELAY_KINDS:
        out.append(f"measurement_mix: {WB_RULE}")
    if not (s.carrier_hz > 0 and math.isfinite(s.carrier_hz)):
        out.append("carrier_hz: must be positive")
    ids = [n.id for n in (*s.bss, *s.riss)]
    if len(ids) != len(set(ids)):
        out.append("bss/riss: duplicate node ids")
    bs_ids = {b.id for b in s.bss}
    for blk in s.los_blocked:
        if blk not in bs_ids:
            out.append(f"los_blocked: unknown BS '{blk}'")
    for b in s.bss:
        a = b.antenna
        if a.nx < 1 or a.ny < 1 or (a.is_array and not a.spacing > 0):
            out.append(f"bss[{b.id}].antenna: dims >= 1 and spacing > 0 required")
    for r in s.riss:
        if r.grid[0] < 1 or r.grid[1] < 1:
            out.append(f"riss[{r.id}].grid: dims >= 1 required")
        if not r.spacing > 0:
            out.append(f"riss[{r.id}].spacing: must be positive")
        if r.phase_profile:
            ph = np.asarray(r.phase_profile)
            if ph.size != r.n_elements:
                out.append(f"riss[{r.id}].phase_profile: length must equal nx*ny")
            elif np.any(ph < 0) or np.any(ph >= 2 * np.pi) or not np.all(np.isfinite(ph)):
                out.append(f"riss[{r.id}].phase_profile: entries must lie in [0, 2pi)")
    if "AoD" in mix and not (s.riss or any(b.antenna.is_array for b in s.bss)):
        out.append("measurement_mix: AoD requires a RIS or a BS with an array")
    if "AoA" in mix and not s.ue_antenna.is_array:
        out.append("ue_antenna: AoA requires UE array")
    if "TDoA" in mix and _n_delay_paths(s) < 2:
        out.append("measurement_mix: TDoA requires at least two delay paths")
    if s.ue is not None:
        vals = [*s.ue.position, *s.ue.velocity, s.ue.clock_bias, *s.ue.orientation.as_array()]
        if not all(math.isfinite(v) for v in vals):
            out.append("ue: state must be finite")
    return out


def _n_delay_paths(s: Scenario) -> int:
    direct = sum(1 for b in s.bss if b.id not in s.los_blocked)
    if not s.bss:
        return 0
    return direct + len(s.bss) * len(s.riss)


# ---------------------------------------------------------------------------
# serialization


def _euler_to_doc(e: EulerZYX) -> list:
    return [float(e.alpha), float(e.beta), float(e.gamma)]


def _antenna_to_doc(a: Antenna):
    if not a.is_array:
        return "single"
    return {"nx": int(a.nx), "ny": int(a.ny), "spacing": float(a.spacing)}


def _vec(x) -> list:
    return [float(v) for v in x]


def to_document(s: Scenario) -> dict:
    doc: dict = {"name": s.name}
    if s.table_row is not None:
        doc["table_row"] = s.table_row
    doc["carrier_hz"] = float(s.carrier_hz)
    doc["signaling"] = s.signaling
    if s.bandwidth_hz is not None:
        doc["bandwidth_hz"] = float(s.bandwidth_hz)
    doc["ue_antenna"] = _antenna_to_doc(s.ue_antenna)
    doc["measurement_mix"] = [k for k in MEASUREMENT_KINDS if k in s.measurement_mix]
    doc["los_blocked"] = sorted(s.los_blocked)
    doc["bss"] = [
        {
            "id": b.id,
            "position": _vec(b.position),
            "orientation": _euler_to_doc(b.orientation),
            "antenna": _antenna_to_doc(b.antenna),
        }
        for b in s.bss
    ]
    riss = []
    for r in s.riss:
        d = {
            "id": r.id,
            "center": _vec(r.center),
            "orientation": _euler_to_doc(r.orientation),
            "grid": [int(r.grid[0]), int(r.grid[1])],
            "spacing": float(r.spacing),
        }
        if r.phase_profile and np.any(np.asarray(r.phase_profile) != 0):
            d["phase_profile"] = _vec(r.phase_profile)
        riss.append(d)
    doc["riss"] = riss
    if s.ue is not None:
        doc["ue"] = {
            "position": _vec(s.ue.position),
            "velocity": _vec(s.ue.velocity),
            "clock_bias": float(s.ue.clock_bias),
            "orientation": _euler_to_doc(s.ue.orientation),
        }
    if s.sigmas:
        doc["sigmas"] = {k: float(s.sigmas[k]) for k in MEASUREMENT_KINDS if k in s.sigmas}
    if s.search_box is not None:
        doc["search_box"] = [_vec(s.search_box[0]), _vec(s.search_box[1])]
    return doc


class _Reader:
    """Field access with path-qualified error messages."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise ScenarioError(f"{self.source}: field '{where}': {msg}")

    def get(self, d, key, where, default=...):
        if not isinstance(d, dict):
            self.fail(where, "expected a mapping")
        if key not in d:
            if default is ...:
                self.fail(f"{where}.{key}" if where else key, "missing required field")
            return default
        return d[key]

    def number(self, v, where) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(where, f"expected a number, got {v!r}")
        return float(v)

    def vec(self, v, where, n=3) -> tuple:
        if not isinstance(v, (list, tuple)) or len(v) != n:
            self.fail(where, f"expected a list of {n} numbers")
        return tuple(self.number(x, f"{where}[{i}]") for i, x in enumerate(v))

    def euler(self, v, where) -> EulerZYX:
        return EulerZYX(*self.vec(v, where))

    def antenna(self, v, where) -> Antenna:
        if v == "single" or v is None:
            return SINGLE
        if not isinstance(v, dict):
            self.fail(where, "expected 'single' or {nx, ny, spacing}")
        nx = int(self.number(self.get(v, "nx", where), f"{where}.nx"))
        ny = int(self.number(self.get(v, "ny", where, 1), f"{where}.ny"))
        sp = self.number(self.get(v, "spacing", where), f"{where}.spacing")
        return Antenna(nx, ny, sp)


def from_document(doc, source: str = "<document>") -> Scenario:
    rd = _Reader(source)
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    name = str(rd.get(doc, "name", ""))
    carrier = rd.number(rd.get(doc, "carrier_hz", ""), "carrier_hz")
    wavelength = SPEED_OF_LIGHT / carrier if carrier > 0 else 0.0
    signaling = str(rd.get(doc, "signaling", ""))
    bw = doc.get("bandwidth_hz")
    bw = None if bw is None else rd.number(bw, "bandwidth_hz")
    mix = rd.get(doc, "measurement_mix", "")
    if not isinstance(mix, list):
        rd.fail("measurement_mix", "expected a list")
    for i, k in enumerate(mix):
        if k not in MEASUREMENT_KINDS:
            rd.fail(f"measurement_mix[{i}]", f"unknown measurement kind {k!r}")
    bss = []
    for i, b in enumerate(rd.get(doc, "bss", "", []) or []):
        w = f"bss[{i}]"
        bss.append(
            BsNode(
                id=str(rd.get(b, "id", w)),
                position=rd.vec(rd.get(b, "position", w), f"{w}.position"),
                orientation=rd.euler(rd.get(b, "orientation", w, [0, 0, 0]), f"{w}.orientation"),
                antenna=rd.antenna(rd.get(b, "antenna", w, "single"), f"{w}.antenna"),
            )
        )
    riss = []
    for i, r in enumerate(rd.get(doc, "riss", "", []) or []):
        w = f"riss[{i}]"
        grid = rd.vec(rd.get(r, "grid", w, [1, 1]), f"{w}.grid", n=2)
        spacing = rd.get(r, "spacing", w, None)
        spacing = wavelength / 2.0 if spacing is None else rd.number(spacing, f"{w}.spacing")
        ph = rd.get(r, "phase_profile", w, None)
        n = int(grid[0]) * int(grid[1])
        if ph is None:
            ph = ()
        else:
            ph = rd.vec(ph, f"{w}.phase_profile", n=n)
        riss.append(
            RisNode(
                id=str(rd.get(r, "id", w)),
                center=rd.vec(rd.get(r, "center", w), f"{w}.center"),
                orientation=rd.euler(rd.get(r, "orientation", w, [0, 0, 0]), f"{w}.orientation"),
                grid=(int(grid[0]), int(grid[1])),
                spacing=spacing,
                phase_profile=tuple(ph),
            )
        )
    ue = None
    if doc.get("ue") is not None:
        u = doc["ue"]
        ue = UeState(
            position=rd.vec(rd.get(u, "position", "ue"), "ue.position"),
            velocity=rd.vec(rd.get(u, "velocity", "ue", [0, 0, 0]), "ue.velocity"),
            clock_bias=rd.number(rd.get(u, "clock_bias", "ue", 0.0), "ue.clock_bias"),
            orientation=rd.euler(rd.get(u, "orientation", "ue", [0, 0, 0]), "ue.orientation"),
        )
    sigmas = {}
    for k, v in (doc.get("sigmas") or {}).items():
        if k not in MEASUREMENT_KINDS:
            rd.fail(f"sigmas.{k}", f"unknown measurement kind {k!r}")
        sigmas[k] = rd.number(v, f"sigmas.{k}")
    box = doc.get("search_box")
    if box is not None:
        if not isinstance(box, list) or len(box) != 2:
            rd.fail("search_box", "expected [[x0, y0, z0], [x1, y1, z1]]")
        box = (rd.vec(box[0], "search_box[0]"), rd.vec(box[1], "search_box[1]"))
    return Scenario(
        name=name,
        bss=tuple(bss),
        riss=tuple(riss),
        signaling=signaling,
        bandwidth_hz=bw,
        ue_antenna=rd.antenna(doc.get("ue_antenna", "single"), "ue_antenna"),
        carrier_hz=carrier,
        measurement_mix=frozenset(mix),
        los_blocked=frozenset(str(x) for x in (doc.get("los_blocked") or [])),
        table_row=None if doc.get("table_row") is None else str(doc["table_row"]),
        ue=ue,
        sigmas=sigmas,
        search_box=box,
    )


def loads(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"{source}:{where} parse error: {getattr(exc, 'problem', exc)}") from exc
    return from_document(doc, source)


def dumps(s: Scenario) -> str:
    return yaml.safe_dump(to_document(s), sort_keys=False, default_flow_style=None)


def load(path) -> Scenario:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), str(path))


def save(s: Scenario, path) -> None:
    Path(path).write_text(dumps(s), encoding="utf-8")


GALLERY_DIR = Path(__file__).parent / "gallery"


def gallery_paths() -> list[Path]:
    """The ten scenario files mirroring the downlink identifiability table."""
    return sorted((GALLERY_DIR / "table1").glob("*.yaml"))


def load_gallery() -> list[Scenario]:
    return [load(p) for p in gallery_paths()]


def experiment_scenario() -> Scenario:
    return load(GALLERY_DIR / "experiment_60ghz.yaml")
