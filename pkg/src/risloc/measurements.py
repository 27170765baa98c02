"""Geometric forward models and noisy measurement synthesis.

Paths are ray-level: a direct BS-UE link, a BS-RIS-UE reflection (taken
through the RIS center) or, when the scene has no BS, a monostatic echo
UE-RIS-UE for a full-duplex UE.

Doppler sign: positive when the path length shrinks,
``f_D = -(1/lambda) dL/dt``. Anchors are static.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .geometry import AzEl, direction_to_azel, wrap_angle
from .scene import (
    DELAY_KINDS,
    MEASUREMENT_KINDS,
    SPEED_OF_LIGHT,
    WB_RULE,
    BsNode,
    RisNode,
    Scenario,
    ScenarioError,
    UeState,
)

ANGLE_KINDS = frozenset({"AoD", "AoA"})


@dataclass(frozen=True)
class Path:
    """A propagation path. ``kind`` is ``direct``, ``reflected`` or ``monostatic``."""

    kind: str
    bs: str | None = None
    ris: str | None = None

    @property
    def id(self) -> str:
        if self.kind == "direct":
            return self.bs
        if self.kind == "reflected":
            return f"{self.bs}>{self.ris}"
        return f"{self.ris}~"

    @property
    def last_node(self) -> str:
        """Node the signal comes from when it reaches the UE."""
        return self.bs if self.kind == "direct" else self.ris

    @classmethod
    def parse(cls, text: str) -> "Path":
        if text.endswith("~"):
            return cls("monostatic", ris=text[:-1])
        if ">" in text:
            bs, ris = text.split(">", 1)
            return cls("reflected", bs=bs, ris=ris)
        return cls("direct", bs=text)


def direct(bs: str) -> Path:
    return Path("direct", bs=bs)


def reflected(bs: str, ris: str) -> Path:
    return Path("reflected", bs=bs, ris=ris)


def monostatic(ris: str) -> Path:
    return Path("monostatic", ris=ris)


def enumerate_paths(s: Scenario) -> list[Path]:
    """All usable paths of a scenario, honoring blocked direct links."""
    paths = [direct(b.id) for b in s.bss if b.id not in s.los_blocked]
    paths += [reflected(b.id, r.id) for b in s.bss for r in s.riss]
    if not s.bss:
        paths += [monostatic(r.id) for r in s.riss]
    return paths


# ---------------------------------------------------------------------------
# forward models


def path_length(path: Path, s: Scenario, u: UeState) -> float:
    """One-way geometric length of the path (meters)."""
    pu = u.p
    if path.kind == "direct":
        return float(np.linalg.norm(s.node(path.bs).p - pu))
    if path.kind == "reflected":
        pb, pr = s.node(path.bs).p, s.node(path.ris).p
        return float(np.linalg.norm(pb - pr) + np.linalg.norm(pr - pu))
    return float(np.linalg.norm(s.node(path.ris).p - pu))


def _require_wb(s: Scenario):
    if s.signaling != "WB":
        raise ScenarioError(WB_RULE)


def toa(path: Path, s: Scenario, u: UeState) -> float:
    _require_wb(s)
    if path.kind == "monostatic":
        raise ValueError("monostatic echo carries no one-way ToA; use rtt")
    return path_length(path, s, u) / SPEED_OF_LIGHT + u.clock_bias


def rtt(path: Path, s: Scenario, u: UeState) -> float:
    _require_wb(s)
    return 2.0 * path_length(path, s, u) / SPEED_OF_LIGHT


def tdoa(path_a: Path, path_b: Path, s: Scenario, u: UeState) -> float:
    _require_wb(s)
    return (path_length(path_a, s, u) - path_length(path_b, s, u)) / SPEED_OF_LIGHT


def aod(node: BsNode | RisNode, u: UeState) -> AzEl:
    """Departure direction toward the UE in the node's local frame."""
    return direction_to_azel(node.rotation.T @ (u.p - node.p))


def aoa(node: BsNode | RisNode, s: Scenario, u: UeState) -> AzEl:
    """Arrival direction from ``node`` in the UE's local frame."""
    return direction_to_azel(u.rotation.T @ (node.p - u.p))


def radial_direction(path: Path, s: Scenario, p_ue) -> np.ndarray:
    """Gradient of the path length w.r.t. UE position (unit vector, x2 for echoes)."""
    anchor = s.node(path.last_node).p
    d = np.asarray(p_ue, dtype=float) - anchor
    g = d / np.linalg.norm(d)
    return 2.0 * g if path.kind == "monostatic" else g


def doppler(path: Path, s: Scenario, u: UeState) -> float:
    rate = float(radial_direction(path, s, u.p) @ u.v)
    return -rate / s.wavelength


# ---------------------------------------------------------------------------
# measurement sets


@dataclass(frozen=True)
class Measurement:
    """One observation.

    ``node`` is a path id for ToA/RTT/Doppler/TDoA, the departing node for AoD
    and the node seen by the UE for AoA. ``ref_node`` is the TDoA reference path.
    ``sigma`` is the noise standard deviation used to draw ``value``; zero means
    noiseless and solvers then fall back to the scenario's nominal sigma.
    """

    kind: str
    node: str
    value: tuple
    sigma: float
    ref_node: str | None = None

    @property
    def size(self) -> int:
        return 2 if self.kind in ANGLE_KINDS else 1


@dataclass(frozen=True)
class MeasurementSet:
    measurements: tuple
    seed: int | None = None

    def __iter__(self):
        return iter(self.measurements)

    def __len__(self):
        return len(self.measurements)

    def of_kind(self, kind: str) -> list[Measurement]:
        return [m for m in self.measurements if m.kind == kind]

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(m.value, dtype=float) for m in self.measurements]) if self.measurements else np.zeros(0)

    def sigmas(self) -> np.ndarray:
        return np.concatenate([np.full(m.size, m.sigma) for m in self.measurements]) if self.measurements else np.zeros(0)


def layout(s: Scenario) -> list[Measurement]:
    """Measurement slots (value-less) implied by the scenario's mix and paths."""
    mix = s.measurement_mix
    paths = enumerate_paths(s)
    out: list[Measurement] = []
    delay_paths = [p for p in paths if p.kind != "monostatic"]
    for kind in MEASUREMENT_KINDS:
        if kind not in mix:
            continue
        if kind == "ToA":
            out += [Measurement("ToA", p.id, (), 0.0) for p in delay_paths]
        elif kind == "TDoA":
            if len(delay_paths) >= 2:
                ref = delay_paths[0]
                out += [Measurement("TDoA", p.id, (), 0.0, ref.id) for p in delay_paths[1:]]
        elif kind == "RTT":
            out += [Measurement("RTT", p.id, (), 0.0) for p in paths]
        elif kind == "AoD":
            for p in paths:
                if p.kind == "direct" and s.node(p.bs).antenna.is_array:
                    out.append(Measurement("AoD", p.bs, (), 0.0))
            seen = set()
            for p in paths:
                if p.ris is not None and p.ris not in seen:
                    seen.add(p.ris)
                    out.append(Measurement("AoD", p.ris, (), 0.0))
        elif kind == "AoA":
            if s.ue_antenna.is_array:
                seen = set()
                for p in paths:
                    if p.last_node not in seen:
                        seen.add(p.last_node)
                        out.append(Measurement("AoA", p.last_node, (), 0.0))
        elif kind == "Doppler":
            out += [Measurement("Doppler", p.id, (), 0.0) for p in paths]
    return out


def predict(m: Measurement, s: Scenario, u: UeState) -> tuple:
    """Noise-free value of the measurement slot ``m`` for state ``u``."""
    k = m.kind
    if k == "ToA":
        return (toa(Path.parse(m.node), s, u),)
    if k == "RTT":
        return (rtt(Path.parse(m.node), s, u),)
    if k == "TDoA":
        return (tdoa(Path.parse(m.node), Path.parse(m.ref_node), s, u),)
    if k == "AoD":
        return tuple(aod(s.node(m.node), u))
    if k == "AoA":
        return tuple(aoa(s.node(m.node), s, u))
    if k == "Doppler":
        return (doppler(Path.parse(m.node), s, u),)
    raise ValueError(f"unknown measurement kind {k!r}")


def predict_vector(slots, s: Scenario, u: UeState) -> np.ndarray:
    return np.concatenate([np.asarray(predict(m, s, u), dtype=float) for m in slots]) if slots else np.zeros(0)


def angle_mask(slots) -> np.ndarray:
    """Boolean mask over the stacked vector marking azimuth entries."""
    out = []
    for m in slots:
        out += [True, False] if m.kind in ANGLE_KINDS else [False]
    return np.array(out, dtype=bool)


def generate(s: Scenario, u: UeState, sigmas: dict | None = None, seed: int | None = 0) -> MeasurementSet:
    """Draw one measurement per slot: forward model plus independent Gaussian noise.

    ``sigmas`` maps kind to standard deviation and defaults to the scenario's
    values. Azimuths are wrapped after the noise is added.
    """
    sig = s.all_sigmas()
    if sigmas:
        sig.update(sigmas)
    rng = np.random.default_rng(seed)
    out = []
    for slot in layout(s):
        clean = np.asarray(predict(slot, s, u), dtype=float)
        sd = float(sig[slot.kind])
        noisy = clean + sd * rng.standard_normal(clean.size) if sd > 0 else clean
        if slot.kind in ANGLE_KINDS:
            noisy[0] = wrap_angle(noisy[0])
            noisy[1] = min(math.pi / 2, max(-math.pi / 2, noisy[1]))
        out.append(Measurement(slot.kind, slot.node, tuple(float(x) for x in noisy), sd, slot.ref_node))
    return MeasurementSet(tuple(out), seed)


CSV_COLUMNS = ("kind", "node", "ref_node", "value1", "value2", "sigma", "seed")


def to_csv(ms: MeasurementSet, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in ms:
        v2 = repr(m.value[1]) if len(m.value) > 1 else ""
        w.writerow([m.kind, m.node, m.ref_node or "", repr(m.value[0]), v2, repr(m.sigma), "" if ms.seed is None else ms.seed])
    return buf.getvalue()


def from_csv(text: str) -> MeasurementSet:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    out, seed = [], None
    for r in rows:
        if r["kind"] not in MEASUREMENT_KINDS:
            raise ValueError(f"unknown measurement kind {r['kind']!r}")
        vals = (float(r["value1"]),) if not r["value2"] else (float(r["value1"]), float(r["value2"]))
        out.append(Measurement(r["kind"], r["node"], vals, float(r["sigma"]), r["ref_node"] or None))
        if r.get("seed"):
            seed = int(r["seed"])
    return MeasurementSet(tuple(out), seed)


def write_csv(ms: MeasurementSet, path, meta: dict | None = None) -> None:
    FsPath(path).write_text(to_csv(ms, meta), encoding="utf-8")


def delay_kinds_present(ms: MeasurementSet) -> bool:
    return any(m.kind in DELAY_KINDS for m in ms)
