"""Regenerate the shipped scenario gallery.

Placements are nominal layouts plus seeded uniform jitter so that every
scene is generic (no accidental symmetries). Run from the repo root:

    python scripts/make_gallery.py
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from risloc.geometry import EulerZYX
from risloc.scene import (
    SPEED_OF_LIGHT,
    Antenna,
    BsNode,
    RisNode,
    Scenario,
    UeState,
    save,
    validate,
)

SEED = 20220117
OUT = Path(__file__).resolve().parents[1] / "src" / "risloc" / "gallery"

FC = 28e9
LAM = SPEED_OF_LIGHT / FC
BS_ARRAY = Antenna(4, 4, LAM / 2)
UE_ARRAY = Antenna(2, 2, LAM / 2)
BOX = ((-10.0, -10.0, 0.0), (50.0, 50.0, 30.0))


def facing(src, dst, rng, jitter=0.05) -> EulerZYX:
    """Orientation whose boresight (+x) points from ``src`` toward ``dst``, slightly jittered."""
    d = np.asarray(dst, float) - np.asarray(src, float)
    yaw = math.atan2(d[1], d[0]) + rng.uniform(-jitter, jitter)
    pitch = -math.atan2(d[2], math.hypot(d[0], d[1])) + rng.uniform(-jitter, jitter)
    return EulerZYX(yaw, pitch, rng.uniform(-jitter, jitter))


def jit(p, rng, amp=1.5):
    return tuple(float(round(v, 3)) for v in np.asarray(p, float) + rng.uniform(-amp, amp, 3))


def ue_state(pos, rng, oriented=False) -> UeState:
    vel = tuple(float(round(v, 3)) for v in rng.uniform(-2.0, 2.0, 3))
    bias = float(round(rng.uniform(20e-9, 80e-9), 12))
    ori = EulerZYX(*(float(round(v, 3)) for v in (rng.uniform(-2.5, 2.5), rng.uniform(-0.6, 0.6), rng.uniform(-0.8, 0.8)))) if oriented else EulerZYX()
    return UeState(pos, vel, bias, ori)


def bs(i, pos, rng, toward=None, array=False):
    ori = facing(pos, toward, rng) if toward is not None else EulerZYX()
    return BsNode(f"bs{i}", pos, ori, BS_ARRAY if array else Antenna())


def ris(i, center, rng, toward, grid=(8, 8)):
    return RisNode(f"ris{i}", center, facing(center, toward, rng), grid, LAM / 2)


def scene(key, bss, riss, signaling, mix, ue, ue_array=False):
    return Scenario(
        name=key,
        bss=tuple(bss),
        riss=tuple(riss),
        signaling=signaling,
        bandwidth_hz=400e6 if signaling == "WB" else None,
        ue_antenna=UE_ARRAY if ue_array else Antenna(),
        carrier_hz=FC,
        measurement_mix=frozenset(mix),
        table_row=key,
        ue=ue,
        search_box=BOX,
    )


def table1(rng) -> list[Scenario]:
    out = []
    # SISO, 0 RISs, 4 BSs
    u = jit((18, 22, 1.5), rng, 2.0)
    b = [bs(i + 1, jit(p, rng), rng) for i, p in enumerate([(0, 0, 10), (40, 2, 14), (3, 40, 7), (38, 38, 24)])]
    out.append(scene("siso_0ris_4bs", b, [], "WB", {"ToA", "Doppler"}, ue_state(u, rng)))
    # SISO, 1 RIS, 1 BS
    u = jit((15, 12, 1.5), rng, 2.0)
    b0 = jit((0, 0, 10), rng)
    c = jit((22, 30, 5), rng)
    mid = (np.asarray(u) + np.asarray(b0)) / 2
    out.append(scene("siso_1ris_1bs", [bs(1, b0, rng)], [ris(1, c, rng, mid)], "WB", {"ToA", "AoD", "Doppler"}, ue_state(u, rng)))
    # SISO, 2 RISs, 1 BS
    u = jit((14, 16, 1.5), rng, 2.0)
    b0 = jit((0, 0, 10), rng)
    c1, c2 = jit((32, 5, 4), rng), jit((5, 32, 6), rng)
    r = [ris(1, c1, rng, (np.asarray(u) + b0) / 2), ris(2, c2, rng, (np.asarray(u) + b0) / 2)]
    out.append(scene("siso_2ris_1bs", [bs(1, b0, rng)], r, "NB", {"AoD", "Doppler"}, ue_state(u, rng)))
    # SISO, 1 RIS, 0 BSs
    u = jit((14, 6, 1.5), rng, 2.0)
    c = jit((0, 0, 5), rng)
    out.append(scene("siso_1ris_0bs", [], [ris(1, c, rng, u)], "WB", {"RTT", "AoD", "Doppler"}, ue_state(u, rng)))
    # MISO, 0 RISs, 2 BSs
    u = jit((14, 15, 1.5), rng, 2.0)
    b = [bs(1, jit((0, 0, 10), rng), rng, u, True), bs(2, jit((32, 4, 12), rng), rng, u, True)]
    out.append(scene("miso_0ris_2bs", b, [], "NB", {"AoD", "Doppler"}, ue_state(u, rng)))
    # MISO, 1 RIS, 1 BS
    u = jit((15, 12, 1.5), rng, 2.0)
    b0 = jit((0, 0, 10), rng)
    c = jit((24, 28, 5), rng)
    out.append(scene("miso_1ris_1bs", [bs(1, b0, rng, u, True)], [ris(1, c, rng, (np.asarray(u) + b0) / 2)], "NB", {"AoD", "Doppler"}, ue_state(u, rng)))
    # SIMO, 0 RISs, 3 BSs
    u = jit((15, 14, 1.5), rng, 2.0)
    b = [bs(i + 1, jit(p, rng), rng) for i, p in enumerate([(0, 0, 10), (36, 3, 15), (8, 36, 6)])]
    out.append(scene("simo_0ris_3bs", b, [], "NB", {"AoA", "Doppler"}, ue_state(u, rng, True), ue_array=True))
    # SIMO, 1 RIS, 1 BS
    u = jit((15, 12, 1.5), rng, 2.0)
    b0 = jit((0, 0, 10), rng)
    c = jit((24, 30, 5), rng)
    out.append(scene("simo_1ris_1bs", [bs(1, b0, rng)], [ris(1, c, rng, (np.asarray(u) + b0) / 2)], "NB", {"AoD", "AoA", "Doppler"}, ue_state(u, rng, True), ue_array=True))
    # MIMO, 0 RISs, 2 BSs
    u = jit((14, 15, 1.5), rng, 2.0)
    b = [bs(1, jit((0, 0, 10), rng), rng, u, True), bs(2, jit((33, 5, 12), rng), rng, u, True)]
    out.append(scene("mimo_0ris_2bs", b, [], "NB", {"AoD", "AoA", "Doppler"}, ue_state(u, rng, True), ue_array=True))
    # MIMO, 1 RIS, 1 BS
    u = jit((15, 12, 1.5), rng, 2.0)
    b0 = jit((0, 0, 10), rng)
    c = jit((25, 29, 5), rng)
    out.append(scene("mimo_1ris_1bs", [bs(1, b0, rng, u, True)], [ris(1, c, rng, (np.asarray(u) + b0) / 2)], "NB", {"AoD", "AoA", "Doppler"}, ue_state(u, rng, True), ue_array=True))
    return out


def experiment() -> Scenario:
    """Desk-scale two-RIS layout at 60 GHz, 8x3 arrays, all nodes in the z = 0 plane."""
    fc = 60e9
    lam = SPEED_OF_LIGHT / fc
    r1 = RisNode("ris1", (-0.9, 0.15, 0.0), EulerZYX(0.0, 0.0, 0.0), (8, 3), lam / 2)
    r2 = RisNode("ris2", (0.15, -0.9, 0.0), EulerZYX(math.pi / 2, 0.0, 0.0), (8, 3), lam / 2)
    return Scenario(
        name="experiment_60ghz",
        bss=(BsNode("bs1", (0.55, 0.6, 0.0)),),
        riss=(r1, r2),
        signaling="NB",
        ue_antenna=Antenna(),
        carrier_hz=fc,
        measurement_mix=frozenset({"AoD"}),
        los_blocked=frozenset({"bs1"}),
        ue=UeState((0.043, -0.027, 0.0)),
    )


def nearfield() -> Scenario:
    """64-element RIS at 28 GHz with the BS-UE link blocked; UE about 2 m from the RIS."""
    r = RisNode("ris1", (0.0, 0.0, 0.0), EulerZYX(), (8, 8), LAM / 2)
    d = np.array([1.0, 0.42, -0.23])
    u = tuple(float(v) for v in 2.0 * d / np.linalg.norm(d))
    return Scenario(
        name="nearfield_28ghz",
        bss=(BsNode("bs1", (3.1, -2.4, 1.2)),),
        riss=(r,),
        signaling="NB",
        carrier_hz=FC,
        measurement_mix=frozenset({"AoD"}),
        los_blocked=frozenset({"bs1"}),
        ue=UeState(u),
    )


def main():
    rng = np.random.default_rng(SEED)
    (OUT / "table1").mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(table1(rng), start=1):
        assert not validate(s), validate(s)
        save(s, OUT / "table1" / f"r{i:02d}_{s.name}.yaml")
    for s in (experiment(), nearfield()):
        assert not validate(s), validate(s)
        save(s, OUT / f"{s.name}.yaml")


if __name__ == "__main__":
    main()
