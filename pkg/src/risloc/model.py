"""Stacked unknown vector and stacked measurement model.

Unknowns are ordered ``[position(3), clock(1), velocity(3), orientation(3)]``
restricted to a mask. The clock is carried in meters (``c * bias``) so all
blocks have comparable scale.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import EulerZYX, euler_from_rot, rot_zyx, wrap_angle
from .measurements import angle_mask, predict_vector
from .scene import SPEED_OF_LIGHT, Scenario, UeState

BLOCK_ORDER = ("position", "clock", "velocity", "orientation")
BLOCK_SIZES = {"position": 3, "clock": 1, "velocity": 3, "orientation": 3}


def scenario_mask(s: Scenario) -> tuple[str, ...]:
    """Unknown blocks a scenario's measurements can act on.

    Clock only with one-way delays (ToA/TDoA), velocity only with Doppler,
    orientation only with AoA.
    """
    mix = s.measurement_mix
    out = ["position"]
    if "ToA" in mix:
        out.append("clock")
    if "Doppler" in mix:
        out.append("velocity")
    if "AoA" in mix:
        out.append("orientation")
    return tuple(out)


def block_slices(mask) -> dict[str, slice]:
    out, i = {}, 0
    for b in BLOCK_ORDER:
        if b in mask:
            out[b] = slice(i, i + BLOCK_SIZES[b])
            i += BLOCK_SIZES[b]
    return out


def mask_dim(mask) -> int:
    return sum(BLOCK_SIZES[b] for b in mask)


class Parameterization:
    """Maps between :class:`UeState` and the masked unknown vector.

    ``chart="tangent"`` parameterizes orientation as a body-frame rotation
    vector about the base orientation, which has no gimbal singularity.
    """

    def __init__(self, mask, base: UeState, chart: str = "euler"):
        self.mask = tuple(b for b in BLOCK_ORDER if b in mask)
        self.base = base
        self.chart = chart
        self.slices = block_slices(self.mask)
        self.dim = mask_dim(self.mask)
        self._r0 = rot_zyx(base.orientation)

    def pack(self, u: UeState) -> np.ndarray:
        x = np.zeros(self.dim)
        sl = self.slices
        if "position" in sl:
            x[sl["position"]] = u.position
        if "clock" in sl:
            x[sl["clock"]] = SPEED_OF_LIGHT * u.clock_bias
        if "velocity" in sl:
            x[sl["velocity"]] = u.velocity
        if "orientation" in sl:
            if self.chart == "euler":
                x[sl["orientation"]] = u.orientation.as_array()
            else:
                rel = self._r0.T @ rot_zyx(u.orientation)
                x[sl["orientation"]] = Rotation.from_matrix(rel).as_rotvec()
        return x

    def unpack(self, x) -> UeState:
        b, sl = self.base, self.slices
        pos = tuple(x[sl["position"]]) if "position" in sl else b.position
        clk = float(x[sl["clock"]][0]) / SPEED_OF_LIGHT if "clock" in sl else b.clock_bias
        vel = tuple(x[sl["velocity"]]) if "velocity" in sl else b.velocity
        ori = b.orientation
        if "orientation" in sl:
            o = np.asarray(x[sl["orientation"]], dtype=float)
            if self.chart == "euler":
                ori = EulerZYX.from_array(o)
            else:
                ori = euler_from_rot(self._r0 @ Rotation.from_rotvec(o).as_matrix())
        return UeState(pos, vel, clk, ori)


def fd_steps(x: np.ndarray) -> np.ndarray:
    """Central-difference steps: 1e-6 relative with a 1e-9 absolute floor."""
    return np.maximum(1e-6 * np.abs(x), 1e-9)


class StackedModel:
    """Forward model of a list of measurement slots as a function of the unknown vector."""

    def __init__(self, s: Scenario, slots, param: Parameterization):
        self.s = s
        self.slots = list(slots)
        self.param = param
        self.az = angle_mask(self.slots)

    def __call__(self, x) -> np.ndarray:
        return predict_vector(self.slots, self.s, self.param.unpack(np.asarray(x, dtype=float)))

    def difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.az.any():
            d[self.az] = wrap_angle(d[self.az])
        return d

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = fd_steps(x)
        n = len(self.az)
        J = np.zeros((n, x.size))
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += h[i]
            xm[i] -= h[i]
            J[:, i] = self.difference(self(xp), self(xm)) / (2.0 * h[i])
        return J

    def row_labels(self) -> list[str]:
        out = []
        for m in self.slots:
            tag = f"{m.kind}[{m.node}{'|' + m.ref_node if m.ref_node else ''}]"
            out += [f"{tag}.az", f"{tag}.el"] if m.kind in ("AoD", "AoA") else [tag]
        return out
