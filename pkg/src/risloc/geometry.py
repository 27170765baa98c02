"""Frames of reference, rotations and angle conventions.

Conventions used throughout the package:

* Orientation is ZYX Euler: ``R = Rz(alpha) @ Ry(beta) @ Rx(gamma)``.
  ``R.T`` maps global vectors into the local frame, ``R`` maps back.
* Every node (BS, RIS, UE array) has its boresight along local +x.
  Azimuth is ``atan2(y, x)``, elevation is measured from the local xy-plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DegenerateDirectionError(ValueError):
    """Raised when a direction vector has (numerically) zero length."""


@dataclass(frozen=True)
class EulerZYX:
    """Yaw about z, pitch about y', roll about x'' (radians)."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, a) -> "EulerZYX":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


class AzEl(NamedTuple):
    azimuth: float
    elevation: float


def wrap_angle(a):
    """Wrap to (-pi, pi]. Works on scalars and arrays."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    # in-range values pass through untouched (no round-off from the shift)
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def rot_x(gamma: float) -> np.ndarray:
    c, s = math.cos(gamma), math.sin(gamma)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(beta: float) -> np.ndarray:
    c, s = math.cos(beta), math.sin(beta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(alpha: float) -> np.ndarray:
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_zyx(e: EulerZYX | tuple | np.ndarray) -> np.ndarray:
    """Rotation matrix ``Rz(alpha) Ry(beta) Rx(gamma)``."""
    if not isinstance(e, EulerZYX):
        e = EulerZYX.from_array(e)
    return rot_z(e.alpha) @ rot_y(e.beta) @ rot_x(e.gamma)


def euler_from_rot(r: np.ndarray) -> EulerZYX:
    """Inverse of :func:`rot_zyx` with beta in [-pi/2, pi/2].

    At gimbal lock (cos beta == 0) the roll is folded into the yaw.
    """
    r = np.asarray(r, dtype=float)
    cb = math.hypot(r[0, 0], r[1, 0])
    beta = math.atan2(-r[2, 0], cb)
    if cb > 1e-12:
        alpha = math.atan2(r[1, 0], r[0, 0])
        gamma = math.atan2(r[2, 1], r[2, 2])
    else:
        alpha = math.atan2(-r[0, 1], r[1, 1])
        gamma = 0.0
    return EulerZYX(wrap_angle(alpha), beta, wrap_angle(gamma))


def global_to_local(r: np.ndarray, v) -> np.ndarray:
    return np.asarray(r).T @ np.asarray(v, dtype=float)


def local_to_global(r: np.ndarray, v) -> np.ndarray:
    return np.asarray(r) @ np.asarray(v, dtype=float)


def direction_to_azel(u) -> AzEl:
    """Azimuth/elevation of a (not necessarily unit) direction vector."""
    u = np.asarray(u, dtype=float)
    n = float(np.linalg.norm(u))
    if not n > 0.0 or not math.isfinite(n):
        raise DegenerateDirectionError("degenerate direction")
    h = math.hypot(u[0], u[1])
    # atan2 keeps full precision near the poles, where asin does not
    el = math.atan2(u[2], h)
    if h <= 1e-15 * n:
        return AzEl(0.0, el)
    az = math.atan2(u[1], u[0])
    if az == -math.pi:
        az = math.pi
    return AzEl(az, el)


def azel_to_direction(a: AzEl | tuple) -> np.ndarray:
    az, el = a
    ce = math.cos(el)
    return np.array([ce * math.cos(az), ce * math.sin(az), math.sin(el)])


def directions_to_azel(u: np.ndarray) -> np.ndarray:
    """Vectorized version over the last axis; returns ``(..., 2)``.

    No pole canonicalization; meant for grid evaluation.
    """
    u = np.asarray(u, dtype=float)
    az = np.arctan2(u[..., 1], u[..., 0])
    el = np.arctan2(u[..., 2], np.hypot(u[..., 0], u[..., 1]))
    return np.stack([az, el], axis=-1)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if not n > 0.0:
        raise DegenerateDirectionError("degenerate direction")
    return v / n


def angle_between(u, v) -> float:
    """Angle in [0, pi] between two nonzero vectors."""
    a = unit(u)
    b = unit(v)
    # atan2 form keeps full precision near 0 and pi, unlike acos
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(a @ b))
