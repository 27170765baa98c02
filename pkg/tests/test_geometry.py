import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risloc.geometry import (
    AzEl,
    DegenerateDirectionError,
    EulerZYX,
    angle_between,
    azel_to_direction,
    direction_to_azel,
    euler_from_rot,
    global_to_local,
    local_to_global,
    rot_zyx,
    wrap_angle,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)
pitch = st.floats(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3, allow_nan=False)
eulers = st.builds(EulerZYX, angle, pitch, angle)
vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


def _rz(a):
    # written out from the trigonometric definition, independent of the library
    return np.array([[math.cos(a), -math.sin(a), 0.0], [math.sin(a), math.cos(a), 0.0], [0.0, 0.0, 1.0]])


def _ry(b):
    return np.array([[math.cos(b), 0.0, math.sin(b)], [0.0, 1.0, 0.0], [-math.sin(b), 0.0, math.cos(b)]])


def _rx(g):
    return np.array([[1.0, 0.0, 0.0], [0.0, math.cos(g), -math.sin(g)], [0.0, math.sin(g), math.cos(g)]])


def test_identity():
    assert np.array_equal(rot_zyx(EulerZYX(0, 0, 0)), np.eye(3))


def test_yaw_quarter_turn_maps_x_to_y():
    np.testing.assert_allclose(rot_zyx(EulerZYX(math.pi / 2, 0, 0)) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_global_to_local_hand_value():
    r = rot_zyx(EulerZYX(math.pi / 2, 0, 0))
    np.testing.assert_allclose(global_to_local(r, [0, 1, 0]), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(global_to_local(np.eye(3), [3, -2, 1]), [3, -2, 1])


@given(eulers)
def test_rot_zyx_matches_elementwise_product(e):
    ref = _rz(e.alpha) @ _ry(e.beta) @ _rx(e.gamma)
    np.testing.assert_allclose(rot_zyx(e), ref, atol=1e-14)


@given(angle)
def test_pure_yaw_is_printed_rz(a):
    np.testing.assert_allclose(rot_zyx(EulerZYX(a, 0, 0)), _rz(a), atol=1e-15)


@given(eulers)
def test_rotation_is_proper_orthonormal(e):
    r = rot_zyx(e)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-10)
    assert abs(np.linalg.det(r) - 1.0) < 1e-10


@given(eulers, eulers)
def test_group_laws(e1, e2):
    a, b = rot_zyx(e1), rot_zyx(e2)
    # closure and inverse
    c = a @ b
    np.testing.assert_allclose(c.T @ c, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(rot_zyx(euler_from_rot(c)), c, atol=1e-9)
    np.testing.assert_allclose(a @ a.T, np.eye(3), atol=1e-12)


@given(eulers)
def test_euler_round_trip(e):
    back = euler_from_rot(rot_zyx(e))
    assert -math.pi < back.alpha <= math.pi and -math.pi < back.gamma <= math.pi
    np.testing.assert_allclose(wrap_angle(back.as_array() - e.as_array()), 0.0, atol=1e-8)


@given(eulers, vec)
def test_local_global_inverse(e, v):
    r = rot_zyx(e)
    np.testing.assert_allclose(global_to_local(r, local_to_global(r, v)), v, atol=1e-12 * max(1, np.linalg.norm(v)))


def test_azel_cardinal_and_pole():
    assert direction_to_azel([1, 0, 0]) == AzEl(0.0, 0.0)
    p = direction_to_azel([0, 0, 1])
    assert p.azimuth == 0.0 and p.elevation == pytest.approx(math.pi / 2)
    assert direction_to_azel([0, 0, -2]).azimuth == 0.0
    # branch cut: -pi canonicalized to +pi
    assert direction_to_azel([-1, -0.0, 0]).azimuth == pytest.approx(math.pi)


def test_degenerate_direction():
    with pytest.raises(DegenerateDirectionError, match="degenerate direction"):
        direction_to_azel([0, 0, 0])
    with pytest.raises(DegenerateDirectionError):
        angle_between([0, 0, 0], [1, 0, 0])


def test_azel_round_trip_1000(rng):
    u = rng.standard_normal((1000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    for v in u:
        a = direction_to_azel(v)
        assert -math.pi < a.azimuth <= math.pi and -math.pi / 2 <= a.elevation <= math.pi / 2
        np.testing.assert_allclose(azel_to_direction(a), v, atol=1e-12)


def test_angle_between_basic():
    assert angle_between([1, 2, 3], [1, 2, 3]) == 0.0
    assert angle_between([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2, abs=1e-15)
    assert angle_between([1, 0, 0], [-1, 0, 0]) == pytest.approx(math.pi)


def test_angle_between_rotation_invariance_1000(rng):
    for _ in range(1000):
        u, v = rng.standard_normal(3), rng.standard_normal(3)
        r = rot_zyx(EulerZYX(*rng.uniform(-math.pi, math.pi, 3)))
        assert abs(angle_between(r.T @ u, r.T @ v) - angle_between(u, v)) < 1e-12


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert abs(math.remainder(w - a, 2 * math.pi)) < 1e-9
