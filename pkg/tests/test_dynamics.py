import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from persuadrive.dynamics import (
    corners,
    plan_dynamics_gap,
    rollout,
    rollout_arrays,
    sideslip,
    step,
    step_arrays,
)
from persuadrive.errors import SteeringOutOfDomain
from persuadrive.types import ControlInput, VehicleDims, VehicleState

DIMS = VehicleDims(l_f=0.21, l_r=0.19, l=0.40, w_v=0.19)
TS = 0.1


def test_step_zero_motion():
    s = VehicleState(1.0, 2.0, 0.3, 0.0)
    out = step(s, ControlInput(0.0, 0.0), DIMS, TS)
    assert out == s


def test_step_straight_line():
    s = VehicleState(0.0, 0.0, 0.0, 1.0)
    out = step(s, ControlInput(1.0, 0.0), DIMS, TS)
    assert math.isclose(out.x, 0.1, abs_tol=1e-15)
    assert out.y == 0.0
    assert out.theta == 0.0
    assert math.isclose(out.v, 1.1, abs_tol=1e-15)


def test_step_matches_extended_precision_reference():
    # frozen from a 50-digit evaluation of the model equations at
    # theta=0, v=1, a=0, delta=pi/6, ts=0.1, L_r=0.19, L=0.40
    s = VehicleState(0.0, 0.0, 0.0, 1.0)
    out = step(s, ControlInput(0.0, math.pi / 6), DIMS, TS)
    assert abs(out.x - 0.096439220001135619633) < 1e-12
    assert abs(out.y - 0.026447624573344265783) < 1e-12
    assert abs(out.theta - 0.13919802407023297781) < 1e-12
    assert out.v == 1.0


def test_sideslip_value_and_domain():
    b = sideslip(math.pi / 6, DIMS)
    assert abs(b.beta_kin - 0.26766078924415058209) < 1e-12
    with pytest.raises(SteeringOutOfDomain):
        sideslip(math.pi / 2, DIMS)


def test_step_rejects_steering_out_of_domain():
    s = VehicleState(0, 0, 0, 1.0)
    with pytest.raises(SteeringOutOfDomain):
        step(s, ControlInput(0.0, math.pi / 2), DIMS, TS)


def test_step_preserves_speed_without_acceleration():
    s = VehicleState(0, 0, 0.2, 1.2345678901234567)
    out = step(s, ControlInput(0.0, 0.3), DIMS, TS)
    assert out.v == s.v


def test_step_deterministic_bitwise():
    s = VehicleState(0.1, -0.2, 0.05, 0.9)
    u = ControlInput(0.3, -0.21)
    a = step(s, u, DIMS, TS)
    b = step(s, u, DIMS, TS)
    assert a.as_array().tobytes() == b.as_array().tobytes()


@given(
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.floats(-3, 3),
    st.floats(0, 1.5),
    st.floats(-1, 1),
    st.floats(-1.0, 1.0),
)
@settings(max_examples=200)
def test_steering_mirror_symmetry(x, y, th, v, a, delta):
    s = VehicleState(x, y, th, v)
    m = VehicleState(x, -y, -th, v)
    out = step(s, ControlInput(a, delta), DIMS, TS)
    mirrored = step(m, ControlInput(a, -delta), DIMS, TS)
    assert math.isclose(mirrored.y, -out.y, abs_tol=1e-12)
    assert math.isclose(mirrored.theta, -out.theta, abs_tol=1e-12)
    assert math.isclose(mirrored.x, out.x, abs_tol=1e-12)
    assert mirrored.v == out.v


def test_rollout_empty_inputs():
    s = VehicleState(0, 0, 0, 0.5)
    p = rollout(s, [], DIMS, TS)
    assert p.states == (s,)
    assert p.inputs == ()


def test_rollout_stationary():
    s = VehicleState(0, 0, 0, 0.0)
    p = rollout(s, [ControlInput(0, 0)] * 5, DIMS, TS)
    assert all(st_ == s for st_ in p.states)


def test_rollout_chains_step(rng=np.random.default_rng(3)):
    s = VehicleState(0, 0, 0.1, 0.8)
    us = [ControlInput(float(a), float(d)) for a, d in rng.uniform(-0.5, 0.5, (8, 2))]
    p = rollout(s, us, DIMS, TS)
    for k in range(8):
        expect = step(p.states[k], us[k], DIMS, TS)
        assert np.allclose(p.states[k + 1].as_array(), expect.as_array(), atol=0)
    assert plan_dynamics_gap(p, DIMS) == 0.0


def test_rollout_reports_offending_index():
    s = VehicleState(0, 0, 0, 0.5)
    us = [ControlInput(0, 0), ControlInput(0, math.pi / 2)]
    with pytest.raises(SteeringOutOfDomain, match="input 1"):
        rollout(s, us, DIMS, TS)


def test_rollout_arrays_matches_scalar_path(rng=np.random.default_rng(4)):
    s0 = np.array([0.2, -0.1, 0.3, 0.7])
    us = rng.uniform(-0.4, 0.4, (3, 6, 2))
    batch = rollout_arrays(np.broadcast_to(s0, (3, 4)).copy(), us, DIMS, TS)
    for i in range(3):
        p = rollout(VehicleState.from_array(s0), [ControlInput.from_array(u) for u in us[i]], DIMS, TS)
        assert np.allclose(batch[i], p.states_array(), atol=1e-15)


def test_corners_reference_geometry():
    s = VehicleState(0, 0, 0, 0)
    c = corners(s, DIMS)
    expect = np.array([[-0.19, 0.095], [0.21, 0.095], [0.21, -0.095], [-0.19, -0.095]])
    assert np.allclose(c, expect, atol=1e-15)


def test_corners_quarter_turn_swaps_axes():
    c0 = corners(VehicleState(0, 0, 0, 0), DIMS)
    c90 = corners(VehicleState(0, 0, math.pi / 2, 0), DIMS)
    # rotating the pose by pi/2 maps (x, y) -> (-y, x)
    assert np.allclose(c90, np.column_stack([-c0[:, 1], c0[:, 0]]), atol=1e-15)


@given(st.floats(-10, 10))
@settings(max_examples=100)
def test_corner_distances_invariant(theta):
    s = VehicleState(0.5, -0.3, theta, 0.7)
    c = corners(s, DIMS)
    d = np.hypot(c[:, 0] - s.x, c[:, 1] - s.y)
    half_w = DIMS.w_v / 2
    expect = [
        math.hypot(DIMS.l_r, half_w),
        math.hypot(DIMS.l_f, half_w),
        math.hypot(DIMS.l_f, half_w),
        math.hypot(DIMS.l_r, half_w),
    ]
    assert np.allclose(d, expect, atol=1e-12)


def test_corners_periodic_in_theta():
    a = corners(VehicleState(0, 0, 0.7, 0), DIMS)
    b = corners(VehicleState(0, 0, 0.7 + 2 * math.pi, 0), DIMS)
    assert np.allclose(a, b, atol=1e-12)


def test_step_arrays_broadcasts():
    states = np.tile(np.array([0.0, 0.0, 0.0, 1.0]), (5, 1))
    inputs = np.zeros((5, 2))
    inputs[:, 0] = np.linspace(-1, 1, 5)
    out = step_arrays(states, inputs, DIMS, TS)
    assert np.allclose(out[:, 3], 1.0 + TS * inputs[:, 0])
    assert np.allclose(out[:, 0], 0.1)
