import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from persuadrive.errors import W1W4Order, NonPositiveDefinite
from persuadrive.types import (
    AdaptationParams,
    BeliefState,
    ControlInput,
    CostWeights,
    EllipseFootprint,
    LaneGeometry,
    Plan,
    SaturationBounds,
    VehicleDims,
    VehicleState,
    validate_weights,
    wrap_angle,
)


def test_validate_weights_boundary_equal():
    cw = CostWeights(w1=1.0, W2=np.eye(4), W3=np.eye(2), w4=1.0)
    validate_weights(cw)  # w1 == w4 allowed (semidefinite boundary)


def test_validate_weights_order_violation():
    cw = CostWeights(w1=0.5, W2=np.eye(4), W3=np.eye(2), w4=1.0)
    with pytest.raises(W1W4Order):
        validate_weights(cw)


def test_validate_weights_default_config_scale():
    # shipped default scale: w1=1, w4=0.2 with modest diagonal W2/W3
    cw = CostWeights(
        w1=1.0,
        W2=np.diag([0.5, 2.0, 0.1, 0.5]),
        W3=np.diag([0.1, 0.1]),
        w4=0.2,
    )
    validate_weights(cw)


def test_validate_weights_rejects_indefinite():
    w2 = np.eye(4)
    w2[0, 0] = -1.0
    cw = CostWeights(w1=1.0, W2=w2, W3=np.eye(2), w4=0.0)
    with pytest.raises(NonPositiveDefinite):
        validate_weights(cw)
    cw = CostWeights(w1=1.0, W2=np.eye(4), W3=np.array([[1.0, 2.0], [0.0, 1.0]]), w4=0.0)
    with pytest.raises(NonPositiveDefinite):
        validate_weights(cw)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_w1_minus_w4_form_nonneg_when_valid(d0, d1):
    cw = CostWeights(w1=1.3, W2=np.eye(4), W3=np.eye(2), w4=0.7)
    validate_weights(cw)
    d = np.array([d0, d1, 0.0, 0.0])
    assert (cw.w1 - cw.w4) * float(d @ d) >= 0.0


def test_vehicle_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        VehicleState(math.nan, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        VehicleState(0.0, math.inf, 0.0, 0.0)


def test_wrap_angle_range_and_identity():
    for theta in [-7.0, -math.pi, 0.0, math.pi, 9.5, 100.0]:
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-12)
        assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-12)


def test_wrapped_state_keeps_other_fields():
    s = VehicleState(1.0, 2.0, 3.0 * math.pi, 0.5)
    w = s.wrapped()
    assert (w.x, w.y, w.v) == (1.0, 2.0, 0.5)
    assert -math.pi < w.theta <= math.pi


def test_vehicle_dims_length_consistency():
    VehicleDims(l_f=0.21, l_r=0.19, l=0.40, w_v=0.19)
    with pytest.raises(ValueError):
        VehicleDims(l_f=0.21, l_r=0.19, l=0.50, w_v=0.19)


def test_ellipse_footprint_orders_axes():
    EllipseFootprint(0.75, 0.35)
    with pytest.raises(ValueError):
        EllipseFootprint(0.35, 0.75)


def test_belief_state_bounds():
    BeliefState(sigma_xe=0.01 * np.eye(4), sigma_omega=0.2)
    with pytest.raises(ValueError):
        BeliefState(sigma_xe=0.01 * np.eye(4), sigma_omega=0.25)
    with pytest.raises(ValueError):
        BeliefState(sigma_xe=0.01 * np.eye(4), sigma_omega=0.0)


def test_belief_state_schedule_lookup():
    sched = np.stack([0.01 * np.eye(4), 0.02 * np.eye(4)])
    bs = BeliefState(sigma_xe=sched, sigma_omega=np.array([0.1, 0.15]))
    assert bs.at(0)[0][0, 0] == 0.01
    assert bs.at(1)[1] == 0.15
    # constant profile broadcasts past its length
    assert bs.at(7)[0][0, 0] == 0.02


def test_lane_and_saturation_invariants():
    LaneGeometry(0.0, 0.74, 0.37)
    with pytest.raises(ValueError):
        LaneGeometry(1.0, 0.5, 0.37)
    with pytest.raises(ValueError):
        SaturationBounds(1.0, -1.0, -0.1, 0.1, 0.0, 1.5)


def test_plan_length_consistency():
    s = VehicleState(0, 0, 0, 0)
    u = ControlInput(0, 0)
    Plan(t0=0, states=(s, s), inputs=(u,), ts=0.1)
    with pytest.raises(ValueError):
        Plan(t0=0, states=(s, s), inputs=(u, u), ts=0.1)


def test_plan_state_at_uses_issue_step():
    states = tuple(VehicleState(float(k), 0, 0, 0) for k in range(4))
    inputs = tuple(ControlInput(0, 0) for _ in range(3))
    p = Plan(t0=10, states=states, inputs=inputs, ts=0.1)
    assert p.state_at(12).x == 2.0
    with pytest.raises(IndexError):
        p.state_at(14)


def test_adaptation_params_weights_sum():
    AdaptationParams.uniform(30)
    with pytest.raises(ValueError):
        AdaptationParams(w_alpha=np.array([0.5, 0.4]), w_beta=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        AdaptationParams(w_alpha=np.array([1.5, -0.5]), w_beta=np.array([0.5, 0.5]))
