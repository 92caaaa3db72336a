"""Discrete-time kinematic bicycle model and rectangle footprint geometry.

One forward-Euler step:

    x'     = x + ts * v * cos(theta + beta)
    y'     = y + ts * v * sin(theta + beta)
    theta' = theta + ts * v * tan(delta) / L * cos(beta)
    v'     = v + ts * a
    beta   = atan(L_r / L * tan(delta))

The array core broadcasts over leading axes so the planner can roll out
many candidate input sequences at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SteeringOutOfDomain
from .types import ControlInput, Plan, VehicleDims, VehicleState


@dataclass(frozen=True)
class SideslipTerm:
    """Kinematic sideslip angle atan(L_r/L * tan(delta)), rad."""

    beta_kin: float


def sideslip(delta: float, dims: VehicleDims) -> SideslipTerm:
    if abs(delta) >= math.pi / 2:
        raise SteeringOutOfDomain(f"|delta|={abs(delta):.4f} >= pi/2")
    return SideslipTerm(math.atan(dims.l_r / dims.l * math.tan(delta)))


def step_arrays(states: np.ndarray, inputs: np.ndarray, dims: VehicleDims, ts: float) -> np.ndarray:
    """Vectorized bicycle step: states (...,4), inputs (...,2) -> (...,4)."""
    x, y, th, v = (states[..., i] for i in range(4))
    a, delta = inputs[..., 0], inputs[..., 1]
    beta = np.arctan(dims.l_r / dims.l * np.tan(delta))
    heading = th + beta
    out = np.empty_like(states)
    out[..., 0] = x + ts * v * np.cos(heading)
    out[..., 1] = y + ts * v * np.sin(heading)
    out[..., 2] = th + ts * v * np.tan(delta) / dims.l * np.cos(beta)
    out[..., 3] = v + ts * a
    return out


def step(s: VehicleState, u: ControlInput, dims: VehicleDims, ts: float) -> VehicleState:
    """Advance one vehicle state by one sampling period."""
    if abs(u.delta) >= math.pi / 2:
        raise SteeringOutOfDomain(f"|delta|={abs(u.delta):.4f} >= pi/2")
    nxt = step_arrays(s.as_array(), u.as_array(), dims, ts)
    return VehicleState.from_array(nxt)


def rollout(s0: VehicleState, us, dims: VehicleDims, ts: float, t0: int = 0) -> Plan:
    """Chain steps from s0 through an input sequence into a Plan."""
    states = [s0]
    for k, u in enumerate(us):
        try:
            states.append(step(states[-1], u, dims, ts))
        except SteeringOutOfDomain as e:
            raise SteeringOutOfDomain(f"input {k}: {e}") from e
    return Plan(t0=t0, states=tuple(states), inputs=tuple(us), ts=ts)


def rollout_arrays(s0: np.ndarray, us: np.ndarray, dims: VehicleDims, ts: float) -> np.ndarray:
    """Batched rollout: s0 (...,4), us (...,N,2) -> states (...,N+1,4)."""
    n = us.shape[-2]
    out = np.empty(s0.shape[:-1] + (n + 1, 4))
    out[..., 0, :] = s0
    for k in range(n):
        out[..., k + 1, :] = step_arrays(out[..., k, :], us[..., k, :], dims, ts)
    return out


# Rectangle corner offsets in body frame, ordered rear-left, front-left,
# front-right, rear-right. The pose reference point sits l_f ahead of the
# rear edge offset, consistent with the rear-referenced sideslip.
def _corner_offsets(dims: VehicleDims) -> np.ndarray:
    half_w = dims.w_v / 2.0
    return np.array(
        [
            [-dims.l_r, half_w],
            [dims.l_f, half_w],
            [dims.l_f, -half_w],
            [-dims.l_r, -half_w],
        ]
    )


def corners(s: VehicleState, dims: VehicleDims) -> np.ndarray:
    """The four footprint corners (4,2) at the vehicle's pose."""
    c, sn = math.cos(s.theta), math.sin(s.theta)
    rot = np.array([[c, -sn], [sn, c]])
    return s.position() + _corner_offsets(dims) @ rot.T


def corner_y_arrays(states: np.ndarray, dims: VehicleDims) -> np.ndarray:
    """Corner y coordinates for a batch of states: (...,4) -> (...,4 corners)."""
    offs = _corner_offsets(dims)
    th = states[..., 2]
    sin_t, cos_t = np.sin(th), np.cos(th)
    # y_i = y + ox*sin(theta) + oy*cos(theta)
    return (
        states[..., 1:2]
        + offs[:, 0] * sin_t[..., None]
        + offs[:, 1] * cos_t[..., None]
    )


def corner_xy_arrays(states: np.ndarray, dims: VehicleDims) -> np.ndarray:
    """Corner positions for a batch of states: (...,4) -> (...,4 corners,2)."""
    offs = _corner_offsets(dims)
    th = states[..., 2]
    sin_t, cos_t = np.sin(th)[..., None], np.cos(th)[..., None]
    cx = states[..., 0:1] + offs[:, 0] * cos_t - offs[:, 1] * sin_t
    cy = states[..., 1:2] + offs[:, 0] * sin_t + offs[:, 1] * cos_t
    return np.stack([cx, cy], axis=-1)


def plan_dynamics_gap(plan: Plan, dims: VehicleDims) -> float:
    """Largest |states[k+1] - step(states[k], inputs[k])| over the plan."""
    worst = 0.0
    for k, u in enumerate(plan.inputs):
        predicted = step(plan.states[k], u, dims, plan.ts)
        gap = np.abs(predicted.as_array() - plan.states[k + 1].as_array()).max()
        worst = max(worst, float(gap))
    return worst
