"""Surrounding-vehicle behavior: lane-tracking MPC with a tunable
proximity penalty, and a non-yielding aggressive variant.

Agents share the bicycle dynamics and the shooting solver with the ego
planner. The safety term exp(kappa*(1 - omega)) grows smoothly as the
ego's predicted state encroaches on the agent's clearance ellipse; a
zero weight recovers pure reference tracking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, planner
from .errors import HorizonMismatch
from .types import ControlInput, EllipseFootprint, Plan, SaturationBounds, VehicleDims, VehicleState


@dataclass(frozen=True)
class AgentConfig:
    """Driving style and tracking setup of one surrounding vehicle.

    ``lane_center`` is the lateral offset of the tracked lane in the
    agent's own travel frame (heading 0 keeps the lane along +x, pi/2
    along +y with the global x acting as its lateral coordinate).
    """

    kind: str  # "mpc" | "aggressive"
    safety_weight: float
    lane_center: float
    cruise_speed: float
    heading: float = 0.0
    horizon: int = 30
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.05, 60.0, 2.0, 3.0]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.3, 0.5]))
    kappa: float = 2.0
    # lateral corridor (own frame) the vehicle body must stay inside
    corridor: tuple = (0.0, 0.74)
    bounds: SaturationBounds = SaturationBounds(-1.0, 1.0, -math.pi / 3, math.pi / 3, 0.0, 1.5)
    dims: VehicleDims = VehicleDims(l_f=0.21, l_r=0.19, l=0.40, w_v=0.19)
    ts: float = 0.1
    options: planner.SolverOptions = field(
        default_factory=lambda: planner.SolverOptions(maxiter=40, polish_iters=15)
    )

    def __post_init__(self):
        if self.kind not in ("mpc", "aggressive"):
            raise ValueError("kind must be 'mpc' or 'aggressive'")
        if self.safety_weight < 0.0:
            raise ValueError("safety weight must be >= 0")
        if self.kind == "aggressive" and self.safety_weight != 0.0:
            raise ValueError("aggressive agents carry zero safety weight")
        for name in ("Q", "R"):
            m = np.array(getattr(self, name), dtype=float)
            if np.linalg.eigvalsh(0.5 * (m + m.T)).min() <= 0.0:
                raise ValueError(f"{name} must be positive definite")
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.heading), math.cos(self.heading)])


@dataclass(frozen=True)
class AgentSolution:
    plan: Plan
    status: str
    iterations: int


def reference_states(cfg: AgentConfig, s: VehicleState, n: int) -> np.ndarray:
    """(n+1, 4) cruise reference along the agent's lane, anchored at the
    agent's current longitudinal position."""
    d, nrm = cfg.direction(), cfg.normal()
    lon0 = float(s.position() @ d)
    k = np.arange(n + 1)
    lon = lon0 + cfg.cruise_speed * cfg.ts * k
    ref = np.empty((n + 1, 4))
    ref[:, :2] = lon[:, None] * d + cfg.lane_center * nrm
    ref[:, 2] = cfg.heading
    ref[:, 3] = cfg.cruise_speed
    return ref


class _AgentObjective:
    """Batched tracking + proximity cost over candidate input sequences."""

    def __init__(self, cfg: AgentConfig, s: VehicleState, ego_states: np.ndarray, fp: EllipseFootprint):
        self.cfg = cfg
        self.s0 = s.as_array()
        self.ref = reference_states(cfg, s, cfg.horizon)[1:]
        self.ego = ego_states[1:]  # aligned with successor states
        self.fp = fp
        self.speed_weight = cfg.options.penalty0

    def batch(self, z: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        us = z.reshape(z.shape[:-1] + (cfg.horizon, 2))
        s0 = np.broadcast_to(self.s0, z.shape[:-1] + (4,)).copy()
        states = dynamics.rollout_arrays(s0, us, cfg.dims, cfg.ts)
        x = states[..., 1:, :]
        err = x - self.ref
        cost = np.einsum("...ni,ij,...nj->...n", err, cfg.Q, err).sum(axis=-1)
        cost = cost + np.einsum("...ni,ij,...nj->...n", us, cfg.R, us).sum(axis=-1)
        if cfg.safety_weight > 0.0:
            dx = self.ego[:, 0] - x[..., 0]
            dy = self.ego[:, 1] - x[..., 1]
            om = planner.rotated_omega(dx, dy, self.ego[:, 2], self.fp)
            cost = cost + cfg.safety_weight * np.exp(cfg.kappa * (1.0 - om)).sum(axis=-1)
        v = x[..., 3]
        lo = np.maximum(0.0, cfg.bounds.v_min - v)
        hi = np.maximum(0.0, v - cfg.bounds.v_max)
        cost = cost + self.speed_weight * (lo * lo + hi * hi).sum(axis=-1)
        return cost


def _ego_window(cfg: AgentConfig, ego_plan: Plan, t0: int) -> np.ndarray:
    """Ego states covering t0..t0+N, clamped to the prediction's end."""
    arr = ego_plan.states_array()
    idx = np.clip(np.arange(t0, t0 + cfg.horizon + 1) - ego_plan.t0, 0, len(arr) - 1)
    return arr[idx]


def agent_solve(
    cfg: AgentConfig,
    s: VehicleState,
    ego_plan: Plan,
    fp: EllipseFootprint,
    warm_start: Plan | None = None,
) -> AgentSolution:
    """Plan the agent's horizon against the ego's predicted trajectory."""
    if ego_plan.horizon() < cfg.horizon:
        raise HorizonMismatch(
            f"ego plan horizon {ego_plan.horizon()} < agent horizon {cfg.horizon}"
        )
    t0 = ego_plan.t0 + 1  # agents replan one step after the prediction they use
    obj = _AgentObjective(cfg, s, _ego_window(cfg, ego_plan, t0), fp)
    n = cfg.horizon
    lb = np.tile(cfg.bounds.input_low(), n)
    ub = np.tile(cfg.bounds.input_high(), n)
    z0 = np.zeros(2 * n)
    if warm_start is not None and warm_start.horizon() >= n:
        us = warm_start.inputs_array()
        if warm_start.t0 == t0 - 1:
            z0 = np.vstack([us[1:n], us[n - 1 : n]]).reshape(-1) if n > 1 else us[:n].reshape(-1)
        elif warm_start.t0 == t0:
            z0 = us[:n].reshape(-1)
    z0 = np.clip(z0, lb, ub)
    z, _, iters = planner.solve_shooting(obj.batch, z0, lb, ub, cfg.options)
    kkt = planner.kkt_residual(obj.batch, z, lb, ub, cfg.options.kkt_fd_step)
    status = "converged" if kkt <= cfg.options.kkt_tol else "max_iter"
    inputs = tuple(ControlInput(float(a), float(d)) for a, d in z.reshape(n, 2))
    plan = dynamics.rollout(s, inputs, cfg.dims, cfg.ts, t0=t0)
    return AgentSolution(plan=plan, status=status, iterations=iters)


def agent_plan(
    cfg: AgentConfig,
    s: VehicleState,
    ego_plan: Plan,
    fp: EllipseFootprint,
    warm_start: Plan | None = None,
) -> Plan:
    return agent_solve(cfg, s, ego_plan, fp, warm_start).plan


def agent_step(
    cfg: AgentConfig,
    s: VehicleState,
    ego_plan: Plan,
    fp: EllipseFootprint,
    warm_start: Plan | None = None,
):
    """Apply the first planned input; the retained plan is the ego's next
    perfect prediction of this agent."""
    plan = agent_plan(cfg, s, ego_plan, fp, warm_start)
    return plan.inputs[0], plan
