"""Receding-horizon persuasive trajectory optimization.

The ego input sequence is the free variable (single shooting); states
follow from the bicycle rollout. Hard constraints except the input box
are smoothed into squared-hinge penalties with an escalating weight
schedule; each solve runs SLSQP with batched central-difference
gradients, a projected-gradient polish, and a mandatory post-solve
feasibility audit against the unsmoothed constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import dynamics
from .errors import Infeasible
from .types import (
    BeliefState,
    ControlInput,
    CostWeights,
    EllipseFootprint,
    LaneGeometry,
    Plan,
    SaturationBounds,
    VehicleDims,
    VehicleState,
)

_OMEGA_FLOOR = 1e-6


@dataclass(frozen=True)
class ObstaclePrediction:
    """One obstacle's predicted states from the current step onward.

    ``states`` holds at least horizon+1 rows (t0..t0+N); ``persuadee``
    marks the single vehicle whose belief the ego shapes.
    """

    states: np.ndarray
    footprint: EllipseFootprint
    persuadee: bool = False
    name: str = ""

    def __post_init__(self):
        arr = np.array(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError("obstacle states must be (steps, 4)")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def horizon_states(self, n: int) -> np.ndarray:
        """(n+1, 4) prediction, repeating the last state if one short."""
        if len(self.states) >= n + 1:
            return self.states[: n + 1]
        if len(self.states) == n:
            return np.vstack([self.states, self.states[-1]])
        raise ValueError(f"obstacle prediction shorter than horizon ({len(self.states)} < {n})")


@dataclass(frozen=True)
class SolverOptions:
    maxiter: int = 60
    ftol: float = 1e-12
    penalty0: float = 1e3
    penalty_growth: float = 10.0
    penalty_rounds: int = 3
    kkt_tol: float = 1e-5
    fd_step: float = 1e-6
    # finer step for stationarity checks: hinge curvature kinks bias the
    # coarser central differences by O(weight * h)
    kkt_fd_step: float = 1e-8
    polish_iters: int = 40
    margin_ellipse: float = 5e-3
    margin_speed: float = 1e-3
    margin_lane: float = 1e-3
    audit_tol: float = 1e-4


@dataclass(frozen=True)
class PlannerProblem:
    x0: VehicleState
    horizon: int
    goal: VehicleState
    obstacles: tuple
    beliefs: BeliefState
    weights: CostWeights
    bounds: SaturationBounds
    lane: LaneGeometry
    dims: VehicleDims
    ts: float
    t0: int = 0
    u_prev: ControlInput = ControlInput(0.0, 0.0)
    warm_start: Optional[Plan] = None
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if sum(1 for o in self.obstacles if o.persuadee) > 1:
            raise ValueError("at most one persuadee")


@dataclass(frozen=True)
class PlannerSolution:
    plan: Plan
    stage_costs: tuple
    total_cost: float
    iterations: int
    kkt_residual: float
    status: str  # converged | max_iter | infeasible


# ------------------------------------------------------------------ geometry


def _rotated_omega_parts(dx, dy, theta, fp: EllipseFootprint):
    """Elliptical distance and the position part of its scaled gradient
    matrix product, broadcast over arbitrary leading axes."""
    c, s = np.cos(theta), np.sin(theta)
    p = (dx * c + dy * s) / fp.a_s
    q = (-dx * s + dy * c) / fp.b_s
    om = np.sqrt(p * p + q * q)
    # (M delta) position components, with M the rotated ellipse matrix
    mp = p / fp.a_s
    mq = q / fp.b_s
    mdx = c * mp - s * mq
    mdy = s * mp + c * mq
    return om, mdx, mdy


def rotated_omega(dx, dy, theta, fp: EllipseFootprint):
    return _rotated_omega_parts(dx, dy, theta, fp)[0]


def pairwise_omega(sa: VehicleState, sb: VehicleState, fp: EllipseFootprint) -> float:
    """Symmetric clearance between two vehicles: the smaller of the two
    heading-aligned elliptical distances."""
    dx, dy = sa.x - sb.x, sa.y - sb.y
    oa = float(rotated_omega(dx, dy, sa.theta, fp))
    ob = float(rotated_omega(dx, dy, sb.theta, fp))
    return min(oa, ob)


# ------------------------------------------------------------------ objective


class StageCostEvaluator:
    """Batched reduced stage costs along rolled-out ego trajectories."""

    def __init__(self, p: PlannerProblem):
        n = p.horizon
        cw = p.weights
        si_all = np.empty((n, 4, 4))
        p_all = np.empty((n, 4, 4))
        ainv_all = np.empty((n, 4, 4))
        cgoal = np.empty((n, 4))
        xg = p.goal.as_array()
        for k in range(n):
            sx, _ = p.beliefs.at(k)
            si = np.linalg.inv(sx)
            a = si - 2.0 * cw.W2
            if np.linalg.eigvalsh(0.5 * (a + a.T)).min() <= 0.0:
                raise Infeasible("belief covariance too wide for the goal weight")
            ainv = np.linalg.inv(a)
            si_all[k] = si
            ainv_all[k] = ainv
            p_all[k] = ainv @ si
            cgoal[k] = -ainv @ (2.0 * cw.W2) @ xg
        self.si_all = si_all
        self.p_all = p_all
        self.ainv_all = ainv_all
        self.cgoal = cgoal
        self.cw = cw
        self.xg = xg
        self.persuadee = next((o for o in p.obstacles if o.persuadee), None)
        if self.persuadee is not None:
            sp = self.persuadee.horizon_states(n)
            self.sp_states = sp[1:]  # aligned with successor states
            self.sp_theta = sp[1:, 2]

    def __call__(self, states: np.ndarray, dus: np.ndarray) -> np.ndarray:
        """states (...,N+1,4), dus (...,N,2) -> per-stage costs (...,N)."""
        x = states[..., 1:, :]
        cw = self.cw
        if self.persuadee is not None:
            fp = self.persuadee.footprint
            delta = self.sp_states - x
            om, mdx, mdy = _rotated_omega_parts(
                delta[..., 0], delta[..., 1], self.sp_theta, fp
            )
            anchor = np.maximum(om, _OMEGA_FLOOR)
            g = np.zeros_like(x)
            g[..., 0] = -mdx / anchor
            g[..., 1] = -mdy / anchor
            xstar = (
                np.einsum("nij,...nj->...ni", self.p_all, x)
                + self.cgoal
                + cw.k1 * np.einsum("nij,...nj->...ni", self.ainv_all, g)
            )
        else:
            om = None
            xstar = np.einsum("nij,...nj->...ni", self.p_all, x) + self.cgoal
        d = xstar - x
        e = xstar - self.xg
        j = (
            -0.5 * np.einsum("...ni,nij,...nj->...n", d, self.si_all, d)
            + np.einsum("...ni,ij,...nj->...n", e, cw.W2, e)
            + np.einsum("...ni,ij,...nj->...n", dus, cw.W3, dus)
        )
        if om is not None:
            j = j + cw.k1 * (om + np.einsum("...ni,...ni->...n", g, d))
        return j


class PenaltyModel:
    """Squared-hinge penalties for the smoothed hard constraints."""

    def __init__(self, p: PlannerProblem, weight: float | None = None):
        opt = p.options
        self.weight = opt.penalty0 if weight is None else weight
        self.p = p
        self.n = p.horizon
        self.obstacle_preds = [
            (o.horizon_states(self.n)[1:], o.footprint) for o in p.obstacles
        ]

    def families(self, states: np.ndarray) -> dict:
        """Unweighted per-family sums of squared hinge violations."""
        p = self.p
        opt = p.options
        x = states[..., 1:, :]
        out = {}
        total_e = 0.0 * x[..., 0, 0]
        for sp, fp in self.obstacle_preds:
            dx = sp[:, 0] - x[..., 0]
            dy = sp[:, 1] - x[..., 1]
            om_obs = rotated_omega(dx, dy, sp[:, 2], fp)
            om_ego = rotated_omega(dx, dy, x[..., 2], fp)
            for om in (om_obs, om_ego):
                h = np.maximum(0.0, 1.0 + opt.margin_ellipse - om)
                total_e = total_e + (h * h).sum(axis=-1)
        out["ellipse"] = total_e
        v = x[..., 3]
        # lower bound unshifted: a full stop at v_min=0 must be penalty-free
        lo = np.maximum(0.0, p.bounds.v_min - v)
        hi = np.maximum(0.0, v - (p.bounds.v_max - opt.margin_speed))
        out["speed"] = (lo * lo + hi * hi).sum(axis=-1)
        cy = dynamics.corner_y_arrays(x, p.dims)
        lo = np.maximum(0.0, p.lane.y_min + opt.margin_lane - cy)
        hi = np.maximum(0.0, cy - (p.lane.y_max - opt.margin_lane))
        out["lane"] = (lo * lo + hi * hi).sum(axis=(-1, -2))
        return out

    def value(self, states: np.ndarray) -> np.ndarray:
        fams = self.families(states)
        return self.weight * sum(fams.values())


def smooth_constraints(p: PlannerProblem, weight: float | None = None) -> PenaltyModel:
    """Smoothed form of the hard constraints; minimizers approach the
    constrained ones as the weight grows."""
    return PenaltyModel(p, weight)


class _ShootingObjective:
    """Smoothed total cost as a function of the flat input vector."""

    def __init__(self, p: PlannerProblem, penalty: PenaltyModel):
        self.p = p
        self.stage = StageCostEvaluator(p)
        self.penalty = penalty
        self.x0 = p.x0.as_array()
        self.u_prev = p.u_prev.as_array()

    def states_of(self, z: np.ndarray) -> np.ndarray:
        us = z.reshape(z.shape[:-1] + (self.p.horizon, 2))
        s0 = np.broadcast_to(self.x0, z.shape[:-1] + (4,)).copy()
        return dynamics.rollout_arrays(s0, us, self.p.dims, self.p.ts)

    def stage_costs_of(self, z: np.ndarray) -> np.ndarray:
        us = z.reshape(z.shape[:-1] + (self.p.horizon, 2))
        dus = np.diff(us, axis=-2, prepend=np.broadcast_to(self.u_prev, us.shape[:-2] + (1, 2)))
        return self.stage(self.states_of(z), dus)

    def batch(self, z: np.ndarray) -> np.ndarray:
        us = z.reshape(z.shape[:-1] + (self.p.horizon, 2))
        dus = np.diff(us, axis=-2, prepend=np.broadcast_to(self.u_prev, us.shape[:-2] + (1, 2)))
        states = self.states_of(z)
        return self.stage(states, dus).sum(axis=-1) + self.penalty.value(states)

    def __call__(self, z: np.ndarray) -> float:
        return float(self.batch(np.asarray(z)))


def fd_gradient(fbatch, z: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient via one batched evaluation."""
    n = len(z)
    pert = np.repeat(z[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    pert[idx, idx] += h
    pert[idx + n, idx] -= h
    vals = fbatch(pert)
    return (vals[:n] - vals[n:]) / (2.0 * h)


def _project(z, lb, ub):
    return np.minimum(np.maximum(z, lb), ub)


def kkt_residual(fbatch, z, lb, ub, h) -> float:
    g = fd_gradient(fbatch, z, h)
    return float(np.abs(z - _project(z - g, lb, ub)).max())


def solve_shooting(fbatch, z0, lb, ub, opts: SolverOptions):
    """SLSQP on a box-constrained smoothed objective, then a monotone
    projected-gradient polish. Returns (z, iterations, kkt)."""
    fun = lambda z: float(fbatch(np.asarray(z)[None, :])[0])
    jac = lambda z: fd_gradient(lambda zz: fbatch(zz), np.asarray(z), opts.fd_step)
    res = minimize(
        fun,
        z0,
        jac=jac,
        bounds=list(zip(lb, ub)),
        method="SLSQP",
        options={"maxiter": opts.maxiter, "ftol": opts.ftol},
    )
    z = _project(np.asarray(res.x), lb, ub)
    iters = int(res.nit)
    best_z, best_f = (z, fun(z))
    f0 = fun(z0)
    if f0 < best_f:  # never return worse than the warm start
        best_z, best_f = np.asarray(z0, dtype=float), f0
    z, fz = best_z, best_f
    for _ in range(opts.polish_iters):
        g = fd_gradient(lambda zz: fbatch(zz), z, opts.kkt_fd_step)
        r = float(np.abs(z - _project(z - g, lb, ub)).max())
        if r <= 0.5 * opts.kkt_tol:
            break
        t, accepted = 1.0, False
        for _ in range(30):
            zt = _project(z - t * g, lb, ub)
            ft = float(fbatch(zt[None, :])[0])
            if ft < fz - 1e-12:
                z, fz, accepted = zt, ft, True
                break
            t *= 0.5
        iters += 1
        if not accepted:
            break
    return z, fz, iters


# ------------------------------------------------------------------ audit


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    min_omega: float
    worst_speed: float
    worst_lane: float

    def __bool__(self):
        return self.ok


def audit_states(p: PlannerProblem, states: np.ndarray, tol: float | None = None) -> FeasibilityReport:
    """Check the unsmoothed constraints along a state sequence."""
    tol = p.options.audit_tol if tol is None else tol
    min_om = math.inf
    for o in p.obstacles:
        sp = o.horizon_states(len(states) - 1)
        dx = sp[:, 0] - states[:, 0]
        dy = sp[:, 1] - states[:, 1]
        om_obs = rotated_omega(dx, dy, sp[:, 2], o.footprint)
        om_ego = rotated_omega(dx, dy, states[:, 2], o.footprint)
        min_om = min(min_om, float(np.minimum(om_obs, om_ego).min()))
    v = states[:, 3]
    worst_speed = float(max(np.max(p.bounds.v_min - v, initial=0.0), np.max(v - p.bounds.v_max, initial=0.0)))
    cy = dynamics.corner_y_arrays(states, p.dims)
    worst_lane = float(max(np.max(p.lane.y_min - cy, initial=0.0), np.max(cy - p.lane.y_max, initial=0.0)))
    ok = (min_om >= 1.0 - tol or not p.obstacles) and worst_speed <= tol and worst_lane <= tol
    if not p.obstacles:
        min_om = math.inf
    return FeasibilityReport(ok=ok, min_omega=min_om, worst_speed=worst_speed, worst_lane=worst_lane)


def _check_initial_state(p: PlannerProblem) -> None:
    rep = audit_states(p, p.x0.as_array()[None, :][:1], tol=1e-7)
    # the ellipse check above uses the obstacle's first predicted state only
    if not rep.ok:
        raise Infeasible(
            f"initial state violates hard constraints "
            f"(min omega {rep.min_omega:.4f}, speed viol {rep.worst_speed:.2g}, "
            f"lane viol {rep.worst_lane:.2g})"
        )


def _initial_guess(p: PlannerProblem) -> np.ndarray:
    n = p.horizon
    w = p.warm_start
    if w is not None and w.horizon() >= n:
        us = w.inputs_array()
        if w.t0 == p.t0:
            guess = us[:n]
        elif w.t0 == p.t0 - 1:
            guess = np.vstack([us[1:n], us[n - 1 : n]]) if n > 1 else us[n - 1 : n]
        else:
            guess = None
        if guess is not None:
            return guess.reshape(-1)
    return np.zeros(2 * n)  # constant-speed straight rollout


def solve(p: PlannerProblem) -> PlannerSolution:
    """Solve the receding-horizon persuasive program at the current step."""
    _check_initial_state(p)
    opts = p.options
    n = p.horizon
    lb = np.tile(p.bounds.input_low(), n)
    ub = np.tile(p.bounds.input_high(), n)
    z0 = _project(_initial_guess(p), lb, ub)

    weight = opts.penalty0
    total_iters = 0
    z = z0
    for round_idx in range(opts.penalty_rounds):
        objective = _ShootingObjective(p, PenaltyModel(p, weight))
        z, _, iters = solve_shooting(objective.batch, z, lb, ub, opts)
        total_iters += iters
        states = objective.states_of(z)
        if audit_states(p, states):
            break
        weight *= opts.penalty_growth
    kkt = kkt_residual(objective.batch, z, lb, ub, opts.kkt_fd_step)
    status = "converged" if kkt <= opts.kkt_tol else "max_iter"

    us = z.reshape(n, 2)
    inputs = tuple(ControlInput(float(a), float(d)) for a, d in us)
    plan = dynamics.rollout(p.x0, inputs, p.dims, p.ts, t0=p.t0)
    stage = objective.stage_costs_of(z)
    return PlannerSolution(
        plan=plan,
        stage_costs=tuple(float(c) for c in stage),
        total_cost=float(stage.sum()),
        iterations=total_iters,
        kkt_residual=kkt,
        status=status,
    )


def receding_step(p: PlannerProblem):
    """One receding-horizon move: solve, return the first input and the
    solution whose plan warm-starts the next call."""
    sol = solve(p)
    return sol.plan.inputs[0], sol
