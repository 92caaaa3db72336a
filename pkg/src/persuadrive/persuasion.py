"""Belief-shaping interaction math.

The ego vehicle (information sender) drives so as to steer the
surrounding vehicle's (receiver's) Gaussian beliefs: a signal belief over
the ego state and a scalar belief over the ego's perceived
conservativeness. This module holds the closed forms that collapse the
belief expectations:

  * the conservativeness measure (scaled elliptical distance),
  * the exponential interaction cost and its Gaussian-weighted
    expectation over conservativeness, which integrates in closed form,
  * the receiver's best response,
  * the saddle-point reduction of the signal expectation, giving a stage
    cost that is quadratic in the ego belief mean,
  * an empirical fit of the reduced exponent's structural coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateOmegaGradient,
    NonConvergentIntegral,
    Overflow,
    PoorFit,
    SingularSystem,
)
from .types import BeliefState, ControlInput, CostWeights, EllipseFootprint, VehicleState

EXPONENT_CAP = 200.0
_OMEGA_FLOOR = 1e-6


@dataclass(frozen=True)
class OmegaBelief:
    """Receiver's conservativeness belief: mean >= 0, variance in (0, 0.2]."""

    omega_hat: float
    sigma_omega: float

    def __post_init__(self):
        if self.omega_hat < 0.0 or not math.isfinite(self.omega_hat):
            raise ValueError("omega_hat must be finite and >= 0")
        if not 0.0 < self.sigma_omega <= 0.2:
            raise ValueError("sigma_omega must lie in (0, 0.2]")


@dataclass(frozen=True)
class IntegralTerms:
    """Intermediate quantities of one reduced-stage evaluation."""

    q: float
    gamma: float
    epsilon: float
    x_s_star: VehicleState
    x_e_star: VehicleState
    j_t: float


def ellipse_matrix(fp: EllipseFootprint, theta: float = 0.0) -> np.ndarray:
    """4x4 M with omega^2 = d^T M d; positions only, ellipse major axis
    rotated to heading theta."""
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, s], [-s, c]])
    d2 = np.diag([1.0 / fp.a_s**2, 1.0 / fp.b_s**2])
    m = np.zeros((4, 4))
    m[:2, :2] = rot.T @ d2 @ rot
    return m


def omega(x_sp: VehicleState, x_e: VehicleState, fp: EllipseFootprint) -> float:
    """Conservativeness of the ego as seen from the receiver's plan: the
    elliptical distance between predicted receiver and ego positions."""
    dx = (x_sp.x - x_e.x) / fp.a_s
    dy = (x_sp.y - x_e.y) / fp.b_s
    return math.hypot(dx, dy)


def omega_rotated(x_sp: VehicleState, x_e: VehicleState, fp: EllipseFootprint, theta: float) -> float:
    """Conservativeness with the ellipse aligned to heading theta.

    theta=0 reduces to the lane-frame ellipse; perpendicular traffic uses
    the obstacle's own yaw.
    """
    delta = x_sp.as_array() - x_e.as_array()
    m = ellipse_matrix(fp, theta)
    return math.sqrt(max(float(delta @ m @ delta), 0.0))


def omega_batch(delta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Batched elliptical distance: delta (...,4) against matrices m
    broadcastable to (...,4,4)."""
    om2 = np.einsum("...i,...ij,...j->...", delta, m, delta)
    return np.sqrt(np.maximum(om2, 0.0))


def quad_form(v: np.ndarray, m: np.ndarray) -> float:
    return float(v @ m @ v)


def cost_exponent(
    om: float,
    x_s: VehicleState,
    x_sp: VehicleState,
    x_e: VehicleState,
    x_g: VehicleState,
    du: ControlInput,
    cw: CostWeights,
) -> float:
    """Exponent of the interaction cost: plan-tracking scaled by perceived
    conservativeness, goal and smoothness terms, minus risk aversion."""
    ds = x_s.as_array() - x_sp.as_array()
    de = x_e.as_array() - x_g.as_array()
    dr = x_s.as_array() - x_e.as_array()
    u = du.as_array()
    return (
        (1.0 + om) * cw.w1 * float(ds @ ds)
        + quad_form(de, cw.W2)
        + quad_form(u, cw.W3)
        - cw.w4 * float(dr @ dr)
    )


def cost_c(
    om: float,
    x_s: VehicleState,
    x_sp: VehicleState,
    x_e: VehicleState,
    x_g: VehicleState,
    du: ControlInput,
    cw: CostWeights,
    exponent_cap: float = EXPONENT_CAP,
) -> float:
    """Exponential interaction cost; raises Overflow past the exponent cap."""
    e = cost_exponent(om, x_s, x_sp, x_e, x_g, du, cw)
    if e > exponent_cap:
        raise Overflow(f"cost exponent {e:.3g} exceeds cap {exponent_cap:.3g}")
    return math.exp(e)


def epsilon(ob: OmegaBelief, q: float) -> float:
    """Mass of the tilted conservativeness belief left of the truncation
    at zero: Phi((omega_hat + sigma*q) / sqrt(sigma))."""
    z = (ob.omega_hat + ob.sigma_omega * q) / math.sqrt(ob.sigma_omega)
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def plan_deviation_q(x_s: VehicleState, x_sp: VehicleState, cw: CostWeights) -> float:
    """Receiver plan deviation q = w1 * |x_s - x_sp|^2."""
    d = x_s.as_array() - x_sp.as_array()
    return cw.w1 * float(d @ d)


def log_omega_integral(
    ob: OmegaBelief,
    x_s: VehicleState,
    x_sp: VehicleState,
    x_e: VehicleState,
    x_g: VehicleState,
    du: ControlInput,
    cw: CostWeights,
) -> float:
    """Log of the conservativeness expectation of the cost (closed form)."""
    q = plan_deviation_q(x_s, x_sp, cw)
    eps = epsilon(ob, q)
    return (
        math.log(eps)
        + 0.5 * ob.sigma_omega * q * q
        + cost_exponent(ob.omega_hat, x_s, x_sp, x_e, x_g, du, cw)
    )


def omega_integral(
    ob: OmegaBelief,
    x_s: VehicleState,
    x_sp: VehicleState,
    x_e: VehicleState,
    x_g: VehicleState,
    du: ControlInput,
    cw: CostWeights,
    exponent_cap: float = EXPONENT_CAP,
) -> float:
    """Expectation of the cost under the conservativeness belief restricted
    to the half line, evaluated in closed form.

    Equals the half-line integral of the Gaussian density times the cost
    exactly; the CDF factor accounts for the truncated tail.
    """
    q = plan_deviation_q(x_s, x_sp, cw)
    eps = epsilon(ob, q)
    tilt = 0.5 * ob.sigma_omega * q * q
    e = cost_exponent(ob.omega_hat, x_s, x_sp, x_e, x_g, du, cw)
    if tilt + e > exponent_cap:
        raise Overflow(f"integral exponent {tilt + e:.3g} exceeds cap {exponent_cap:.3g}")
    return eps * math.exp(tilt + e)


def receiver_best_response(
    ob: OmegaBelief,
    gamma: float,
    x_sp: VehicleState,
    x_e: VehicleState,
    cw: CostWeights,
) -> VehicleState:
    """Receiver state minimizing its belief-weighted cost, with the plan
    deviation in the tilt frozen at its previous value gamma.

    With isotropic tracking and risk weights this is the scalar
    combination ((1+sigma*gamma+omega_hat)*w1*x_sp - w4*x_e) / margin.
    """
    coeff = (1.0 + ob.sigma_omega * gamma + ob.omega_hat) * cw.w1
    margin = coeff - cw.w4
    if margin < 1e-10:
        raise SingularSystem(f"best-response margin {margin:.3g} < 1e-10")
    arr = (coeff * x_sp.as_array() - cw.w4 * x_e.as_array()) / margin
    return VehicleState.from_array(arr)


def gamma_update(x_s_prev: VehicleState, x_sp_prev: VehicleState, cw: CostWeights) -> float:
    """Lagged plan deviation carried into the next best-response solve."""
    return plan_deviation_q(x_s_prev, x_sp_prev, cw)


def _laplace_system(sigma_xe: np.ndarray, cw: CostWeights):
    """Inverse covariance and the (must-be-PD) curvature of the signal
    expectation's exponent."""
    si = np.linalg.inv(sigma_xe)
    a = si - 2.0 * cw.W2
    if np.linalg.eigvalsh(0.5 * (a + a.T)).min() <= 0.0:
        raise NonConvergentIntegral(
            "signal covariance too wide for the goal weight; expectation diverges"
        )
    return si, a


def _omega_linearization(
    x_hat_e: VehicleState,
    x_sp: VehicleState,
    fp: EllipseFootprint,
    anchor: float,
    ellipse_theta: float = 0.0,
) -> np.ndarray:
    """Gradient of the conservativeness norm at the belief mean, with the
    norm value anchored at the supplied belief mean ``anchor``."""
    m = ellipse_matrix(fp, ellipse_theta)
    delta = x_sp.as_array() - x_hat_e.as_array()
    norm = math.sqrt(max(float(delta @ m @ delta), 0.0))
    if norm < 1e-9 or anchor < 1e-9:
        raise DegenerateOmegaGradient("obstacle prediction coincides with belief mean")
    return -(m @ delta) / anchor


def laplace_argmin(
    x_hat_e: VehicleState,
    x_g: VehicleState,
    x_sp: VehicleState,
    bs: BeliefState,
    cw: CostWeights,
    ob: OmegaBelief,
    fp: EllipseFootprint,
    ellipse_theta: float = 0.0,
    k: int = 0,
) -> VehicleState:
    """Stationary point of the signal expectation's exponent, with the
    conservativeness term linearized around the belief mean.

    The result is a linear combination of the belief mean, the goal and
    the obstacle prediction.
    """
    sigma_xe, _ = bs.at(k)
    si, a = _laplace_system(sigma_xe, cw)
    g = _omega_linearization(x_hat_e, x_sp, fp, ob.omega_hat, ellipse_theta)
    rhs = si @ x_hat_e.as_array() - 2.0 * cw.W2 @ x_g.as_array() + cw.k1 * g
    return VehicleState.from_array(np.linalg.solve(a, rhs))


def stage_cost_j(
    x_hat_e: VehicleState,
    u_e: ControlInput,
    x_g: VehicleState,
    x_sp: VehicleState,
    bs: BeliefState,
    cw: CostWeights,
    ob: OmegaBelief,
    fp: EllipseFootprint,
    ellipse_theta: float = 0.0,
    k: int = 0,
) -> float:
    """Reduced stage cost after collapsing both belief expectations.

    Quadratic in the belief mean for a fixed linearization anchor; the
    input term is exactly separable.
    """
    sigma_xe, _ = bs.at(k)
    si, _ = _laplace_system(sigma_xe, cw)
    xs = laplace_argmin(x_hat_e, x_g, x_sp, bs, cw, ob, fp, ellipse_theta, k).as_array()
    g = _omega_linearization(x_hat_e, x_sp, fp, ob.omega_hat, ellipse_theta)
    d = xs - x_hat_e.as_array()
    e = xs - x_g.as_array()
    u = u_e.as_array()
    omega_at_star = ob.omega_hat + float(g @ d)
    return (
        -0.5 * float(d @ si @ d)
        + quad_form(e, cw.W2)
        + quad_form(u, cw.W3)
        + cw.k1 * omega_at_star
    )


def evaluate_stage(
    ob: OmegaBelief,
    gamma: float,
    x_hat_e: VehicleState,
    x_g: VehicleState,
    x_sp: VehicleState,
    du: ControlInput,
    bs: BeliefState,
    cw: CostWeights,
    fp: EllipseFootprint,
    ellipse_theta: float = 0.0,
) -> IntegralTerms:
    """Bundle the intermediate quantities of one stage for inspection."""
    x_s_star = receiver_best_response(ob, gamma, x_sp, x_hat_e, cw)
    q = plan_deviation_q(x_s_star, x_sp, cw)
    x_e_star = laplace_argmin(x_hat_e, x_g, x_sp, bs, cw, ob, fp, ellipse_theta)
    j_t = stage_cost_j(x_hat_e, du, x_g, x_sp, bs, cw, ob, fp, ellipse_theta)
    return IntegralTerms(
        q=q,
        gamma=gamma,
        epsilon=epsilon(ob, q),
        x_s_star=x_s_star,
        x_e_star=x_e_star,
        j_t=j_t,
    )


@dataclass(frozen=True)
class StructuralFit:
    """Least-squares coefficients of the reduced exponent's structural form."""

    k1: float
    k2: float
    k3: float
    k4: float
    residual: float


# Absolute exponent scale below which the fit residual is measured against
# this floor instead of the (near-zero) data norm.
_FIT_ATOL = 1e-2


def structural_fit_k(
    ob_samples,
    cw: CostWeights,
    gamma: float,
    fp: EllipseFootprint = EllipseFootprint(0.75, 0.35),
) -> StructuralFit:
    """Fit the reduced exponent at the receiver best response to
    k1*omega_hat + k2 + k3/D + k4/D^2, with D the best-response margin.

    The ego state is swept along the ellipse major axis so each belief
    mean is realized geometrically. Raises PoorFit when the relative
    residual exceeds 5 percent.
    """
    obs = list(ob_samples)
    if len({ob.omega_hat for ob in obs}) < 8:
        raise ValueError("need at least 8 distinct omega_hat samples")
    if any(ob.omega_hat < 0 for ob in obs):
        raise ValueError("omega_hat samples must be >= 0")

    x_sp = VehicleState(0.0, 0.0, 0.0, 0.0)
    du = ControlInput(0.0, 0.0)
    rows, vals = [], []
    for ob in obs:
        x_e = VehicleState(-fp.a_s * ob.omega_hat, 0.0, 0.0, 0.0)
        x_star = receiver_best_response(ob, gamma, x_sp, x_e, cw)
        # goal at the ego state: isolates the conservativeness-driven terms
        vals.append(log_omega_integral(ob, x_star, x_sp, x_e, x_e, du, cw))
        d = cw.w1 * ob.omega_hat + (1.0 + ob.sigma_omega * gamma) * cw.w1 - cw.w4
        rows.append([ob.omega_hat, 1.0, 1.0 / d, 1.0 / d**2])

    a = np.array(rows)
    y = np.array(vals)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = a @ coef - y
    scale = max(float(np.linalg.norm(y)), _FIT_ATOL * math.sqrt(len(y)))
    rel = float(np.linalg.norm(resid)) / scale
    if rel > 0.05:
        raise PoorFit(f"relative residual {rel:.3%} exceeds 5%")
    return StructuralFit(
        k1=float(coef[0]),
        k2=float(coef[1]),
        k3=float(coef[2]),
        k4=float(coef[3]),
        residual=rel,
    )
