"""Shared domain types: vehicle states, weights, beliefs and plans.

All types are immutable value objects; numpy members are frozen read-only
so instances can be copied or shared between threads without defensive
copies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonPositiveDefinite, W1W4Order

STATE_DIM = 4
INPUT_DIM = 2


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi].

    Internally angles stay unwrapped (avoids discontinuities inside the
    optimizer); wrapping is applied at output boundaries only.
    """
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def _finite(*vals) -> bool:
    return all(math.isfinite(v) for v in vals)


def _frozen_array(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VehicleState:
    """Pose and speed of one vehicle in the lane frame (m, m, rad, m/s)."""

    x: float
    y: float
    theta: float
    v: float

    def __post_init__(self):
        if not _finite(self.x, self.y, self.theta, self.v):
            raise ValueError("vehicle state fields must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v])

    @staticmethod
    def from_array(a: Sequence[float]) -> "VehicleState":
        x, y, theta, v = (float(c) for c in a)
        return VehicleState(x, y, theta, v)

    def wrapped(self) -> "VehicleState":
        """Copy with yaw wrapped to (-pi, pi] for reporting."""
        return VehicleState(self.x, self.y, wrap_angle(self.theta), self.v)

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class ControlInput:
    """Ego acceleration (m/s^2) and steering angle (rad)."""

    a: float
    delta: float

    def __post_init__(self):
        if not _finite(self.a, self.delta):
            raise ValueError("control input fields must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta])

    @staticmethod
    def from_array(a: Sequence[float]) -> "ControlInput":
        acc, delta = (float(c) for c in a)
        return ControlInput(acc, delta)


@dataclass(frozen=True)
class VehicleDims:
    """Rectangle footprint: front/rear lengths from the reference point
    and overall width, all in meters."""

    l_f: float
    l_r: float
    l: float
    w_v: float

    def __post_init__(self):
        if min(self.l_f, self.l_r, self.l, self.w_v) <= 0.0:
            raise ValueError("vehicle dimensions must be positive")
        if abs(self.l - (self.l_f + self.l_r)) > 1e-12:
            raise ValueError("total length must equal l_f + l_r")


@dataclass(frozen=True)
class EllipseFootprint:
    """Safety ellipse semi-axes (m); the unit level set is the clearance
    boundary."""

    a_s: float
    b_s: float

    def __post_init__(self):
        if not (self.a_s >= self.b_s > 0.0):
            raise ValueError("require a_s >= b_s > 0")


@dataclass(frozen=True)
class CostWeights:
    """Penalty weights of the interaction cost.

    w1 scales the receiver's plan-tracking term, w4 its risk-aversion
    term (both isotropic); W2/W3 penalize ego goal error and input
    change; k1 scales the conservativeness term of the reduced cost.
    """

    w1: float
    W2: np.ndarray
    W3: np.ndarray
    w4: float
    k1: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "W2", _frozen_array(self.W2, (4, 4)))
        object.__setattr__(self, "W3", _frozen_array(self.W3, (2, 2)))

    def W1(self) -> np.ndarray:
        return self.w1 * np.eye(STATE_DIM)

    def W4(self) -> np.ndarray:
        return self.w4 * np.eye(STATE_DIM)


def _check_spd(m: np.ndarray, name: str) -> None:
    if not np.allclose(m, m.T, atol=1e-12):
        raise NonPositiveDefinite(f"{name} is not symmetric")
    if np.linalg.eigvalsh(m).min() <= 0.0:
        raise NonPositiveDefinite(f"{name} is not positive definite")


def validate_weights(cw: CostWeights) -> None:
    """Raise unless the weight set admits a minimum of the interaction cost.

    Requires w1 > 0, w4 >= 0 with w1 >= w4 (receiver cost bounded below)
    and symmetric positive definite W2, W3.
    """
    if cw.w1 <= 0.0:
        raise NonPositiveDefinite("w1 must be > 0")
    if cw.w4 < 0.0:
        raise NonPositiveDefinite("w4 must be >= 0")
    if cw.w1 < cw.w4:
        raise W1W4Order(f"w1={cw.w1} < w4={cw.w4}")
    _check_spd(cw.W2, "W2")
    _check_spd(cw.W3, "W3")


@dataclass(frozen=True)
class BeliefState:
    """Receiver belief covariances: 4x4 signal covariance and scalar
    conservativeness variance.

    Either member may be a per-step schedule (leading horizon axis);
    the default is a constant profile. ``at(k)`` resolves step k.
    """

    sigma_xe: np.ndarray
    sigma_omega: np.ndarray

    def __post_init__(self):
        sx = np.array(self.sigma_xe, dtype=float)
        if sx.ndim not in (2, 3) or sx.shape[-2:] != (4, 4):
            raise ValueError("sigma_xe must be 4x4 or a (N,4,4) schedule")
        so = np.atleast_1d(np.array(self.sigma_omega, dtype=float))
        if so.ndim != 1:
            raise ValueError("sigma_omega must be scalar or a 1-d schedule")
        if np.any(so <= 0.0) or np.any(so > 0.2):
            raise ValueError("sigma_omega must lie in (0, 0.2]")
        for m in sx.reshape(-1, 4, 4):
            _check_spd(m, "sigma_xe")
        sx.setflags(write=False)
        so.setflags(write=False)
        object.__setattr__(self, "sigma_xe", sx)
        object.__setattr__(self, "sigma_omega", so)

    def at(self, k: int) -> tuple[np.ndarray, float]:
        """(signal covariance, conservativeness variance) at horizon step k."""
        sx = self.sigma_xe if self.sigma_xe.ndim == 2 else self.sigma_xe[min(k, len(self.sigma_xe) - 1)]
        so = self.sigma_omega[min(k, len(self.sigma_omega) - 1)]
        return sx, float(so)


@dataclass(frozen=True)
class LaneGeometry:
    """Lateral road bounds and lane width (m)."""

    y_min: float
    y_max: float
    w_l: float

    def __post_init__(self):
        if not (self.y_min < self.y_max):
            raise ValueError("require y_min < y_max")
        if self.w_l <= 0.0:
            raise ValueError("lane width must be positive")


@dataclass(frozen=True)
class SaturationBounds:
    """Box bounds on inputs and speed."""

    a_min: float
    a_max: float
    delta_min: float
    delta_max: float
    v_min: float
    v_max: float

    def __post_init__(self):
        for lo, hi, name in [
            (self.a_min, self.a_max, "a"),
            (self.delta_min, self.delta_max, "delta"),
            (self.v_min, self.v_max, "v"),
        ]:
            if not lo < hi:
                raise ValueError(f"require {name}_min < {name}_max")

    def input_low(self) -> np.ndarray:
        return np.array([self.a_min, self.delta_min])

    def input_high(self) -> np.ndarray:
        return np.array([self.a_max, self.delta_max])


@dataclass(frozen=True)
class Plan:
    """A horizon of states with the inputs that chain them.

    ``t0`` is the absolute step the plan was issued at, so states[k]
    predicts step t0+k; len(states) == len(inputs) + 1.
    """

    t0: int
    states: tuple
    inputs: tuple
    ts: float

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.states) != len(self.inputs) + 1:
            raise ValueError("need exactly one more state than inputs")
        if self.ts <= 0.0:
            raise ValueError("sampling time must be positive")

    def horizon(self) -> int:
        return len(self.inputs)

    def states_array(self) -> np.ndarray:
        return np.array([s.as_array() for s in self.states])

    def inputs_array(self) -> np.ndarray:
        if not self.inputs:
            return np.zeros((0, INPUT_DIM))
        return np.array([u.as_array() for u in self.inputs])

    def state_at(self, t: int) -> VehicleState:
        """State predicted for absolute step t (t0 <= t <= t0+horizon)."""
        k = t - self.t0
        if not 0 <= k < len(self.states):
            raise IndexError(f"step {t} outside plan issued at {self.t0}")
        return self.states[k]


@dataclass(frozen=True)
class AdaptationParams:
    """Weights and map constants for the online belief/weight update."""

    w_alpha: np.ndarray
    w_beta: np.ndarray
    sigma_scale: float = 1.0
    w1_max: float = 5.0
    c_beta: float = 0.02
    w1_base: float = 1.0
    sigma_min: float = 1e-4
    sigma_max: float = 0.2
    b_floor: float = 1e-3

    def __post_init__(self):
        for name in ("w_alpha", "w_beta"):
            w = np.array(getattr(self, name), dtype=float)
            if w.ndim != 1 or len(w) == 0:
                raise ValueError(f"{name} must be a non-empty vector")
            if np.any(w < 0.0):
                raise ValueError(f"{name} entries must be >= 0")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1")
            w.setflags(write=False)
            object.__setattr__(self, name, w)
        if self.sigma_scale < 0 or self.c_beta < 0 or self.b_floor <= 0:
            raise ValueError("map constants must be nonnegative (b_floor > 0)")
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError("require 0 < sigma_min <= sigma_max")
        if self.w1_max < self.w1_base:
            raise ValueError("w1_max must be >= w1_base")

    @staticmethod
    def uniform(n: int, **kwargs) -> "AdaptationParams":
        w = np.full(n, 1.0 / n)
        return AdaptationParams(w_alpha=w, w_beta=w, **kwargs)
