"""Independent numerical checks: adaptive quadrature, truncated-normal
densities, and brute-force grid minimization.

Nothing here shares code with the closed forms it verifies, beyond the
shared domain types.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence

MAX_DEPTH = 60


def _simpson(f, a, fa, b, fb, m, fm):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = _simpson(f, a, fa, m, fm, lm, flm)
    right = _simpson(f, m, fm, b, fb, rm, frm)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth >= MAX_DEPTH:
        raise NoConvergence(f"subdivision cap at depth {depth} on [{a}, {b}]")
    return _adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth + 1) + _adaptive(
        f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth + 1
    )


def integrate_scalar(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Adaptive Simpson quadrature of f on [lo, hi] with error <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if hi == lo:
        return 0.0
    m = 0.5 * (lo + hi)
    fa, fb, fm = f(lo), f(hi), f(m)
    whole = _simpson(f, lo, fa, hi, fb, m, fm)
    return _adaptive(f, lo, fa, hi, fb, m, fm, whole, tol, 0)


def std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_pdf(x: float, mean: float, var: float) -> float:
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def truncated_density(omega: float, omega_hat: float, sigma_omega: float, normalized: bool = False) -> float:
    """Density of the conservativeness belief restricted to omega >= 0.

    The default reproduces the form with an extra 1/sqrt(sigma) factor in
    the normalizer (which therefore does not integrate to 1); pass
    ``normalized=True`` for the proper truncated normal.
    """
    if omega < 0.0:
        raise ValueError("omega must be >= 0")
    sd = math.sqrt(sigma_omega)
    tail = 1.0 - std_normal_cdf(-omega_hat / sd)
    g = normal_pdf(omega, omega_hat, sigma_omega)
    if normalized:
        return g / tail
    return g / (sd * tail)


def upper_limit(omega_hat: float, sigma_omega: float, q: float = 0.0) -> float:
    """Integration cutoff for half-line integrals against the belief
    density: 12 standard deviations past the exponential tilt leaves
    negligible tail mass."""
    return omega_hat + sigma_omega * q + 12.0 * math.sqrt(sigma_omega)


@dataclass(frozen=True)
class GridResult:
    argmin: np.ndarray
    value: float
    spacing: np.ndarray
    boundary_hit: bool


def grid_minimize(f, center, radius, resolution: int = 11) -> GridResult:
    """Brute-force minimum of f over an axis-aligned 4-d grid.

    ``f`` maps a (...,4) array to (...,); error of the argmin is at most
    one grid spacing per axis. ``boundary_hit`` flags an argmin on the
    box surface (the true minimizer may lie outside).
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3 per axis")
    center = np.asarray(center, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (4,))
    axes = [np.linspace(c - r, c + r, resolution) for c, r in zip(center, radius)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = f(mesh)
    idx = np.unravel_index(np.argmin(vals), vals.shape)
    spacing = 2.0 * radius / (resolution - 1)
    on_edge = any(i in (0, resolution - 1) for i in idx)
    return GridResult(
        argmin=mesh[idx].copy(),
        value=float(vals[idx]),
        spacing=spacing,
        boundary_hit=on_edge,
    )
