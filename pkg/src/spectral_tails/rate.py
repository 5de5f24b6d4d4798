"""Upper-tail rate function for the largest eigenvalue of sparse Gaussian networks.

The cost of forcing ``lambda_1 >= sqrt(2 (1 + delta) log n)`` through a
``k``-clique with uniformly large weights is ``n ** -phi(delta, k)``; the rate
``psi(delta)`` is the cheapest such clique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "RateProfile",
    "TransitionLadder",
    "phi",
    "phi_derivative",
    "psi",
    "x_star",
    "transition_points",
    "psi_asymptotic",
    "calibrate_asymptotic_constant",
    "lower_tail_exponent",
    "rate_curve",
]

TIE_RTOL = 1e-12
BISECTION_ATOL = 1e-12


@dataclass(frozen=True)
class RateProfile:
    delta: float
    psi: float
    minimizers: tuple[int, ...]
    h: int
    x_star: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "psi": self.psi,
            "minimizers": list(self.minimizers),
            "h": self.h,
            "x_star": self.x_star,
        }


@dataclass(frozen=True)
class TransitionLadder:
    """``points[k - 1]`` is the transition point ``delta_k``; ``points[0] == 0``."""

    points: tuple[float, ...]
    k_max: int

    def delta_k(self, k: int) -> float:
        if not 1 <= k <= self.k_max:
            raise ValueError(f"k must lie in [1, {self.k_max}], got {k}")
        return self.points[k - 1]


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not math.isfinite(delta) or delta <= 0:
        raise ValueError(f"delta must be a positive finite real, got {delta!r}")
    return delta


def phi(delta: float, k: int) -> float:
    """Exponent ``k(k-3)/2 + (1+delta)/2 * k/(k-1)`` of the ``k``-clique mechanism."""
    delta = _check_delta(delta)
    if int(k) != k or k < 2:
        raise ValueError(f"k must be an integer >= 2, got {k!r}")
    k = int(k)
    return k * (k - 3) / 2 + (1 + delta) / 2 * k / (k - 1)


def phi_derivative(delta: float, x: float) -> float:
    """Derivative in ``x`` of the real extension of :func:`phi` (``x > 1``)."""
    return x - 1.5 - (1 + delta) / (2 * (x - 1) ** 2)


def x_star(delta: float) -> float:
    """Unique root in ``x > 1`` of the continuous derivative, by bisection.

    The root is bracketed by ``c + 1 < x < c + 3/2`` with ``c = ((1+delta)/2)**(1/3)``;
    the derivative is ``-1/2`` at the left end and positive at the right end.
    """
    delta = _check_delta(delta)
    c = ((1 + delta) / 2) ** (1 / 3)
    lo, hi = c + 1.0, c + 1.5
    while hi - lo > BISECTION_ATOL:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if phi_derivative(delta, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psi(delta: float) -> RateProfile:
    """Minimise ``phi(delta, k)`` over integers ``k >= 2``.

    Strict convexity puts the minimiser next to ``x_star``, so enumerating up to
    ``max(ceil(x_star) + 2, 8)`` is exhaustive.
    """
    delta = _check_delta(delta)
    xs = x_star(delta)
    k_cap = max(math.ceil(xs) + 2, 8)
    values = {k: phi(delta, k) for k in range(2, k_cap + 1)}
    best = min(values.values())
    tol = TIE_RTOL * max(1.0, abs(best))
    minimizers = tuple(k for k, v in values.items() if v - best <= tol)
    return RateProfile(delta=delta, psi=best, minimizers=minimizers, h=minimizers[0], x_star=xs)


def transition_points(k_max: int) -> TransitionLadder:
    """Transition ladder ``0 = delta_1 < delta_2 < ... < delta_{k_max}``.

    ``phi(d, k+1) - phi(d, k) = (k - 1) - (1 + d) / (2k(k-1))`` vanishes at
    ``d = 2k(k-1)**2 - 1``. Each closed-form value is re-checked against a
    numeric root of that difference.
    """
    if int(k_max) != k_max or k_max < 2:
        raise ValueError(f"k_max must be an integer >= 2, got {k_max!r}")
    k_max = int(k_max)
    points = [0.0]
    for k in range(2, k_max + 1):
        closed = float(2 * k * (k - 1) ** 2 - 1)
        root = brentq(
            lambda d: phi(d, k + 1) - phi(d, k), 1e-9, 4.0 * closed + 10.0, xtol=1e-13, rtol=1e-15
        )
        if abs(root - closed) > 1e-9 * max(1.0, closed):
            raise ArithmeticError(f"transition point mismatch at k={k}: {closed} vs {root}")
        points.append(closed)
    return TransitionLadder(points=tuple(points), k_max=k_max)


def psi_asymptotic(delta: float) -> float:
    """Large-``delta`` reference curve ``delta/2 + 3 / 2**(5/3) * delta**(2/3)``."""
    delta = _check_delta(delta)
    return delta / 2 + 3 / 2 ** (5 / 3) * delta ** (2 / 3)


def calibrate_asymptotic_constant(deltas) -> float:
    """Empirical ``C`` with ``|psi - psi_asymptotic| <= C * delta**(1/3)`` on ``deltas``."""
    deltas = np.asarray(list(deltas), dtype=float)
    if deltas.size == 0:
        raise ValueError("need at least one delta")
    ratios = [abs(psi(d).psi - psi_asymptotic(d)) / d ** (1 / 3) for d in deltas]
    return float(max(ratios))


def lower_tail_exponent(delta: float) -> float:
    """Double-logarithmic lower-tail exponent; ``P ~ exp(-n ** (delta + o(1)))``."""
    delta = float(delta)
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    return delta


def rate_curve(deltas) -> list[RateProfile]:
    return [psi(d) for d in deltas]
