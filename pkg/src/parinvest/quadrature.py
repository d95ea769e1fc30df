"""Adaptive Gauss-Legendre quadrature for the mortality-mixture moments.

Segments whose terminal wealth is I_eps(lambda xi) with eps in (0, 1) have
no closed-form lognormal moment, so the budget / conditional-wealth
integrals are evaluated in the standard-normal coordinate z = (ln xi - m)/s.
The integrands are smooth inside a segment, so panel-halving Gauss-Legendre
converges fast; the error estimate per panel is |GL(panel) - GL(halves)|.
"""

from __future__ import annotations

import numpy as np

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(21)


class QuadratureError(RuntimeError):
    """Raised when panel subdivision fails to reach the requested tolerance."""


def _panel(f, a: float, b: float) -> float:
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.dot(_WEIGHTS, f(mid + half * _NODES)))


def gauss_legendre_adaptive(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    """Integral of vectorized f over [a, b] to absolute tolerance tol."""
    if a == b:
        return 0.0
    if not np.isfinite(a) or not np.isfinite(b):
        raise ValueError("bounds must be finite; map infinite tails before integrating")
    total = 0.0
    stack = [(a, b, _panel(f, a, b), 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _panel(f, lo, mid)
        right = _panel(f, mid, hi)
        err = abs(left + right - whole)
        if err <= tol * max(1e-3, (hi - lo) / (b - a)) or err <= 1e-16 * abs(whole):
            total += left + right
        elif depth >= max_depth:
            raise QuadratureError(f"quadrature stalled on [{lo}, {hi}] with error {err}")
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total


def gauss_legendre_fixed(f, a, b, n: int = 200):
    """Non-adaptive GL with array-valued bounds; f maps (points, nodes) -> values.

    Used for vectorized conditional expectations where every evaluation point
    has its own integration window [a_i, b_i].
    """
    nodes, weights = np.polynomial.legendre.leggauss(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    z = mid[..., None] + half[..., None] * nodes
    return half * np.dot(f(z), weights)
