"""Gauss hypergeometric function 2F1 for real parameters and 0 <= x <= 1."""
from __future__ import annotations

import math

MAX_TERMS = 5_000_000


def hyp2f1(a: float, b: float, c: float, x: float, rtol: float = 1e-15) -> float:
    """Sum the Gauss series F(a, b; c; x).

    For |x| < 1 the series is summed until a geometric tail bound drops below
    ``rtol`` times the partial sum.  At x = 1 (only when c - a - b > 0) the
    Gauss summation formula is used.
    """
    if c <= 0 and float(c).is_integer():
        raise ValueError("c must not be a non-positive integer")
    if x == 1.0:
        if c - a - b <= 0:
            raise ValueError("F(a, b; c; 1) diverges unless c - a - b > 0")
        return math.exp(math.lgamma(c) + math.lgamma(c - a - b)
                        - math.lgamma(c - a) - math.lgamma(c - b))
    if not -1.0 < x < 1.0:
        raise ValueError(f"series needs |x| < 1, got {x}")
    total = term = 1.0
    for k in range(MAX_TERMS):
        factor = (a + k) * (b + k) / ((c + k) * (k + 1))
        term *= factor * x
        total += term
        if term == 0.0:
            return total
        # bound on all later term ratios, valid once the rational factor is monotone
        rho = abs(x) * max(abs(factor), 1.0)
        if k > abs(a) + abs(b) + abs(c) and rho < 1.0:
            if abs(term) * rho / (1.0 - rho) <= rtol * abs(total):
                return total
    raise ArithmeticError(f"2F1({a}, {b}; {c}; {x}) did not converge in {MAX_TERMS} terms")


def f111_gap(n: int, y: float) -> float:
    """F(1, 1; n + 1; 1 - y) for integer n >= 2, given the gap y = 1 - x.

    Uses F = n * I_{n-1} with I_m = int_0^1 u^m / (y + x u) du, which obeys
    x I_m + y I_{m-1} = 1/m.  The forward recurrence is stable for x > 1/2;
    smaller x is summed as a series.
    """
    if int(n) != n or n < 2:
        raise ValueError("n must be an integer >= 2")
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"x = 1 - y must lie in [0, 1], got y = {y}")
    x = 1.0 - y
    if x <= 0.5:
        return hyp2f1(1.0, 1.0, n + 1.0, x)
    if y == 0.0:
        return n / (n - 1)
    I = -math.log(y) / x if y > 1e-300 else math.inf
    for m in range(1, n):
        I = (1.0 / m - y * I) / x if math.isfinite(I) else 1.0 / m
    return n * I


def f111(n: int, x: float) -> float:
    """F(1, 1; n + 1; x) for integer n >= 2 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x <= 0.5:
        return hyp2f1(1.0, 1.0, n + 1.0, x)
    return f111_gap(n, 1.0 - x)
