"""Closed-form quasihyperbolic quantities for the unit ball, punctured space and half space."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.integrate import quad

from .geometry import as_point, unit_ball_constants
from .hypergeom import f111, f111_gap, hyp2f1

# beyond this exponent e^{(n-1) r} overflows double precision
OVERFLOW_EXPONENT = 700.0


@dataclass(frozen=True)
class ClosedFormResult:
    value: Any
    formula_id: str
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        value = self.value
        if isinstance(value, tuple):
            value = [v.tolist() if isinstance(v, np.ndarray) else v for v in value]
        return {"formula_id": self.formula_id, "inputs": self.inputs, "value": value}


def hypergeom_F111(n: int, x: float) -> float:
    """F(1, 1; n + 1; x) on [0, 1]; equals n / (n - 1) at x = 1."""
    return f111(n, x)


def _vol_ball_Bn_gap(n: int, y: float) -> float:
    # vol_k of B^n(1 - y) in the unit ball, written in terms of the gap y
    if y >= 1.0:
        return 0.0
    _, omega = unit_ball_constants(n)
    x = 1.0 - y
    return omega * x ** n / (n * y ** (n - 1)) * f111_gap(n, y)


def qh_vol_euclidean_ball_in_Bn(n: int, r: float) -> float:
    """Quasihyperbolic volume of the Euclidean ball B^n(r) inside B^n."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"need 0 <= r < 1, got {r}")
    if r == 0.0:
        return 0.0
    _, omega = unit_ball_constants(n)
    return omega * r ** n / (n * (1 - r) ** (n - 1)) * f111(n, r)


def qh_vol_qh_ball_in_Bn(n: int, r: float) -> float:
    """Quasihyperbolic volume of B^n(tanh(r/2)), the hyperbolic ball of radius r about 0.

    Past the overflow threshold the asymptote 2^{1-n} omega_{n-1} e^{(n-1) r} / (n-1)
    is returned instead.  The quasihyperbolic ball itself is B^n(1 - e^{-r});
    see ``qh_vol_qh_ball_in_Bn_exact``.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return 0.0
    if (n - 1) * r > OVERFLOW_EXPONENT:
        return qh_vol_qh_ball_in_Bn_asymptote(n, r)
    # 1 - tanh(r/2) without cancellation
    gap = 2.0 / (1.0 + math.exp(r))
    return _vol_ball_Bn_gap(n, gap)


def qh_vol_qh_ball_in_Bn_exact(n: int, r: float) -> float:
    """Quasihyperbolic volume of B_k(0, r) = B^n(1 - e^{-r}), since k(0, x) = -log(1 - |x|)."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0:
        return 0.0
    if (n - 1) * r > OVERFLOW_EXPONENT:
        return 2.0 ** (n - 1) * qh_vol_qh_ball_in_Bn_asymptote(n, r)
    return _vol_ball_Bn_gap(n, math.exp(-r))


def qh_vol_qh_ball_in_Bn_asymptote(n: int, r: float) -> float:
    _, omega = unit_ball_constants(n)
    log_value = (1 - n) * math.log(2.0) + math.log(omega / (n - 1)) + (n - 1) * r
    return math.exp(log_value) if log_value < 709.0 else math.inf


def hyperbolic_vol_ball_Bn(n: int, r: float) -> float:
    """Hyperbolic volume m_h of the Euclidean ball B^n(r), 0 <= r < 1."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"need 0 <= r < 1, got {r}")
    _, omega = unit_ball_constants(n)
    return omega * 2.0 ** n * r ** n * hyp2f1(n / 2, n, 1 + n / 2, r * r) / n


def qh_dist_punctured(x, y) -> float:
    """Quasihyperbolic distance in R^n minus the origin."""
    x = as_point(x)
    y = as_point(y, x.size)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("points must differ from the origin")
    u, v = x / nx, y / ny
    theta = 2.0 * math.atan2(np.linalg.norm(u - v), np.linalg.norm(u + v))
    return math.hypot(theta, math.log(nx / ny))


def qh_vol_annulus_punctured(n: int, a: float, b: float) -> float:
    """Quasihyperbolic volume of the annulus a < |z| < b in R^n minus 0."""
    if not 0 < a <= b:
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    _, omega = unit_ball_constants(n)
    return omega * math.log(b / a)


def qh_area_ball_punctured_plane(r: float) -> float:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r <= math.pi:
        return math.pi * r * r
    w = math.sqrt(r * r - math.pi ** 2)
    return 2 * math.pi * w + 2 * math.pi ** 2 * math.atan(math.pi / w)


def qh_vol_ball_punctured_bounds(n: int, r: float) -> tuple[float, float]:
    """Two-sided bounds 2 omega sqrt(r^2 - pi^2) and 2 omega r, valid for n >= 3, r > pi."""
    if n < 3:
        raise ValueError("bounds are stated for n >= 3")
    if not r > math.pi:
        raise ValueError(f"need r > pi, got {r}")
    _, omega = unit_ball_constants(n)
    return 2 * omega * math.sqrt(r * r - math.pi ** 2), 2 * omega * r


def qh_vol_ball_punctured(n: int, r: float) -> float:
    """Volume of B_k(x, r) in R^n minus 0, any n >= 2.

    In log-polar coordinates (log|z|, z/|z|) the metric is the product of a
    line and the unit sphere, so the ball is {t^2 + theta^2 <= r^2} and its
    volume is a one-dimensional integral over the polar angle theta.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    top = min(math.pi, r)
    if n == 2:
        return 2 * quad(lambda t: 2 * math.sqrt(max(r * r - t * t, 0.0)), 0, top, epsabs=0, epsrel=1e-12)[0]
    _, sphere = unit_ball_constants(n - 1)
    return sphere * quad(lambda t: math.sin(t) ** (n - 2) * 2 * math.sqrt(max(r * r - t * t, 0.0)),
                         0, top, epsabs=0, epsrel=1e-12)[0]


def qh_vol_ball_H2(r: float) -> float:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return 2 * math.pi * (math.cosh(r) - 1)


def qh_vol_ball_H3(r: float) -> float:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return math.pi * (math.sinh(2 * r) - 2 * r)


def qh_ball_halfspace_shape(x, r: float) -> tuple[np.ndarray, float]:
    """Euclidean (center, radius) of B_k(x, r) in the half space x_n > 0."""
    x = as_point(x)
    if not x[-1] > 0:
        raise ValueError("point must lie in the upper half space")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    center = x.copy()
    center[-1] = x[-1] * math.cosh(r)
    return center, x[-1] * math.sinh(r)


def layer_ratio_limit(n: int, lam: float) -> float:
    if not lam > 1:
        raise ValueError(f"need lambda > 1, got {lam}")
    return 1.0 - lam ** (1 - n)


def layer_ratio_unit_ball(n: int, lam: float, s: float) -> float:
    """vol_k(E(s, lam s)) / vol_k(E(s, inf)) in B^n for finite s (needs lam s < 1)."""
    if not (lam > 1 and 0 < s and lam * s < 1):
        raise ValueError(f"need lam > 1 and 0 < lam*s < 1 (lam={lam}, s={s})")
    outer = _vol_ball_Bn_gap(n, s)
    return (outer - _vol_ball_Bn_gap(n, lam * s)) / outer


def layer_ratio_punctured_ball(n: int, lam: float, s: float) -> float:
    """Same ratio in B^n minus 0, from the outer-shell plus inner-annulus split (needs lam s <= 1/2)."""
    if not (lam > 1 and 0 < s and lam * s <= 0.5):
        raise ValueError(f"need lam > 1 and 0 < lam*s <= 1/2 (lam={lam}, s={s})")
    _, omega = unit_ball_constants(n)
    outer = _vol_ball_Bn_gap(n, s)
    num = outer - _vol_ball_Bn_gap(n, lam * s) + omega * math.log(lam)
    den = outer - _vol_ball_Bn_gap(n, 0.5) + omega * math.log(1 / (2 * s))
    return num / den


# -- registry used by the CLI ---------------------------------------------

FORMULAS: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "unit_ball_constants": (lambda n: unit_ball_constants(n), ("n",)),
    "F111": (lambda n, x: hypergeom_F111(n, x), ("n", "x")),
    "hyp2f1": (lambda a, b, c, x: hyp2f1(a, b, c, x), ("a", "b", "c", "x")),
    "qh_vol_euclidean_ball_Bn": (lambda n, r: qh_vol_euclidean_ball_in_Bn(n, r), ("n", "r")),
    "qh_vol_qh_ball_Bn": (lambda n, r: qh_vol_qh_ball_in_Bn(n, r), ("n", "r")),
    "qh_vol_qh_ball_Bn_exact": (lambda n, r: qh_vol_qh_ball_in_Bn_exact(n, r), ("n", "r")),
    "hyperbolic_vol_ball_Bn": (lambda n, r: hyperbolic_vol_ball_Bn(n, r), ("n", "r")),
    "qh_dist_punctured": (lambda x, y: qh_dist_punctured(x, y), ("x", "y")),
    "qh_vol_annulus_punctured": (lambda n, a, b: qh_vol_annulus_punctured(n, a, b), ("n", "a", "b")),
    "punctured_plane_ball_area": (lambda r: qh_area_ball_punctured_plane(r), ("r",)),
    "punctured_ball_bounds": (lambda n, r: qh_vol_ball_punctured_bounds(n, r), ("n", "r")),
    "punctured_ball_volume": (lambda n, r: qh_vol_ball_punctured(n, r), ("n", "r")),
    "h2_ball": (lambda r: qh_vol_ball_H2(r), ("r",)),
    "h3_ball": (lambda r: qh_vol_ball_H3(r), ("r",)),
    "halfspace_ball_shape": (lambda x, r: qh_ball_halfspace_shape(x, r), ("x", "r")),
    "layer_ratio_limit": (lambda n, lam: layer_ratio_limit(n, lam), ("n", "lam")),
}


def evaluate(formula_id: str, **params) -> ClosedFormResult:
    """Evaluate a registered formula by id, e.g. ``evaluate("h2_ball", r=1.0)``."""
    try:
        fn, names = FORMULAS[formula_id]
    except KeyError:
        raise KeyError(f"unknown formula id {formula_id!r}; known: {sorted(FORMULAS)}") from None
    missing = [p for p in names if p not in params]
    if missing:
        raise TypeError(f"{formula_id} needs parameters {missing}")
    kw = {p: params[p] for p in names}
    if formula_id == "qh_vol_qh_ball_Bn" and (kw["n"] - 1) * kw["r"] > OVERFLOW_EXPONENT:
        return ClosedFormResult(qh_vol_qh_ball_in_Bn_asymptote(kw["n"], kw["r"]),
                                "qh_vol_qh_ball_Bn:asymptotic", kw)
    return ClosedFormResult(fn(**kw), formula_id, kw)
