"""Exponent fits and hypothesis checks: Q from cube counts and layer volumes,
porosity probes, volume-growth exponents and layer-ratio experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Descriptor
from .special import (layer_ratio_limit, layer_ratio_punctured_ball, layer_ratio_unit_ball,
                      qh_vol_ball_H2, qh_vol_ball_H3, qh_vol_ball_punctured, qh_vol_qh_ball_in_Bn_exact)
from .whitney import GenerationCounts, layer_volume


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class RegularityFit:
    """Fitted regularity exponent.  The constants of the regularity measure are not estimated."""

    Q_hat: float
    range: tuple[float, float]
    residual: float
    estimator: str
    x: np.ndarray = field(repr=False, default=None)
    y: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {"estimator": self.estimator, "exponent": self.Q_hat, "range": list(self.range),
                "residual": self.residual, "verdicts": []}


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), float(intercept), resid


def default_count_range(counts: GenerationCounts) -> tuple[int, int]:
    """Drop the two coarsest and the finest generation of the aggregated counts."""
    ks = sorted(counts.Ntilde)
    return ks[0] + 2, ks[-1] - 1


def fit_Q_from_counts(counts: GenerationCounts, k_lo: int | None = None,
                      k_hi: int | None = None) -> RegularityFit:
    """Least-squares slope of log2 Ntilde_k against k."""
    if k_lo is None or k_hi is None:
        a, b = default_count_range(counts)
        k_lo = a if k_lo is None else k_lo
        k_hi = b if k_hi is None else k_hi
    if k_hi - k_lo < 4:
        raise FitError("need k_hi - k_lo >= 4")
    ks = np.arange(k_lo, k_hi + 1)
    vals = np.array([counts.Ntilde.get(int(k), 0) for k in ks], dtype=float)
    if np.any(vals <= 0):
        raise FitError("range beyond decomposition depth")
    y = np.log2(vals)
    slope, _, resid = _linfit(ks.astype(float), y)
    return RegularityFit(slope, (int(k_lo), int(k_hi)), resid, "counts", ks, y)


def default_k_grid(r: float) -> int:
    # 2^-k <= r / 128 keeps the grid error near 1%
    return math.ceil(-math.log2(r)) + 7


def fit_Q_from_layers(E: Descriptor, r_grid, k_grid=None) -> RegularityFit:
    """Q = n minus the slope of log m(E(r)) against log r."""
    r = np.asarray(r_grid, dtype=float)
    order = np.argsort(r)
    r = r[order]
    if len(r) < 4:
        raise FitError("need at least 4 radii")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise FitError("radii must be positive and distinct")
    lr = np.log(r)
    steps = np.diff(lr)
    if np.ptp(steps) > 1e-6 * max(abs(steps).max(), 1.0):
        raise FitError("radii must be log-spaced")
    if k_grid is None:
        ks = [default_k_grid(v) for v in r]
    elif np.isscalar(k_grid):
        ks = [int(k_grid)] * len(r)
    else:
        ks = [int(k_grid[i]) for i in order]
    m = np.array([layer_volume(E, float(v), k) for v, k in zip(r, ks)])
    y = np.log(m)
    slope, _, resid = _linfit(lr, y)
    return RegularityFit(E.dim - slope, (float(r[0]), float(r[-1])), resid, "layers", lr, y)


@dataclass(frozen=True)
class PorosityEstimate:
    alpha_hat: float
    r0: float
    samples: int
    seed: int
    worst: tuple[tuple[float, ...], float]

    def to_json(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "r0": self.r0, "samples": self.samples,
                "seed": self.seed, "worst_x": list(self.worst[0]), "worst_r": self.worst[1]}


def porosity_samples(E: Descriptor, count: int, seed: int) -> np.ndarray:
    """Points of E; sample ``i`` depends only on ``(seed, i)``."""
    return np.vstack([E.sample(1, np.random.default_rng([seed, i])) for i in range(count)])


def porosity_probe(E: Descriptor, x_samples: int, r_grid, search_resolution: int = 16,
                   seed: int = 0) -> PorosityEstimate:
    """alpha_hat = min over sampled (x, r) of max_{y in B(x, r)} d(y, E) / r.

    The maximum is taken over a cubic grid of spacing r / search_resolution
    clipped to the ball, so alpha_hat is within 1/search_resolution of the
    exact value for each sample.
    """
    if not E.bounded:
        raise ValueError("porosity needs a bounded set")
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0):
        raise ValueError("radii must be positive")
    n = E.dim
    m = int(search_resolution)
    axis = np.linspace(-1.0, 1.0, 2 * m + 1)
    grid = np.array(np.meshgrid(*[axis] * n, indexing="ij")).reshape(n, -1).T
    grid = grid[np.linalg.norm(grid, axis=1) <= 1.0 + 1e-12]
    xs = porosity_samples(E, x_samples, seed)
    best = math.inf
    worst = (tuple(xs[0]), float(r_grid[0]))
    for x in xs:
        for r in r_grid:
            ys = x + r * grid
            a = float(E.distance(ys, 1e-6 * r).max()) / r
            if a < best:
                best, worst = a, (tuple(float(v) for v in x), float(r))
    return PorosityEstimate(best, float(r_grid.max()), int(x_samples), int(seed), worst)


@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    r_range: tuple[float, float]
    residual: float
    verdicts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"estimator": "growth", "exponent": self.slope, "range": list(self.r_range),
                "residual": self.residual,
                "verdicts": [{"check": k, "pass": bool(v)} for k, v in self.verdicts.items()]}


def fit_growth_exponent(r, vol, r_lo: float | None = None, r_hi: float | None = None,
                        Q: float | None = None, L_hat: float | None = None,
                        tol: float = 0.1) -> GrowthFit:
    """Least-squares slope of ln vol against r over [r_lo, r_hi].

    With ``Q`` given the verdicts record slope <= Q + tol; with ``L_hat`` as
    well, slope >= Q / L_hat - tol.  L_hat under-estimates the true
    uniformity constant, so the second check is a weaker form of the lower growth bound.
    """
    r = np.asarray(r, dtype=float)
    vol = np.asarray(vol, dtype=float)
    lo = r[0] if r_lo is None else r_lo
    hi = r[-1] if r_hi is None else r_hi
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 5:
        raise FitError("need at least 5 curve points in the fit range")
    if np.any(~np.isfinite(vol[sel])) or np.any(vol[sel] <= 0):
        raise FitError("volumes must be finite and positive")
    slope, intercept, resid = _linfit(r[sel], np.log(vol[sel]))
    verdicts = {}
    if Q is not None:
        verdicts["slope <= Q + tol"] = slope <= Q + tol
        if L_hat is not None:
            verdicts["slope >= Q/L_hat - tol"] = slope >= Q / L_hat - tol
    return GrowthFit(slope, intercept, (float(lo), float(hi)), resid, verdicts)


@dataclass(frozen=True)
class EnvelopeReport:
    upper_ok: np.ndarray
    lower_ok: np.ndarray
    C: float
    c: float
    upper_rate: float
    lower_rate: float

    @property
    def passed(self) -> bool:
        return bool(self.upper_ok.all() and self.lower_ok.all())


def envelope_check(r, vol, Q: float, L_hat: float, tol: float = 0.1) -> EnvelopeReport:
    """Pointwise c e^{(Q/L - tol) r} <= vol <= C e^{(Q + tol) r}, constants fit at the smallest r."""
    r = np.asarray(r, dtype=float)
    vol = np.asarray(vol, dtype=float)
    up = Q + tol
    down = Q / L_hat - tol
    C = vol[0] * math.exp(-up * r[0])
    c = vol[0] * math.exp(-down * r[0])
    slack = 1e-12
    upper_ok = vol <= C * np.exp(up * r) * (1 + slack)
    lower_ok = vol >= c * np.exp(down * r) * (1 - slack)
    return EnvelopeReport(upper_ok, lower_ok, C, c, up, down)


def closed_form_growth_curve(domain: str, n: int, r_grid) -> np.ndarray:
    """Exact vol_k(B_k(x, r)) on the unit ball, punctured space or half space."""
    r_grid = np.asarray(r_grid, dtype=float)
    if domain == "unit_ball":
        f = lambda r: qh_vol_qh_ball_in_Bn_exact(n, r)
    elif domain == "punctured":
        f = lambda r: qh_vol_ball_punctured(n, r)
    elif domain == "halfspace":
        if n not in (2, 3):
            raise ValueError("half-space balls are available for n = 2, 3")
        f = qh_vol_ball_H2 if n == 2 else qh_vol_ball_H3
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return np.array([f(float(r)) for r in r_grid])


@dataclass(frozen=True)
class LayerRatioTable:
    domain: str
    n: int
    lam: float
    s: np.ndarray
    ratio: np.ndarray
    limit: float

    @property
    def monotone(self) -> bool:
        gap = np.abs(self.ratio - self.limit)
        order = np.argsort(self.s)[::-1]
        return bool(np.all(np.diff(gap[order]) <= 1e-15))


def layer_ratio_experiment(domain: str, lam: float, s_grid, n: int = 2) -> LayerRatioTable:
    """vol_k(E(s, lam s)) / vol_k(E(s, inf)) from closed forms, with its s -> 0 limit."""
    s = np.asarray(s_grid, dtype=float)
    if domain == "unit_ball":
        f = layer_ratio_unit_ball
    elif domain == "punctured_ball":
        f = layer_ratio_punctured_ball
    else:
        raise ValueError(f"unknown domain {domain!r}")
    ratio = np.array([f(n, lam, float(v)) for v in s])
    return LayerRatioTable(domain, n, float(lam), s, ratio, layer_ratio_limit(n, lam))
