"""Seeded Monte Carlo estimates of quasihyperbolic volume.

Samples are drawn in fixed-size blocks; block ``b`` uses the generator
``default_rng([seed, b])``.  Block sums are combined in block order, so the
estimate depends only on ``(seed, samples)`` and not on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Descriptor, FinitePoints, HalfspaceBoundary, as_point, unit_ball_constants
from .metric import QhField, exact_metric

BLOCK = 1 << 16


@dataclass(frozen=True)
class EuclideanBall:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, ...]
    a: float
    b: float


@dataclass(frozen=True)
class QhBall:
    center: tuple[float, ...]
    r: float
    k_max: int = 12


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    stderr: float
    samples: int
    accepted: int
    seed: int

    def to_json(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples,
                "accepted": self.accepted, "seed": self.seed}


# -- samplers: each returns points and the weight 1 / density ----------------

def _directions(rng, count, n):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class RadialShell:
    """Density proportional to |z - c|^-n on a < |z - c| < b (log-uniform radius)."""

    def __init__(self, center, a: float, b: float):
        if not 0 < a < b:
            raise ValueError("need 0 < a < b")
        self.c = np.asarray(center, dtype=float)
        self.a, self.b = float(a), float(b)
        _, self.omega = unit_ball_constants(len(self.c))

    def draw(self, rng, count):
        n = len(self.c)
        rho = self.a * (self.b / self.a) ** rng.random(count)
        z = self.c + rho[:, None] * _directions(rng, count, n)
        return z, self.omega * math.log(self.b / self.a) * rho ** n


class UniformBall:
    def __init__(self, center, radius: float):
        self.c = np.asarray(center, dtype=float)
        self.R = float(radius)
        n = len(self.c)
        self.volume = unit_ball_constants(n)[0] * self.R ** n

    def draw(self, rng, count):
        n = len(self.c)
        rho = self.R * rng.random(count) ** (1.0 / n)
        z = self.c + rho[:, None] * _directions(rng, count, n)
        return z, np.full(count, self.volume)


class UniformBox:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.volume = float(np.prod(self.hi - self.lo))

    def draw(self, rng, count):
        z = self.lo + (self.hi - self.lo) * rng.random((count, len(self.lo)))
        return z, np.full(count, self.volume)


def _plan(E: Descriptor, region):
    """(sampler, membership test) for a region."""
    n = E.dim
    if isinstance(region, EuclideanBall):
        c = as_point(region.center, n)
        return UniformBall(c, region.radius), lambda z: np.linalg.norm(z - c, axis=1) < region.radius
    if isinstance(region, Annulus):
        c = as_point(region.center, n)

        def inside(z):
            rho = np.linalg.norm(z - c, axis=1)
            return (rho > region.a) & (rho < region.b)
        return RadialShell(c, region.a, region.b), inside
    if isinstance(region, QhBall):
        x = as_point(region.center, n)
        r = float(region.r)
        exact = exact_metric(E)
        if exact is not None:
            inside = lambda z: exact(x, z) < r
        else:
            field = QhField(E, x, r, region.k_max)
            inside = lambda z: field.distances(z) < r
        dx = float(E.distance(x[None])[0])
        # the ball lies in the layer e^-r d(x) < d(z) < e^r d(x)
        if isinstance(E, FinitePoints) and len(E.points) == 1:
            return RadialShell(E.points[0], dx * math.exp(-r), dx * math.exp(r)), inside
        if isinstance(E, HalfspaceBoundary):
            c = x.copy()
            c[-1] = x[-1] * math.cosh(r)
            return UniformBall(c, x[-1] * math.sinh(r) * (1 + 1e-9)), inside
        lo, hi = E.bbox()
        pad = dx * math.exp(r)
        return UniformBox(lo - pad, hi + pad), inside
    raise TypeError(f"unsupported region {region!r}")


def _block(E, sampler, inside, seed, b, count):
    rng = np.random.default_rng([seed, b])
    z, w = sampler.draw(rng, count)
    d = E.distance(z, 1e-9)
    hit = inside(z) & (d > 0)
    f = np.where(hit, w * np.where(hit, d, 1.0) ** -E.dim, 0.0)
    return float(f.sum()), float((f * f).sum()), int(hit.sum())


def qh_volume_monte_carlo(E: Descriptor, region, samples: int, seed: int,
                          workers: int = 1) -> MonteCarloResult:
    """Importance-sampled estimate of vol_k(region) and its standard error."""
    if samples < 2:
        raise ValueError("need at least two samples")
    if seed is None:
        raise ValueError("a seed is required")
    sampler, inside = _plan(E, region)
    counts = [min(BLOCK, samples - s) for s in range(0, samples, BLOCK)]
    job = lambda b: _block(E, sampler, inside, seed, b, counts[b])
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(len(counts))))
    else:
        parts = [job(b) for b in range(len(counts))]
    s1 = s2 = 0.0
    hits = 0
    for a, b, h in parts:
        s1 += a
        s2 += b
        hits += h
    if hits == 0:
        raise RuntimeError("region not hit")
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return MonteCarloResult(mean, math.sqrt(var / samples), samples, hits, seed)
