"""Acceptance criteria as runnable checks.

Each ``criterion_*`` function returns a :class:`Criterion` holding one or
more named checks.  ``run_all`` is shared by the ``validate`` command and
the acceptance tests.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .geometry import FinitePoints, HalfspaceBoundary, Sphere, cantor_middle_thirds, similarity_dimension
from .hypergeom import hyp2f1
from .metric import ball_growth_curve, psi_uniformity_fit, qh_distance, qh_volume_cubes
from .montecarlo import QhBall, qh_volume_monte_carlo
from .regularity import envelope_check, fit_growth_exponent, fit_Q_from_counts, fit_Q_from_layers
from .special import (hypergeom_F111, layer_ratio_limit, layer_ratio_punctured_ball, layer_ratio_unit_ball,
                      qh_area_ball_punctured_plane, qh_dist_punctured, qh_vol_ball_H2, qh_vol_ball_H3,
                      qh_vol_ball_punctured, qh_vol_ball_punctured_bounds, qh_vol_euclidean_ball_in_Bn,
                      qh_vol_qh_ball_in_Bn, qh_vol_qh_ball_in_Bn_asymptote)
from .geometry import unit_ball_constants
from .whitney import count_generations, decompose

SEED = 20240917
CANTOR_WINDOW = (np.array([-1.0, -1.0]), np.array([2.0, 1.0]))
CANTOR_CENTRE = (0.5, 6.0)


@dataclass
class Check:
    label: str
    passed: bool
    detail: str = ""


@dataclass
class Criterion:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0
    budget: float = math.inf

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.seconds <= self.budget

    def add(self, label: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(label, bool(passed), detail))

    def lines(self) -> list[str]:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.title} ({self.seconds:.1f}s)"
        if self.seconds > self.budget:
            head += f" over budget {self.budget:.0f}s"
        return [head] + [f"    [{'ok' if c.passed else 'FAIL'}] {c.label}: {c.detail}" for c in self.checks]


def _timed(number: int, title: str, budget: float):
    def wrap(fn: Callable[[Criterion], None]):
        def run() -> Criterion:
            crit = Criterion(number, title, budget=budget)
            t0 = time.perf_counter()
            fn(crit)
            crit.seconds = time.perf_counter() - t0
            return crit
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# -- oracles --------------------------------------------------------------

def h2_ball_by_quadrature(r: float) -> float:
    """Integral of y^-2 over the disk B((0, cosh r), sinh r), with y = c + R sin(phi)."""
    c, R = math.cosh(r), math.sinh(r)
    f = lambda p: 2 * R * R * math.cos(p) ** 2 / (c + R * math.sin(p)) ** 2
    return quad(f, -math.pi / 2, math.pi / 2, epsabs=0, epsrel=1e-13, limit=200)[0]


def h3_ball_by_quadrature(r: float) -> float:
    """Integral of z^-3 over the ball B((0, 0, cosh r), sinh r), slicing by height."""
    c, R = math.cosh(r), math.sinh(r)
    f = lambda p: math.pi * R ** 3 * math.cos(p) ** 3 / (c + R * math.sin(p)) ** 3
    return quad(f, -math.pi / 2, math.pi / 2, epsabs=0, epsrel=1e-13, limit=200)[0]


def box_distance_to_point(lower: np.ndarray, upper: np.ndarray, p: np.ndarray) -> np.ndarray:
    gap = np.maximum(np.maximum(lower - p, p - upper), 0.0)
    return np.linalg.norm(gap, axis=1)


def box_distance_to_circle(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    near = box_distance_to_point(lower, upper, np.zeros(lower.shape[1]))
    far = np.linalg.norm(np.maximum(np.abs(lower), np.abs(upper)), axis=1)
    return np.where(far < 1, 1 - far, np.where(near > 1, near - 1, 0.0))


def cantor_intervals(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Left and right ends of the 2^depth intervals of the middle-thirds construction."""
    left = np.zeros(1)
    width = 1.0
    for _ in range(depth):
        width /= 3
        left = np.concatenate([left, left + 2 * width])
    left.sort()
    return left, left + width


def box_distance_to_cantor(lower, upper, depth: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Bracket of d(box, C x {0}) from the depth-``depth`` intervals (below) and their endpoints (above)."""
    a, b = cantor_intervals(depth)
    vert = np.maximum(np.maximum(lower[:, 1], -upper[:, 1]), 0.0)
    x0, x1 = lower[:, 0], upper[:, 0]

    def horiz(lo_ends, hi_ends):
        # distance from [x0, x1] to the union of [lo_ends, hi_ends]
        i = np.searchsorted(lo_ends, x1, side="right") - 1
        left_gap = np.where(i >= 0, np.maximum(x0 - hi_ends[np.clip(i, 0, None)], 0.0), np.inf)
        j = np.clip(i + 1, 0, len(lo_ends) - 1)
        right_gap = np.where(i + 1 < len(lo_ends), np.maximum(lo_ends[j] - x1, 0.0), np.inf)
        return np.minimum(left_gap, right_gap)

    h_lo = horiz(a, b)
    pts = np.sort(np.concatenate([a, b]))
    h_hi = horiz(pts, pts)
    return np.hypot(h_lo, vert), np.hypot(h_hi, vert)


def random_punctured_pairs(count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rho = np.exp(rng.uniform(-1.5, 1.5, (count, 2)))
    ang = rng.uniform(-math.pi, math.pi, (count, 2))
    return np.stack([rho * np.cos(ang), rho * np.sin(ang)], axis=-1)


# -- criteria -------------------------------------------------------------

@_timed(1, "closed-form unit tests", 1.0)
def criterion_1(c: Criterion) -> None:
    err = max(abs(hypergeom_F111(n, 1.0) - n / (n - 1)) for n in range(2, 7))
    c.add("F(1,1;n+1;1) = n/(n-1), n=2..6", err <= 1e-10, f"max abs err {err:.2e}")
    worst = 0.0
    for n in (2, 3, 4, 5):
        _, omega = unit_ball_constants(n)
        for r in (0.1, 0.3, 0.5, 0.7, 0.9):
            first = omega * r ** n / n * hyp2f1(n, n, n + 1, r)
            worst = max(worst, _rel(first, qh_vol_euclidean_ball_in_Bn(n, r)))
    c.add("unit-ball volume, F(n,n;n+1;r) form vs F(1,1;n+1;r) form, 20 points", worst <= 1e-10,
          f"max rel err {worst:.2e}")
    e2 = abs(qh_vol_ball_H2(1.0) - 2 * math.pi * (math.cosh(1) - 1))
    e2q = _rel(qh_vol_ball_H2(1.0), h2_ball_by_quadrature(1.0))
    c.add("H2 ball at r=1", e2 <= 1e-12 and e2q <= 1e-12, f"{qh_vol_ball_H2(1.0):.15g}; quadrature rel err {e2q:.1e}")
    e3 = abs(qh_vol_ball_H3(1.0) - math.pi * (math.sinh(2) - 2))
    e3q = _rel(qh_vol_ball_H3(1.0), h3_ball_by_quadrature(1.0))
    c.add("H3 ball at r=1", e3 <= 1e-12 and e3q <= 1e-12, f"{qh_vol_ball_H3(1.0):.15g}; quadrature rel err {e3q:.1e}")


@_timed(2, "unit-ball asymptote", 1.0)
def criterion_2(c: Criterion) -> None:
    for n, r in ((2, 10.0), (3, 8.0)):
        ratio = qh_vol_qh_ball_in_Bn(n, r) / qh_vol_qh_ball_in_Bn_asymptote(n, r)
        c.add(f"n={n}, r={r:g}", abs(ratio - 1) <= 0.01, f"ratio {ratio:.6f}")


@_timed(3, "layer-ratio limits", 1.0)
def criterion_3(c: Criterion) -> None:
    s = 2.0 ** -12
    for n in (2, 3):
        for lam in (2.0, 4.0):
            lim = layer_ratio_limit(n, lam)
            for name, f in (("unit ball", layer_ratio_unit_ball), ("punctured ball", layer_ratio_punctured_ball)):
                v = f(n, lam, s)
                c.add(f"{name}, n={n}, lambda={lam:g}", abs(v - lim) <= 0.02, f"{v:.6f} vs {lim:.6f}")


def _whitney_sets():
    return {
        "point": (FinitePoints(np.zeros((1, 2))), (np.array([-1.0, -1.0]), np.array([1.0, 1.0])), 3),
        "circle": (Sphere(np.zeros(2), 1.0), (np.array([-2.0, -2.0]), np.array([2.0, 2.0])), 3),
        "cantor": (cantor_middle_thirds(), CANTOR_WINDOW, 3),
    }


def exact_cube_distances(name: str, lower: np.ndarray, upper: np.ndarray):
    if name == "point":
        d = box_distance_to_point(lower, upper, np.zeros(2))
        return d, d
    if name == "circle":
        d = box_distance_to_circle(lower, upper)
        return d, d
    return box_distance_to_cantor(lower, upper)


def disjoint_across_generations(dec) -> bool:
    seen = {}
    for k in dec.generations:
        keys = {tuple(c) for c in dec.cubes[k].tolist()}
        if len(keys) != len(dec.cubes[k]):
            return False
        seen[k] = keys
    for k in dec.generations:
        idx = dec.cubes[k]
        for j in dec.generations:
            if j >= k or not seen[j]:
                continue
            anc = idx >> (k - j)
            if any(tuple(a) in seen[j] for a in anc.tolist()):
                return False
    return True


def coverage_misses(E, dec, samples: int, seed: int) -> int:
    n = E.dim
    lo, hi = dec.window
    d_lo = 2 * math.sqrt(n) * 2.0 ** -dec.k_max
    d_hi = 3 * math.sqrt(n) * 2.0 ** -dec.k_min
    rng = np.random.default_rng(seed)
    pts = np.empty((0, n))
    while len(pts) < samples:
        # sample near E as well as uniformly, so fine layers are represented
        z = lo + (hi - lo) * rng.random((4 * samples, n))
        base = E.sample(4 * samples, rng)
        t = np.exp(rng.uniform(math.log(d_lo), math.log(d_hi), 4 * samples))
        u = rng.standard_normal((4 * samples, n))
        z = np.vstack([z, base + t[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)])
        d = E.distance(z)
        ok = (d >= d_lo) & (d <= d_hi) & np.all((z > lo) & (z < hi), axis=1)
        pts = np.vstack([pts, z[ok]])
    pts = pts[:samples]
    _, row = dec.locate(pts)
    return int(np.count_nonzero(row < 0))


@_timed(4, "Whitney invariants", 90.0)
def criterion_4(c: Criterion) -> None:
    for name, (E, window, k_min) in _whitney_sets().items():
        t0 = time.perf_counter()
        dec = decompose(E, window, k_min, 12)
        gens, idx = dec.flat()
        side = 2.0 ** -gens.astype(float)
        lower, upper = idx * side[:, None], (idx + 1) * side[:, None]
        d_lo, d_hi = exact_cube_distances(name, lower, upper)
        diam = math.sqrt(2) * side
        bounds = bool(np.all(d_lo >= diam * (1 - 1e-12)) and np.all(d_hi <= 4 * diam * (1 + 1e-12)))
        disjoint = disjoint_across_generations(dec)
        misses = coverage_misses(E, dec, 10_000, SEED)
        dt = time.perf_counter() - t0
        c.add(f"{name}: {len(dec)} cubes", bounds and disjoint and misses == 0 and dt < 30,
              f"distance bounds {'hold' if bounds else 'FAIL'}, disjoint {disjoint}, "
              f"uncovered {misses}/10000, {dt:.1f}s")


@_timed(5, "cube-count regularity", 60.0)
def criterion_5(c: Criterion) -> None:
    Q = similarity_dimension(cantor_middle_thirds())
    E = cantor_middle_thirds()
    counts = count_generations(decompose(E, CANTOR_WINDOW, 3, 19))
    fc = fit_Q_from_counts(counts, 6, 13)
    c.add("Cantor counts, k=6..13", abs(fc.Q_hat - Q) <= 0.05, f"Q_hat {fc.Q_hat:.4f} vs {Q:.4f}")
    fl = fit_Q_from_layers(E, 2.0 ** -np.arange(4, 10))
    c.add("Cantor layers vs counts", abs(fl.Q_hat - fc.Q_hat) <= 0.1, f"{fl.Q_hat:.4f} vs {fc.Q_hat:.4f}")
    S = Sphere(np.zeros(2), 1.0)
    sc = fit_Q_from_counts(count_generations(decompose(S, (np.array([-2.0, -2.0]), np.array([2.0, 2.0])), 3, 14)))
    c.add("circle counts", abs(sc.Q_hat - 1) <= 0.1, f"Q_hat {sc.Q_hat:.4f} over k={sc.range}")
    sl = fit_Q_from_layers(S, 2.0 ** -np.arange(4, 10))
    c.add("circle layers vs counts", abs(sl.Q_hat - sc.Q_hat) <= 0.1, f"{sl.Q_hat:.4f} vs {sc.Q_hat:.4f}")


@_timed(6, "distance oracle agreement", 60.0)
def criterion_6(c: Criterion) -> None:
    P = FinitePoints(np.zeros((1, 2)))
    worst = 0.0
    for x, y in random_punctured_pairs(20, SEED):
        got = qh_distance(P, x, y, 12).upper_bound
        worst = max(worst, _rel(got, qh_dist_punctured(x, y)))
    c.add("20 punctured-plane pairs, k_max=12", worst <= 0.03, f"max rel err {worst:.4f}")
    got = qh_distance(HalfspaceBoundary(2), (0.0, 1.0), (0.0, math.e), 12).upper_bound
    c.add("half plane, (0,1) to (0,e)", _rel(got, 1.0) <= 0.02, f"{got:.5f} vs 1")


@_timed(7, "per-cube volume bounds", 30.0)
def criterion_7(c: Criterion) -> None:
    for name, (E, window, k_min) in _whitney_sets().items():
        dec = decompose(E, window, k_min, 10)
        gens, idx = dec.flat()
        res = qh_volume_cubes(E, gens, idx, check=False)
        n = E.dim
        top, bottom = n ** (-n / 2), 5.0 ** -n * n ** (-n / 2)
        inside = float(np.mean((res.values <= top) & (res.values >= bottom)))
        c.add(f"{name}: {len(gens)} cubes", inside == 1.0,
              f"{100 * inside:.1f}% inside [5^-n, 1] n^-n/2; range [{res.values.min():.4f}, "
              f"{res.values.max():.4f}]; tighter 2^-2n constant held: {res.tight_lower_held}")


def punctured_monte_carlo(r: float, workers: int = 1, samples: int = 10 ** 6):
    return qh_volume_monte_carlo(FinitePoints(np.zeros((1, 2))), QhBall((1.0, 0.0), r), samples, SEED, workers)


@_timed(8, "punctured-space sandwich and Monte Carlo", 300.0)
def criterion_8(c: Criterion) -> None:
    curve = ball_growth_curve(FinitePoints(np.zeros((1, 3))), (1.0, 0.0, 0.0), [4.0, 5.0, 6.0], 13)
    for r, lo, est, hi in zip(curve.r, curve.vol_lo, curve.vol_est, curve.vol_hi):
        a, b = qh_vol_ball_punctured_bounds(3, r)
        c.add(f"R^3 minus 0, cube sum at r={r:g}", a <= est <= b,
              f"{est:.3f} (bracket [{lo:.3f}, {hi:.3f}]) in [{a:.3f}, {b:.3f}]")
    for label, r in (("1", 1.0), ("pi", math.pi), ("2pi", 2 * math.pi)):
        mc = punctured_monte_carlo(r)
        stated = qh_area_ball_punctured_plane(r)
        z = (mc.estimate - stated) / mc.stderr
        detail = f"MC {mc.estimate:.4f} +- {mc.stderr:.4f} vs formula {stated:.4f} ({z:+.1f} SE)"
        if abs(z) > 3:
            detail += f"; log-polar area {qh_vol_ball_punctured(2, r):.4f}"
        c.add(f"punctured plane, MC vs area formula at r={label}", abs(z) <= 3, detail)


def cantor_growth(k_max: int = 12):
    r = np.arange(3.0, 8.0 + 1e-9, 0.5)
    return r, ball_growth_curve(cantor_middle_thirds(), CANTOR_CENTRE, r, k_max)


def cantor_psi(pairs: int = 200, workers: int = 1):
    return psi_uniformity_fit(cantor_middle_thirds(), pairs, SEED, 12, workers=workers)


@_timed(9, "growth sandwich for the Cantor complement", 600.0)
def criterion_9(c: Criterion) -> None:
    Q = similarity_dimension(cantor_middle_thirds())
    psi = cantor_psi()
    r, curve = cantor_growth()
    env = envelope_check(r, curve.vol_est, Q, psi.L_hat)
    c.add("upper envelope C e^{(Q+0.1) r}", env.upper_ok.all(),
          f"{int(env.upper_ok.sum())}/{len(r)} points, C = {env.C:.4g}")
    c.add("lower envelope c e^{(Q/L-0.1) r}", env.lower_ok.all(),
          f"{int(env.lower_ok.sum())}/{len(r)} points, L_hat = {psi.L_hat:.3f}, c = {env.c:.4g}")
    fit = fit_growth_exponent(r, curve.vol_est, Q=Q, L_hat=psi.L_hat)
    c.add("slope in (0, Q + 0.1]", 0 < fit.slope <= Q + 0.1, f"slope {fit.slope:.4f}, Q = {Q:.4f}")


@_timed(10, "determinism across worker counts", 600.0)
def criterion_10(c: Criterion) -> None:
    for r in (1.0, math.pi, 2 * math.pi):
        a = json.dumps(punctured_monte_carlo(r, 1).to_json())
        b = json.dumps(punctured_monte_carlo(r, 4).to_json())
        c.add(f"Monte Carlo r={r:.4g}, workers 1 vs 4", a == b, "identical" if a == b else f"{a} != {b}")
    a = json.dumps(cantor_psi(workers=1).to_json())
    b = json.dumps(cantor_psi(workers=4).to_json())
    c.add("uniformity fit, workers 1 vs 4", a == b, "identical" if a == b else f"{a} != {b}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def run_all(selected=None, echo: Callable[[str], None] | None = None) -> list[Criterion]:
    out = []
    for fn in CRITERIA:
        if selected and int(fn.__name__.split("_")[1]) not in selected:
            continue
        crit = fn()
        out.append(crit)
        if echo:
            for line in crit.lines():
                echo(line)
    return out
