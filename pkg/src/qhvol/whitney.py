"""Windowed Whitney decomposition of R^n minus E into closed dyadic cubes.

A cube of generation k with integer corner index c is the product of
``[c_i 2^-k, (c_i + 1) 2^-k]``.  A cube is kept when its distance to E is
certified to lie in ``[sqrt(n) 2^-k, 4 sqrt(n) 2^-k]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterator

import numpy as np

from .geometry import Descriptor

MAX_TOP_CUBES = 4_000_000


@dataclass(frozen=True)
class DyadicCube:
    k: int
    corner_index: tuple[int, ...]
    d_lo: float = 0.0
    d_hi: float = math.inf

    @property
    def n(self) -> int:
        return len(self.corner_index)

    @property
    def side(self) -> float:
        return 2.0 ** -self.k

    @property
    def diam(self) -> float:
        return math.sqrt(self.n) * self.side

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.corner_index, dtype=float) * self.side

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.side

    @property
    def center(self) -> np.ndarray:
        return self.lower + 0.5 * self.side


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    descriptor: Descriptor
    window: tuple[np.ndarray, np.ndarray]
    k_min: int
    k_max: int
    cubes: dict[int, np.ndarray]
    d_lo: dict[int, np.ndarray]
    d_hi: dict[int, np.ndarray]

    @property
    def dim(self) -> int:
        return self.descriptor.dim

    @property
    def generations(self) -> list[int]:
        return list(range(self.k_min, self.k_max + 1))

    def __len__(self) -> int:
        return sum(len(v) for v in self.cubes.values())

    def iter_cubes(self) -> Iterator[DyadicCube]:
        for k in self.generations:
            for c, lo, hi in zip(self.cubes[k], self.d_lo[k], self.d_hi[k]):
                yield DyadicCube(k, tuple(int(v) for v in c), float(lo), float(hi))

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All cubes as ``(generation, corner_index)`` arrays."""
        gens = np.concatenate([np.full(len(self.cubes[k]), k) for k in self.generations])
        idx = np.concatenate([self.cubes[k] for k in self.generations]).astype(np.int64)
        return gens, idx.reshape(-1, self.dim)

    @cached_property
    def _lookup(self) -> dict[int, dict[tuple[int, ...], int]]:
        return {k: {tuple(c): i for i, c in enumerate(self.cubes[k].tolist())}
                for k in self.generations}

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Generation and row of the emitted cube containing each point (-1 if none).

        Membership is half-open, so every point falls in at most one cube.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        gen = np.full(len(points), -1 << 40, dtype=np.int64)
        row = np.full(len(points), -1, dtype=np.int64)
        for k in self.generations:
            table = self._lookup[k]
            if not table:
                continue
            idx = np.floor(points * 2.0 ** k).astype(np.int64)
            for i in np.flatnonzero(row < 0):
                j = table.get(tuple(idx[i]))
                if j is not None:
                    gen[i], row[i] = k, j
        return gen, row


@dataclass(frozen=True)
class GenerationCounts:
    N: dict[int, int]
    n0: int
    n1: int
    Ntilde: dict[int, int] = field(default_factory=dict)


def offsets_n0_n1(n: int) -> tuple[int, int]:
    """Smallest n0 with 8 sqrt(n) 2^-n0 <= 1 and largest n1 with 80 sqrt(n) 2^-n1 >= 1."""
    n0 = math.ceil(math.log2(8 * math.sqrt(n)))
    n1 = math.floor(math.log2(80 * math.sqrt(n)))
    return n0, n1


def default_window(E: Descriptor, k_min: int, factor: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of E inflated to satisfy the decomposition precondition."""
    lo, hi = E.bbox()
    n = E.dim
    pad = max(2.0 ** (2 - k_min) * math.sqrt(n), factor * float(np.max(hi - lo)) / 2)
    return lo - pad, hi + pad


def _check_window(E: Descriptor, window, k_min: int):
    lo, hi = window
    if np.any(hi <= lo):
        raise ValueError("window must have positive extent")
    if not E.bounded:
        return
    elo, ehi = E.bbox()
    pad = 2.0 ** (2 - k_min) * math.sqrt(E.dim)
    if np.any(elo - pad < lo) or np.any(ehi + pad > hi):
        raise ValueError(
            f"window too small: it must contain the bounding box of E inflated by {pad:.6g}")


def _children(idx: np.ndarray, n: int) -> np.ndarray:
    shifts = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij")).reshape(n, -1).T
    return (2 * idx[:, None, :] + shifts[None]).reshape(-1, n)


def _inside_window(idx: np.ndarray, k: int, window) -> np.ndarray:
    lo, hi = window
    h = 2.0 ** -k
    return np.all((idx + 1) * h > lo, axis=1) & np.all(idx * h < hi, axis=1)


def top_level_cubes(window, k: int) -> np.ndarray:
    lo, hi = (np.asarray(w, dtype=float) for w in window)
    first = np.floor(lo * 2.0 ** k).astype(np.int64)
    last = np.ceil(hi * 2.0 ** k).astype(np.int64) - 1
    total = int(np.prod(last - first + 1))
    if total > MAX_TOP_CUBES:
        raise ValueError(f"window needs {total} cubes at generation {k}; raise k_min's side or shrink it")
    axes = [np.arange(a, b + 1) for a, b in zip(first, last)]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T


def decompose(E: Descriptor, window=None, k_min: int = 0, k_max: int = 10,
              rel_tol: float = 1e-3) -> WhitneyDecomposition:
    """Top-down dyadic subdivision of ``window`` into Whitney cubes of R^n minus E.

    Starting from the generation ``k_min`` tiling of the window, a cube is
    emitted when the certified interval for d(Q, E) lies inside
    ``[sqrt(n) 2^-k, 4 sqrt(n) 2^-k]``, subdivided while it may be too close,
    and dropped when it is too far (only possible at the top level) or when
    generation ``k_max`` is reached without qualifying.  Distances of cube
    centres are certified to ``rel_tol`` times the cube side.
    """
    if k_min > k_max:
        raise ValueError(f"empty generation range {k_min}..{k_max}")
    n = E.dim
    if window is None:
        window = default_window(E, k_min)
    window = tuple(np.asarray(w, dtype=float) for w in window)
    _check_window(E, window, k_min)
    root = math.sqrt(n)
    cubes, d_lo, d_hi = {}, {}, {}
    idx = top_level_cubes(window, k_min)
    for k in range(k_min, k_max + 1):
        h = 2.0 ** -k
        diam = root * h
        centers = (idx + 0.5) * h
        lo, hi = E.distance_bounds(centers, rel_tol * h) if len(idx) else (np.empty(0), np.empty(0))
        cube_lo = lo - 0.5 * diam
        emit = (cube_lo >= diam) & (hi <= 4 * diam)
        cubes[k] = idx[emit]
        d_lo[k] = np.maximum(cube_lo[emit], 0.0)
        d_hi[k] = hi[emit]
        if k < k_max:
            kids = _children(idx[cube_lo < diam], n)
            idx = kids[_inside_window(kids, k + 1, window)]
    return WhitneyDecomposition(E, window, k_min, k_max, cubes, d_lo, d_hi)


def count_generations(dec: WhitneyDecomposition) -> GenerationCounts:
    n0, n1 = offsets_n0_n1(dec.dim)
    N = {k: int(len(dec.cubes[k])) for k in dec.generations}
    Ntilde = {k: sum(N[k + j] for j in range(n0, n1 + 1))
              for k in range(dec.k_min - n0, dec.k_max - n1 + 1)}
    return GenerationCounts(N, n0, n1, Ntilde)


def layer_volume(E: Descriptor, r: float, k_grid: int) -> float:
    """Lebesgue measure of E(r) = {z : d(z, E) <= r} on the dyadic grid of side 2^-k_grid.

    Counts grid cells whose centre lies within ``r`` of E.  Coarse cells that
    are certainly inside or outside E(r) are resolved without descending, so
    the count equals the brute-force centre count.  The relative
    discretization error behaves like ``2^-k_grid / r``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not E.bounded:
        raise ValueError("layer volume needs a bounded set")
    h_fine = 2.0 ** -k_grid
    if h_fine > r / 16:
        raise ValueError(f"resolution too coarse: need 2^-k_grid <= r/16 (r={r}, k_grid={k_grid})")
    n = E.dim
    lo, hi = E.bbox()
    k0 = min(k_grid, math.floor(-math.log2(r)))
    idx = top_level_cubes((lo - r, hi + r), k0)
    tol = 1e-3 * h_fine
    count = 0
    for k in range(k0, k_grid + 1):
        h = 2.0 ** -k
        centers = (idx + 0.5) * h
        dlo, dhi = E.distance_bounds(centers, tol)
        if k == k_grid:
            count += int(np.count_nonzero(0.5 * (dlo + dhi) <= r))
            break
        half = 0.5 * math.sqrt(n) * h
        inside = dhi + half <= r
        outside = dlo - half > r
        count += int(np.count_nonzero(inside)) * 2 ** (n * (k_grid - k))
        idx = _children(idx[~inside & ~outside], n)
    return count * h_fine ** n


def write_cubes_csv(dec: WhitneyDecomposition, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k"] + [f"c_{i + 1}" for i in range(dec.dim)] + ["d_lo", "d_hi"])
    for k in dec.generations:
        for c, a, b in zip(dec.cubes[k].tolist(), dec.d_lo[k], dec.d_hi[k]):
            w.writerow([k, *c, repr(float(a)), repr(float(b))])


def write_counts_csv(counts: GenerationCounts, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "N_k", "Ntilde_k"])
    for k in sorted(set(counts.N) | set(counts.Ntilde)):
        w.writerow([k, counts.N.get(k, ""), counts.Ntilde.get(k, "")])
