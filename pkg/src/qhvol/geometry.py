"""Compact boundary sets and a certified Euclidean distance oracle.

Every boundary set E is a frozen descriptor.  Distances are exposed in two
forms: ``distance_to_set`` for a single point (returns a ``DistanceResult``)
and ``Descriptor.distance_bounds`` for a batch of points (returns arrays
``lo <= d(z, E) <= hi``).  Descriptors with closed-form geometry return
``lo == hi``.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_REL_TOL = 1e-9


class DescriptorError(ValueError):
    """Raised for malformed or inadmissible boundary descriptors."""


def as_point(coords: Sequence[float], dim: int | None = None) -> np.ndarray:
    p = np.asarray(coords, dtype=float).reshape(-1)
    if p.size < 2:
        raise ValueError("points need dimension n >= 2")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite coordinates {p}")
    if dim is not None and p.size != dim:
        raise ValueError(f"expected a point in R^{dim}, got {p.size} coordinates")
    return p


def _as_batch(z: np.ndarray, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[-1] != dim:
        raise ValueError(f"points of dimension {z.shape[-1]} for a set in R^{dim}")
    return z


def unit_ball_constants(n: int) -> tuple[float, float]:
    """Return ``(Omega_n, omega_{n-1})``: unit ball volume and unit sphere area."""
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n}")
    omega_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return omega_ball, n * omega_ball


@dataclass(frozen=True)
class DistanceResult:
    value: float
    error_bound: float = 0.0

    @property
    def lo(self) -> float:
        return max(self.value - self.error_bound, 0.0)

    @property
    def hi(self) -> float:
        return self.value + self.error_bound


class Descriptor:
    """Base class for boundary sets E in R^n."""

    dim: int
    bounded = True

    def distance_bounds(self, z: np.ndarray, tol: float | None = None):
        """Return ``(lo, hi)`` arrays bracketing d(z, E) for a batch ``z``."""
        raise NotImplementedError

    def distance(self, z: np.ndarray, tol: float | None = None) -> np.ndarray:
        lo, hi = self.distance_bounds(z, tol)
        return 0.5 * (lo + hi)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def default_tol(self) -> float:
        return DEFAULT_REL_TOL * max(self.diameter, 1.0)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` points lying on E."""
        raise NotImplementedError

    def to_json(self) -> dict[str, Any]:
        raise NotImplementedError

    def scaled(self, c: float) -> "Descriptor":
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FinitePoints(Descriptor):
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise DescriptorError("empty set")
        if pts.shape[1] < 2 or not np.all(np.isfinite(pts)):
            raise DescriptorError("points must be finite and of dimension >= 2")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.points)

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        if len(self.points) == 1:
            d = np.linalg.norm(z - self.points[0], axis=-1)
        else:
            d, _ = self._tree.query(z)
        return d, d

    def bbox(self):
        return self.points.min(axis=0), self.points.max(axis=0)

    def sample(self, count, rng):
        return self.points[rng.integers(len(self.points), size=count)]

    def to_json(self):
        return {"type": "points", "points": self.points.tolist()}

    def scaled(self, c):
        return FinitePoints(c * self.points)


@dataclass(frozen=True, eq=False)
class Sphere(Descriptor):
    """The sphere S^{n-1}(center, radius)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise DescriptorError("sphere radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        d = np.abs(np.linalg.norm(z - self.center, axis=-1) - self.radius)
        return d, d

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def sample(self, count, rng):
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.radius * u

    def to_json(self):
        return {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}

    def scaled(self, c):
        return Sphere(c * self.center, c * self.radius)


@dataclass(frozen=True, eq=False)
class PuncturedBallBoundary(Descriptor):
    """S^{n-1}(radius) together with the origin: the boundary of B^n(radius) minus 0."""

    radius: float
    dim: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise DescriptorError("radius must be positive")
        if self.dim < 2:
            raise DescriptorError("dimension must be >= 2")

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        r = np.linalg.norm(z, axis=-1)
        d = np.minimum(np.abs(r - self.radius), r)
        return d, d

    def bbox(self):
        return np.full(self.dim, -self.radius), np.full(self.dim, self.radius)

    def sample(self, count, rng):
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = self.radius * u
        pts[rng.random(count) < 0.5] = 0.0
        return pts

    def to_json(self):
        return {"type": "punctured_ball_boundary", "radius": self.radius}

    def scaled(self, c):
        return PuncturedBallBoundary(c * self.radius, self.dim)


@dataclass(frozen=True, eq=False)
class HalfspaceBoundary(Descriptor):
    """The coordinate hyperplane x_n = 0 (closed, unbounded)."""

    dim: int = 2
    bounded = False

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        d = np.abs(z[:, -1])
        return d, d

    def bbox(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        lo[-1] = hi[-1] = 0.0
        return lo, hi

    def default_tol(self):
        return DEFAULT_REL_TOL

    def sample(self, count, rng):
        raise DescriptorError("cannot sample an unbounded set")

    def to_json(self):
        return {"type": "halfspace"}

    def scaled(self, c):
        return self


def _segment_distances(z: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    L2 = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", z - a, ab) / np.where(L2 > 0, L2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(z - (a + t[..., None] * ab), axis=-1)


@dataclass(frozen=True, eq=False)
class PolygonalCurve(Descriptor):
    """A polyline through ``vertices``; closed curves repeat the first vertex."""

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.size == 0:
            raise DescriptorError("empty set")
        if v.shape[1] < 2 or not np.all(np.isfinite(v)):
            raise DescriptorError("vertices must be finite and of dimension >= 2")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if len(v) == 1:
            return v, v
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @cached_property
    def _index(self):
        a, b = self.segments
        mid = 0.5 * (a + b)
        half = 0.5 * np.linalg.norm(b - a, axis=1).max()
        return cKDTree(mid), half

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        a, b = self.segments
        if len(a) <= 64:
            d = _segment_distances(z[:, None, :], a[None], b[None]).min(axis=1)
            return d, d
        # any segment closer than the nearest midpoint has its midpoint
        # within that distance plus the largest half-length
        tree, half = self._index
        upper, _ = tree.query(z)
        cand = tree.query_ball_point(z, upper + half + 1e-12)
        counts = np.fromiter((len(c) for c in cand), dtype=np.intp, count=len(z))
        seg = np.fromiter((i for c in cand for i in c), dtype=np.intp, count=counts.sum())
        owner = np.repeat(np.arange(len(z)), counts)
        dd = _segment_distances(z[owner], a[seg], b[seg])
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        d = np.minimum.reduceat(dd, starts)
        return d, d

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def sample(self, count, rng):
        a, b = self.segments
        w = np.linalg.norm(b - a, axis=1)
        if w.sum() == 0:
            return a[rng.integers(len(a), size=count)]
        idx = rng.choice(len(a), size=count, p=w / w.sum())
        t = rng.random(count)[:, None]
        return a[idx] + t * (b[idx] - a[idx])

    def to_json(self):
        return {"type": "polygon", "vertices": self.vertices.tolist(), "closed": self.closed}

    def scaled(self, c):
        return PolygonalCurve(c * self.vertices, self.closed)


# largest uniform cylinder cut, as log2 of the cylinder count
MAX_CUT_LOG2 = 22


@dataclass(frozen=True)
class Similitude:
    """x -> ratio * rotation @ x + translation."""

    ratio: float
    translation: tuple[float, ...]
    rotation: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if not 0 < self.ratio < 1:
            raise DescriptorError(f"IFS map is not contractive (ratio {self.ratio})")
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        if self.rotation is not None:
            R = np.asarray(self.rotation, dtype=float)
            if R.shape != (len(self.translation),) * 2 or not np.allclose(R @ R.T, np.eye(len(R)), atol=1e-12):
                raise DescriptorError("rotation part must be an orthogonal matrix")
            object.__setattr__(self, "rotation", tuple(map(tuple, R.tolist())))

    @property
    def linear(self) -> np.ndarray:
        n = len(self.translation)
        R = np.eye(n) if self.rotation is None else np.asarray(self.rotation)
        return self.ratio * R

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.linear.T + np.asarray(self.translation)

    def fixed_point(self) -> np.ndarray:
        n = len(self.translation)
        return np.linalg.solve(np.eye(n) - self.linear, np.asarray(self.translation))


@dataclass(frozen=True, eq=False)
class IFSAttractor(Descriptor):
    """Attractor of an iterated function system of similitudes.

    With ``strong_separation`` set, the images of ``separation_box`` (default:
    the box around the invariant ball) under the maps must have pairwise
    disjoint bounding boxes.
    """

    maps: tuple[Similitude, ...]
    strong_separation: bool = False
    separation_box: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        maps = tuple(m if isinstance(m, Similitude) else Similitude(**m) for m in self.maps)
        if not maps:
            raise DescriptorError("empty set")
        dims = {len(m.translation) for m in maps}
        if len(dims) != 1 or dims.pop() < 2:
            raise DescriptorError("IFS maps must share one dimension >= 2")
        object.__setattr__(self, "maps", maps)
        if self.strong_separation:
            self._check_separation()

    @property
    def dim(self) -> int:
        return len(self.maps[0].translation)

    @cached_property
    def _affine(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        A = np.stack([m.linear for m in self.maps])
        t = np.stack([np.asarray(m.translation) for m in self.maps])
        s = np.array([m.ratio for m in self.maps])
        return A, t, s

    @cached_property
    def invariant_ball(self) -> tuple[np.ndarray, float]:
        """A ball B(c, R) mapped into itself by every map, hence containing A."""
        c = np.mean([m.fixed_point() for m in self.maps], axis=0)
        R = max(np.linalg.norm(m(c) - c) / (1 - m.ratio) for m in self.maps)
        return c, float(R)

    @cached_property
    def anchor(self) -> np.ndarray:
        """A point of the attractor (fixed point of the first map)."""
        return self.maps[0].fixed_point()

    def _check_separation(self):
        if self.separation_box is None:
            c, R = self.invariant_ball
            lo, hi = c - R, c + R
        else:
            lo, hi = (np.asarray(v, dtype=float) for v in self.separation_box)
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(self.dim, -1).T
        boxes = []
        for m in self.maps:
            img = m(corners)
            boxes.append((img.min(axis=0), img.max(axis=0)))
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                (alo, ahi), (blo, bhi) = boxes[i], boxes[j]
                if np.all(alo <= bhi) and np.all(blo <= ahi):
                    raise DescriptorError(
                        f"strong separation fails: images {i} and {j} of the box overlap")

    @cached_property
    def _cut_cache(self) -> dict:
        return {}

    def cylinders(self, level: int):
        """Cylinder cut where every cylinder ball has radius <= R * 2**-level.

        Returns ``(centers, radii, points)``: images of the invariant ball and
        of the anchor point under the composed maps.
        """
        cache = self._cut_cache
        if level in cache:
            return cache[level]
        A, t, s = self._affine
        c, R = self.invariant_ball
        target = R * 2.0 ** -level
        lin = np.eye(self.dim)[None]
        off = np.zeros((1, self.dim))
        scale = np.ones(1)
        done_lin, done_off, done_scale = [], [], []
        while len(scale):
            fine = scale * R <= target
            done_lin.append(lin[fine])
            done_off.append(off[fine])
            done_scale.append(scale[fine])
            lin, off, scale = lin[~fine], off[~fine], scale[~fine]
            if not len(scale):
                break
            # children f_w o f_i: linear part L_w A_i, offset L_w t_i + o_w
            off = (np.einsum("wij,mj->wmi", lin, t) + off[:, None, :]).reshape(-1, self.dim)
            lin = np.einsum("wij,mjk->wmik", lin, A).reshape(-1, self.dim, self.dim)
            scale = (scale[:, None] * s[None]).reshape(-1)
        lin = np.concatenate(done_lin)
        off = np.concatenate(done_off)
        scale = np.concatenate(done_scale)
        centers = np.einsum("wij,j->wi", lin, c) + off
        points = np.einsum("wij,j->wi", lin, self.anchor) + off
        out = (centers, scale * R, points)
        cache[level] = out
        return out

    def distance_bounds(self, z, tol=None):
        z = _as_batch(z, self.dim)
        tol = self.default_tol() if tol is None else tol
        _, R = self.invariant_ball
        level = max(0, math.ceil(math.log2(R / (0.5 * tol))))
        if level * similarity_dimension(self) > MAX_CUT_LOG2 and level not in self._cut_cache:
            # a uniform cut would be too large; bound each point separately
            res = [_ifs_distance(self, p, tol) for p in z]
            return np.array([r.lo for r in res]), np.array([r.hi for r in res])
        centers, radii, points = self.cylinders(level)
        trees = self._trees(level)
        dc, _ = trees[0].query(z)
        dp, _ = trees[1].query(z)
        lo = np.maximum(dc - radii.max(), 0.0)
        return lo, np.maximum(dp, lo)

    def _trees(self, level):
        key = ("trees", level)
        cache = self._cut_cache
        if key not in cache:
            centers, _, points = self.cylinders(level)
            cache[key] = (cKDTree(centers), cKDTree(points))
        return cache[key]

    def bbox(self):
        centers, radii, _ = self.cylinders(10)
        return (centers - radii[:, None]).min(axis=0), (centers + radii[:, None]).max(axis=0)

    def sample(self, count, rng):
        A, t, s = self._affine
        depth = max(1, math.ceil(math.log(1e-12) / math.log(s.max())))
        x = np.repeat(self.anchor[None], count, axis=0)
        for _ in range(depth):
            i = rng.integers(len(A), size=count)
            x = np.einsum("wij,wj->wi", A[i], x) + t[i]
        return x

    def to_json(self):
        out = {"type": "ifs", "maps": [
            {"ratio": m.ratio, "translation": list(m.translation),
             **({"rotation": [list(r) for r in m.rotation]} if m.rotation else {})}
            for m in self.maps], "strong_separation": self.strong_separation}
        if self.separation_box is not None:
            out["separation_box"] = [list(v) for v in self.separation_box]
        return out

    def scaled(self, c):
        maps = tuple(Similitude(m.ratio, tuple(c * np.asarray(m.translation)), m.rotation)
                     for m in self.maps)
        box = None if self.separation_box is None else tuple(
            tuple(c * np.asarray(v)) for v in self.separation_box)
        return IFSAttractor(maps, self.strong_separation, box)


@dataclass(frozen=True, eq=False)
class Union(Descriptor):
    """Finite union of bounded descriptors (multi-piece boundaries)."""

    parts: tuple[Descriptor, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise DescriptorError("empty set")
        if len({p.dim for p in parts}) != 1:
            raise DescriptorError("union parts must share a dimension")
        if not all(p.bounded for p in parts):
            raise DescriptorError("union parts must be bounded")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def distance_bounds(self, z, tol=None):
        bounds = [p.distance_bounds(z, tol) for p in self.parts]
        lo = np.min([b[0] for b in bounds], axis=0)
        hi = np.min([b[1] for b in bounds], axis=0)
        return lo, hi

    def bbox(self):
        boxes = [p.bbox() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def sample(self, count, rng):
        which = rng.integers(len(self.parts), size=count)
        out = np.empty((count, self.dim))
        for i, part in enumerate(self.parts):
            sel = which == i
            if sel.any():
                out[sel] = part.sample(int(sel.sum()), rng)
        return out

    def to_json(self):
        return {"type": "union", "parts": [p.to_json() for p in self.parts]}

    def scaled(self, c):
        return Union(tuple(p.scaled(c) for p in self.parts))


def _ifs_distance(E: IFSAttractor, z: np.ndarray, tol: float) -> DistanceResult:
    # best-first branch and bound over the IFS address tree
    A, t, s = E._affine
    c, R = E.invariant_ball
    anchor = E.anchor
    upper = float(np.linalg.norm(z - anchor))
    heap = [(max(np.linalg.norm(z - c) - R, 0.0), 0, np.eye(E.dim), np.zeros(E.dim), 1.0)]
    counter = 1
    while heap:
        lower, _, lin, off, scale = heapq.heappop(heap)
        if lower >= upper - tol:
            # upper may have dropped below this node's bound since it was queued
            lower = min(lower, upper)
            return DistanceResult(0.5 * (lower + upper), 0.5 * (upper - lower))
        for i in range(len(A)):
            L = lin @ A[i]
            o = lin @ t[i] + off
            sc = scale * s[i]
            upper = min(upper, float(np.linalg.norm(z - (L @ anchor + o))))
            lb = max(float(np.linalg.norm(z - (L @ c + o))) - sc * R, 0.0)
            if lb < upper - tol:
                heapq.heappush(heap, (lb, counter, L, o, sc))
                counter += 1
    return DistanceResult(upper, 0.0)


def distance_to_set(z: Sequence[float], E: Descriptor, tol: float | None = None) -> DistanceResult:
    """Certified Euclidean distance from ``z`` to the set ``E``.

    IFS attractors are handled by best-first branch and bound over cylinder
    balls; every other descriptor is exact.
    """
    z = as_point(z, E.dim)
    tol = E.default_tol() if tol is None else tol
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if isinstance(E, IFSAttractor):
        return _ifs_distance(E, z, tol)
    if isinstance(E, Union):
        results = [distance_to_set(z, p, tol) for p in E.parts]
        lo = min(r.lo for r in results)
        hi = min(r.hi for r in results)
        return DistanceResult(0.5 * (lo + hi), 0.5 * (hi - lo))
    lo, hi = E.distance_bounds(z[None], tol)
    return DistanceResult(float(0.5 * (lo[0] + hi[0])), float(0.5 * (hi[0] - lo[0])))


def layer_membership(z: Sequence[float], E: Descriptor, s: float, t: float,
                     tol: float | None = None) -> bool | None:
    """Is ``s <= d(z, E) <= t``?  ``None`` when the certified interval straddles s or t."""
    if not 0 < s < t:
        raise ValueError(f"need 0 < s < t, got s={s}, t={t}")
    r = distance_to_set(z, E, tol)
    if r.hi < s or r.lo > t:
        return False
    if r.lo >= s and r.hi <= t:
        return True
    return None


# -- standard sets --------------------------------------------------------

def cantor_middle_thirds(dim: int = 2) -> IFSAttractor:
    """Middle-thirds Cantor set on the segment [0, 1] x {0}."""
    e1 = np.zeros(dim)
    e1[0] = 2 / 3
    return IFSAttractor(
        (Similitude(1 / 3, tuple(np.zeros(dim))), Similitude(1 / 3, tuple(e1))),
        strong_separation=True)


def cantor_dust(ratio: float = 0.25) -> IFSAttractor:
    """Planar four-corner Cantor dust in [0, 1]^2 (ratio 1/4 by default)."""
    shift = 1 - ratio
    maps = tuple(Similitude(ratio, (a, b)) for a in (0.0, shift) for b in (0.0, shift))
    return IFSAttractor(maps, strong_separation=True, separation_box=((0, 0), (1, 1)))


def koch_curve(depth: int, snowflake: bool = True) -> PolygonalCurve:
    """Polygonal Koch curve after ``depth`` refinements.

    The snowflake is built on the unit-side equilateral triangle centred at 0.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if snowflake:
        ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1) / np.sqrt(3)
        pts = np.vstack([pts, pts[:1]])
    else:
        pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    rot = np.array([[0.5, -np.sqrt(3) / 2], [np.sqrt(3) / 2, 0.5]])
    for _ in range(depth):
        a, b = pts[:-1], pts[1:]
        d = (b - a) / 3
        p1 = a + d
        p3 = a + 2 * d
        # outward bump for a clockwise snowflake
        p2 = p1 + (d @ rot.T if not snowflake else d @ rot)
        new = np.stack([a, p1, p2, p3], axis=1).reshape(-1, 2)
        pts = np.vstack([new, pts[-1:]])
    if snowflake:
        return PolygonalCurve(pts[:-1], closed=True)
    return PolygonalCurve(pts, closed=False)


def similarity_dimension(E: IFSAttractor) -> float:
    """Root Q of sum_i s_i^Q = 1 (log m / log(1/s) for equal ratios)."""
    s = np.array([m.ratio for m in E.maps])
    if np.allclose(s, s[0]):
        return math.log(len(s)) / math.log(1 / s[0])
    from scipy.optimize import brentq
    return brentq(lambda q: np.sum(s ** q) - 1, 0.0, 64.0)


# -- JSON -----------------------------------------------------------------

def descriptor_from_json(doc: dict[str, Any] | str) -> Descriptor:
    """Build a descriptor from ``{"dim": n, "set": {"type": ..., ...}}``."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        dim = int(doc["dim"])
        spec = doc["set"]
        kind = spec["type"]
    except (KeyError, TypeError) as exc:
        raise DescriptorError(f"descriptor needs 'dim' and 'set.type': {exc}") from None
    E = _build(spec, dim)
    if E.dim != dim:
        raise DescriptorError(f"set of type {kind!r} has dimension {E.dim}, expected {dim}")
    return E


def _build(spec: dict[str, Any], dim: int) -> Descriptor:
    kind = spec.get("type")
    try:
        if kind == "points":
            return FinitePoints(spec["points"])
        if kind == "sphere":
            return Sphere(spec.get("center", [0.0] * dim), float(spec["radius"]))
        if kind == "punctured_ball_boundary":
            return PuncturedBallBoundary(float(spec.get("radius", 1.0)), dim)
        if kind == "halfspace":
            return HalfspaceBoundary(dim)
        if kind == "polygon":
            return PolygonalCurve(spec["vertices"], bool(spec.get("closed", False)))
        if kind == "koch":
            return koch_curve(int(spec["depth"]), bool(spec.get("snowflake", True)))
        if kind == "cantor":
            return cantor_middle_thirds(dim)
        if kind == "cantor_dust":
            return cantor_dust(float(spec.get("ratio", 0.25)))
        if kind == "ifs":
            maps = tuple(Similitude(float(m["ratio"]), tuple(m["translation"]),
                                    None if m.get("rotation") is None else
                                    tuple(map(tuple, m["rotation"])))
                         for m in spec["maps"])
            box = spec.get("separation_box")
            return IFSAttractor(maps, bool(spec.get("strong_separation", False)),
                                None if box is None else (tuple(box[0]), tuple(box[1])))
        if kind == "union":
            return Union(tuple(_build(p, dim) for p in spec["parts"]))
    except (KeyError, TypeError) as exc:
        raise DescriptorError(f"malformed {kind!r} set: {exc}") from None
    raise DescriptorError(f"unknown set type {kind!r}")


def descriptor_to_json(E: Descriptor) -> dict[str, Any]:
    return {"dim": E.dim, "set": E.to_json()}
