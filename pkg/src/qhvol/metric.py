"""Numerical quasihyperbolic distance and volume in G = R^n minus E.

Distances come from shortest paths in a graph whose nodes are the centres
of Whitney cubes (optionally split into ``2^(refine n)`` equal cells) and
whose edges are short straight segments weighted by the integral of
``1/d(z)`` along them.  Graph paths are curves in G, so graph distances are
upper bounds for k_G up to the quadrature error of the edge weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .geometry import Descriptor, FinitePoints, HalfspaceBoundary, as_point
from .whitney import WhitneyDecomposition, _children, decompose

DEFAULT_REFINE = 1
DEFAULT_REACH = 3.0
# Gauss-Legendre order for per-cell volume quadrature
CELL_ORDER = 3
# refuse graphs larger than this many nodes
MAX_NODES = 3_000_000


class NoPathError(RuntimeError):
    pass


class ResolutionError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


# -- segment integrals ----------------------------------------------------

def _segment_in_G(E: Descriptor, a: np.ndarray, b: np.ndarray, depth: int = 40) -> bool:
    # d is 1-Lipschitz: a piece is certified inside G when d(mid) exceeds its half-length
    L = float(np.linalg.norm(b - a))
    stack = [(0.0, 1.0, 0)]
    while stack:
        t0, t1, lvl = stack.pop()
        tm = 0.5 * (t0 + t1)
        lo, _ = E.distance_bounds((a + tm * (b - a))[None])
        if lo[0] > 0.5 * (t1 - t0) * L:
            continue
        if lo[0] <= 0.0 or lvl >= depth:
            return False
        stack += [(t0, tm, lvl + 1), (tm, t1, lvl + 1)]
    return True


def segment_qh_length(E: Descriptor, a, b, rtol: float = 1e-6) -> float:
    """Integral of |dz| / d(z, E) along the straight segment from ``a`` to ``b``."""
    a = as_point(a, E.dim)
    b = as_point(b, E.dim)
    L = float(np.linalg.norm(b - a))
    if L == 0.0:
        return 0.0
    if not _segment_in_G(E, a, b):
        raise ValueError("segment leaves G")
    tol = 1e-3 * rtol * float(min(E.distance(a[None])[0], E.distance(b[None])[0]))

    def f(t):
        return L / float(E.distance((a + t * (b - a))[None], tol)[0])

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=0.1 * rtol, limit=500)
    return val


# -- per-cell quadrature --------------------------------------------------

def _gl_rule(order: int, n: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    nodes = np.array(np.meshgrid(*[x] * n, indexing="ij")).reshape(n, -1).T
    weights = np.prod(np.array(np.meshgrid(*[w] * n, indexing="ij")).reshape(n, -1), axis=0)
    return nodes, weights


def _box_integrals(E: Descriptor, lower: np.ndarray, side: np.ndarray, order: int,
                   chunk: int = 200_000, dist_tol: float | None = None) -> np.ndarray:
    """Tensor Gauss-Legendre estimate of the integral of d^-n over each box."""
    n = E.dim
    nodes, weights = _gl_rule(order, n)
    out = np.empty(len(lower))
    step = max(1, chunk // len(weights))
    for s in range(0, len(lower), step):
        lo, h = lower[s:s + step], side[s:s + step]
        pts = lo[:, None, :] + h[:, None, None] * nodes[None]
        # d >= h inside Whitney cells, so this keeps the relative error of d^-n near 1e-5
        tol = 1e-5 * float(h.min()) if dist_tol is None else dist_tol
        d = E.distance(pts.reshape(-1, n), tol).reshape(len(lo), -1)
        out[s:s + step] = (d ** -n) @ weights * h ** n
    return out


def cube_qh_volumes(E: Descriptor, lower: np.ndarray, side: np.ndarray,
                    rtol: float = 1e-4, order: int = 4, max_depth: int = 8) -> np.ndarray:
    """Adaptive tensor quadrature of vol_k over boxes, to relative tolerance ``rtol``.

    A box is accepted when its one-piece estimate agrees with the sum over its
    2^n halves; otherwise the halves are refined in turn.
    """
    n = E.dim
    lower = np.asarray(lower, dtype=float).reshape(-1, n)
    side = np.broadcast_to(np.asarray(side, dtype=float), (len(lower),)).copy()
    total = np.zeros(len(lower))
    owner = np.arange(len(lower))
    if not len(lower):
        return total
    # distance accuracy is set by the original boxes, whose distance to E exceeds their side
    tol = 1e-5 * float(side.min())
    coarse = _box_integrals(E, lower, side, order, dist_tol=tol)
    shifts = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij")).reshape(n, -1).T
    for _ in range(max_depth):
        kids_lo = (lower[:, None, :] + 0.5 * side[:, None, None] * shifts[None]).reshape(-1, n)
        kids_h = np.repeat(0.5 * side, len(shifts))
        kids = _box_integrals(E, kids_lo, kids_h, order, dist_tol=tol).reshape(len(lower), -1)
        fine = kids.sum(axis=1)
        ok = np.abs(fine - coarse) <= rtol * np.abs(fine)
        np.add.at(total, owner[ok], fine[ok])
        if ok.all():
            return total
        bad = ~ok
        lower = kids_lo.reshape(len(owner), -1, n)[bad].reshape(-1, n)
        side = kids_h.reshape(len(owner), -1)[bad].reshape(-1)
        coarse = kids[bad].reshape(-1)
        owner = np.repeat(owner[bad], len(shifts))
    np.add.at(total, owner, coarse)
    return total


@dataclass(frozen=True)
class CubeVolumes:
    values: np.ndarray
    interval: tuple[float, float]
    tight_lower_held: bool

    @property
    def total(self) -> float:
        return float(self.values.sum())


def qh_volume_cubes(E: Descriptor, gens: np.ndarray, idx: np.ndarray,
                    rtol: float = 1e-4, check: bool = True) -> CubeVolumes:
    """Quasihyperbolic volume of each Whitney cube plus the a-priori interval.

    Every Whitney cube satisfies ``5^-n n^-n/2 <= vol_k(Q) <= n^-n/2``; with
    ``check`` set a violation raises ``InvariantError``.  ``tight_lower_held``
    records whether the sharper lower constant ``2^-2n n^-n/2`` also held.
    """
    n = E.dim
    gens = np.asarray(gens)
    idx = np.asarray(idx).reshape(-1, n)
    side = 2.0 ** -gens.astype(float)
    vals = cube_qh_volumes(E, idx * side[:, None], side, rtol)
    top = n ** (-n / 2)
    bottom = 5.0 ** -n * top
    if check and len(vals):
        slack = 2 * rtol
        if np.any(vals > top * (1 + slack)) or np.any(vals < bottom * (1 - slack)):
            raise InvariantError("a cube violates the Whitney volume bounds")
    held = bool(np.all(vals >= 4.0 ** -n * top)) if len(vals) else True
    return CubeVolumes(vals, (len(vals) * bottom, len(vals) * top), held)


# -- exact metrics on oracle domains --------------------------------------

def exact_metric(E: Descriptor) -> Callable[[np.ndarray, np.ndarray], np.ndarray] | None:
    """Closed-form k_G(x, z) for a single puncture or the half space, else None."""
    if isinstance(E, FinitePoints) and len(E.points) == 1:
        p = E.points[0]

        def k(x, z):
            u = np.asarray(x) - p
            v = np.atleast_2d(z) - p
            nu = np.linalg.norm(u)
            nv = np.linalg.norm(v, axis=1)
            a = u / nu
            b = v / nv[:, None]
            theta = 2 * np.arctan2(np.linalg.norm(a - b, axis=1), np.linalg.norm(a + b, axis=1))
            return np.hypot(theta, np.log(nu / nv))
        return k
    if isinstance(E, HalfspaceBoundary):
        def k(x, z):
            z = np.atleast_2d(z)
            x = np.asarray(x)
            same = np.sign(z[:, -1]) == np.sign(x[-1])
            arg = 1 + np.sum((z - x) ** 2, axis=1) / (2 * np.abs(x[-1] * z[:, -1]))
            return np.where(same, np.arccosh(arg), np.inf)
        return k
    return None


def j_lower_bound(dx: float, x: np.ndarray, z: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """max(j_G, |log(d(x)/d(z))|) <= k_G(x, z)."""
    sep = np.linalg.norm(np.atleast_2d(z) - x, axis=1)
    j = np.log1p(sep / np.minimum(dx, dz))
    return np.maximum(j, np.abs(np.log(dx / dz)))


# -- generation bounds ----------------------------------------------------

def generation_range(dx: float, r: float, n: int) -> tuple[int, int]:
    """Generations whose Whitney cubes can meet {e^-r d(x) < d(z) < e^r d(x)}."""
    K = (r + math.log(5 * math.sqrt(n) / dx)) / math.log(2)
    K_prime = -(r - math.log(math.sqrt(n) / dx)) / math.log(2)
    return math.floor(K_prime), math.ceil(K)


def _window_for(E: Descriptor, points: np.ndarray, budget: float, k_lo: int):
    """Box containing every curve of qh length ``budget`` that starts at one of ``points``."""
    n = E.dim
    pad_top = 2.0 ** (2 - k_lo) * math.sqrt(n)
    d = E.distance(points)
    if E.bounded:
        lo, hi = E.bbox()
        lo = np.minimum(lo, points.min(axis=0))
        hi = np.maximum(hi, points.max(axis=0))
        # along such a curve d(z) <= e^budget d(x), and d(z) bounds the gap to the bbox
        pad = max(pad_top, math.exp(budget) * float(d.max())) * 1.01
        return lo - pad, hi + pad
    # half space: qh balls are explicit Euclidean balls
    top = float(np.abs(points[:, -1]).max())
    lo = points.min(axis=0) - top * math.sinh(budget) * 1.01
    hi = points.max(axis=0) + top * math.sinh(budget) * 1.01
    lo[-1], hi[-1] = 0.0, top * math.exp(budget) * 1.01
    return lo, hi


# -- graph ----------------------------------------------------------------

@dataclass(eq=False)
class QhGraph:
    """Refined Whitney-cell graph of G.

    Nodes are ordered: ``n_cells`` cell centres, then the centres of the
    Whitney cubes, then injected query points.
    """

    decomposition: WhitneyDecomposition
    refine: int
    reach: float
    positions: np.ndarray
    size: np.ndarray            # side of the cell a node stands for
    dist: np.ndarray            # d(node, E)
    dist_lo: np.ndarray
    cube_of: np.ndarray         # row in the flat cube list, -1 for queries
    gen: np.ndarray             # Whitney generation of that cube
    n_cells: int
    n_cubes: int
    weights: object = None      # csr matrix

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def query_nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + self.n_cubes, self.n_nodes)

    def induced(self, mask: np.ndarray):
        W = self.weights.tocsr()
        keep = np.flatnonzero(mask)
        return W[keep][:, keep], keep

    def distances_from(self, sources, limit: float = np.inf, mask: np.ndarray | None = None):
        """Graph distances from each source node (rows) to every node."""
        sources = np.atleast_1d(sources)
        if mask is None:
            return dijkstra(self.weights, directed=False, indices=sources, limit=limit)
        W, keep = self.induced(mask)
        where = np.full(self.n_nodes, -1)
        where[keep] = np.arange(len(keep))
        out = np.full((len(sources), self.n_nodes), np.inf)
        out[:, keep] = dijkstra(W, directed=False, indices=where[sources], limit=limit)
        return out


def _cell_positions(gens, idx, refine, n):
    if refine == 0:
        side = 2.0 ** -gens.astype(float)
        return (idx + 0.5) * side[:, None], side, np.arange(len(gens))
    sub = idx.astype(np.int64)
    owner = np.arange(len(gens))
    for _ in range(refine):
        sub = _children(sub, n)
        owner = np.repeat(owner, 2 ** n)
    side = 2.0 ** -(gens[owner] + refine).astype(float)
    return (sub + 0.5) * side[:, None], side, owner


def build_graph(E: Descriptor, dec: WhitneyDecomposition, queries=None,
                refine: int = DEFAULT_REFINE, reach: float = DEFAULT_REACH,
                gen_range: tuple[int, int] | None = None) -> QhGraph:
    """Assemble the quasihyperbolic graph on the cubes of ``dec``.

    Two nodes are joined when their distance is at most ``reach`` times the
    larger of their cell sides and the segment certainly stays in G (it lies
    in the ball of radius ``d`` around one endpoint).  Edge weights use
    Simpson's rule on ``1/d``.
    """
    n = E.dim
    gens, idx = dec.flat()
    if gen_range is not None:
        keep = (gens >= gen_range[0]) & (gens <= gen_range[1])
        gens, idx = gens[keep], idx[keep]
    if not len(gens):
        raise ResolutionError("no Whitney cubes in the requested generation range")
    if len(gens) * 2 ** (refine * n) > MAX_NODES:
        raise ResolutionError(f"graph would need {len(gens) * 2 ** (refine * n)} nodes; "
                              "lower k_max or refine, or shrink the window")
    cell_pos, cell_size, owner = _cell_positions(gens, idx, refine, n)
    cube_side = 2.0 ** -gens.astype(float)
    cube_pos = (idx + 0.5) * cube_side[:, None]
    cube_size = cube_side * 2.0 ** -refine
    queries = np.zeros((0, n)) if queries is None else np.atleast_2d(np.asarray(queries, dtype=float))
    q_size = np.empty(len(queries))
    q_gen = np.empty(len(queries), dtype=np.int64)
    if len(queries):
        qg, qrow = dec.locate(queries)
        for i, (g, r_) in enumerate(zip(qg, qrow)):
            if r_ < 0 or (gen_range is not None and not gen_range[0] <= g <= gen_range[1]):
                raise ResolutionError(f"query point {queries[i]} lies in no Whitney cube of the graph")
        q_size[:] = 2.0 ** -(qg + refine).astype(float)
        q_gen[:] = qg
    if refine == 0:
        positions = np.vstack([cell_pos, queries])
        size = np.concatenate([cell_size, q_size])
        cube_of = np.concatenate([owner, np.full(len(queries), -1)])
        gen = np.concatenate([gens[owner], q_gen])
        n_cubes = 0
    else:
        positions = np.vstack([cell_pos, cube_pos, queries])
        size = np.concatenate([cell_size, cube_size, q_size])
        cube_of = np.concatenate([owner, np.arange(len(gens)), np.full(len(queries), -1)])
        gen = np.concatenate([gens[owner], gens, q_gen])
        n_cubes = len(gens)
    level = np.round(-np.log2(size)).astype(np.int64)
    tol = 1e-3 * size.min()
    lo, hi = E.distance_bounds(positions, tol)
    dist = 0.5 * (lo + hi)

    groups = {L: np.flatnonzero(level == L) for L in np.unique(level)}
    trees = {L: cKDTree(positions[g]) for L, g in groups.items()}
    rows, cols = [], []
    levels = sorted(groups)
    for a_i, La in enumerate(levels):
        for Lb in levels[a_i:]:
            if Lb - La > 3:
                break
            radius = reach * 2.0 ** -La
            pairs = trees[La].sparse_distance_matrix(trees[Lb], radius, output_type="ndarray")
            if not len(pairs):
                continue
            i = groups[La][pairs["i"]]
            j = groups[Lb][pairs["j"]]
            keep = i < j if La == Lb else np.ones(len(i), bool)
            rows.append(i[keep])
            cols.append(j[keep])
    i = np.concatenate(rows) if rows else np.empty(0, np.int64)
    j = np.concatenate(cols) if cols else np.empty(0, np.int64)
    i, j = np.minimum(i, j), np.maximum(i, j)
    pair = np.unique(np.stack([i, j], axis=1), axis=0)
    i, j = pair[:, 0], pair[:, 1]
    seg = np.linalg.norm(positions[i] - positions[j], axis=1)
    safe = seg < 0.99 * np.maximum(lo[i], lo[j])
    i, j, seg = i[safe], j[safe], seg[safe]
    mid = 0.5 * (positions[i] + positions[j])
    dmid = E.distance(mid, tol) if len(mid) else np.empty(0)
    w = seg / 6.0 * (1.0 / dist[i] + 4.0 / dmid + 1.0 / dist[j])
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvariantError("non-positive or non-finite edge weight")
    N = len(positions)
    W = coo_matrix((w, (i, j)), shape=(N, N)).tocsr()
    return QhGraph(dec, refine, reach, positions, size, dist, lo, cube_of, gen,
                   len(cell_pos), n_cubes, W)


# -- distance -------------------------------------------------------------

@dataclass(frozen=True)
class DistanceReport:
    x: tuple[float, ...]
    y: tuple[float, ...]
    k_max: int
    upper_bound: float
    lower_bound: float
    refinement_delta: float
    generations: tuple[int, int]

    def to_json(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "k_max": self.k_max,
                "upper_bound": self.upper_bound, "lower_bound": self.lower_bound,
                "refinement_delta": self.refinement_delta}


def qh_distance(E: Descriptor, x, y, k_max: int, refine: int = DEFAULT_REFINE,
                reach: float = DEFAULT_REACH, window=None) -> DistanceReport:
    """Graph approximation of k_G(x, y) with the coarse lower bound beside it.

    Only generations that can meet {e^-L d(x) <= d(z) <= e^L d(x)} are built,
    with the budget L doubled until the graph distance fits inside it: a
    curve of qh length L from x never leaves that layer.
    """
    x = as_point(x, E.dim)
    y = as_point(y, E.dim)
    dx, dy = (float(v) for v in E.distance(np.stack([x, y])))
    if dx <= 0 or dy <= 0:
        raise ValueError("x and y must lie in G")
    if min(dx, dy) <= 2.0 ** -k_max:
        raise ResolutionError("d(x), d(y) must exceed 2^-k_max")
    lower = float(j_lower_bound(dx, x, y[None], np.array([dy]))[0])
    if np.allclose(x, y):
        return DistanceReport(tuple(x), tuple(y), k_max, 0.0, 0.0, 0.0, (0, 0))
    budget = max(2.0 * lower, lower + 1.0)
    for _ in range(8):
        lo_x, hi_x = generation_range(dx, budget, E.dim)
        lo_y, hi_y = generation_range(dy, budget, E.dim)
        k_lo, k_hi = min(lo_x, lo_y), min(max(hi_x, hi_y), k_max)
        win = window if window is not None else _window_for(E, np.stack([x, y]), budget, k_lo)
        dec = decompose(E, win, k_lo, k_hi)
        graph = build_graph(E, dec, np.stack([x, y]), refine, reach)
        qx, qy = graph.query_nodes
        dist = graph.distances_from(qx)[0]
        best = dist[qy]
        if np.isfinite(best) and best <= budget:
            break
        budget *= 1.5
    else:
        raise NoPathError("no path at this resolution")
    if not np.isfinite(best):
        raise NoPathError("no path at this resolution")
    coarse_mask = graph.gen <= k_hi - 1
    coarse_mask[graph.query_nodes] = True
    try:
        coarse = graph.distances_from(qx, mask=coarse_mask)[0][qy]
    except Exception:
        coarse = np.inf
    delta = float(coarse - best) if np.isfinite(coarse) else math.inf
    return DistanceReport(tuple(x), tuple(y), k_max, float(best), lower, delta, (k_lo, k_hi))


# -- balls ----------------------------------------------------------------

@dataclass(frozen=True)
class QhBallApprox:
    """Cube classification of B_k(x, r) with a certified volume bracket.

    ``vol_est`` counts boundary cells by the centre rule.  With the graph
    metric the bracket is certified up to the quadrature error of the edge
    weights.
    """

    center: tuple[float, ...]
    r: float
    inner_cubes: list[tuple[int, tuple[int, ...]]]
    boundary_cubes: list[tuple[int, tuple[int, ...]]]
    vol_lower: float
    vol_est: float
    vol_upper: float
    k_max: int
    metric: str
    generations: tuple[int, int]


class QhField:
    """Quasihyperbolic distance from a fixed centre on the Whitney cubes around it.

    Covers every generation that can meet the layer
    {e^-r d(x) < d(z) < e^r d(x)} for ``r <= r_max``, and a window containing
    all such points.  Uses the closed-form metric when one is known (single
    puncture, half space) unless ``metric="graph"``.
    """

    def __init__(self, E: Descriptor, x, r_max: float, k_max: int, metric: str = "auto",
                 refine: int | None = None, reach: float = DEFAULT_REACH, window=None):
        if metric not in ("auto", "graph", "exact"):
            raise ValueError(f"unknown metric {metric!r}")
        if not r_max > 0:
            raise ValueError("radius must be positive")
        self.E = E
        self.x = as_point(x, E.dim)
        self.dx = float(E.distance(self.x[None])[0])
        if not self.dx > 0:
            raise ValueError("centre must lie in G")
        self.r_max = float(r_max)
        self.k_max = int(k_max)
        exact = exact_metric(E) if metric != "graph" else None
        if metric == "exact" and exact is None:
            raise ValueError("no closed-form metric for this set")
        self.exact = exact
        self.metric = "exact" if exact is not None else "graph"
        if refine is None:
            refine = 2 if exact is not None else DEFAULT_REFINE
        self.refine = refine
        k_lo, K = generation_range(self.dx, self.r_max, E.dim)
        if K > self.k_max:
            raise ResolutionError(
                f"radius {r_max} needs generations up to {K} but k_max = {k_max}")
        self.generations = (k_lo, K)
        win = window if window is not None else _window_for(E, self.x[None], self.r_max, k_lo)
        self.dec = decompose(E, win, k_lo, K)
        g, row = self.dec.locate(self.x[None])
        if row[0] < 0:
            raise ResolutionError("the centre lies in no Whitney cube up to k_max")
        self.gens, self.idx = self.dec.flat()
        side = 2.0 ** -self.gens.astype(float)
        self.side = side
        self.centers = (self.idx + 0.5) * side[:, None]
        self.cube_dlo = np.concatenate([self.dec.d_lo[k] for k in self.dec.generations])
        cd = E.distance(self.centers, 1e-3 * float(side.min()))
        self.cube_lower = j_lower_bound(self.dx, self.x, self.centers, cd)
        if exact is not None:
            self.graph = None
            self.cube_dist = exact(self.x, self.centers)
        else:
            self.graph = build_graph(E, self.dec, self.x[None], refine, reach)
            src = self.graph.query_nodes[0]
            self.node_dist = self.graph.distances_from(src, limit=self.r_max + 2.0)[0]
            if refine == 0:
                self.cube_dist = self.node_dist[:self.graph.n_cells]
            else:
                nc = self.graph.n_cells
                self.cube_dist = self.node_dist[nc:nc + self.graph.n_cubes]
        self._cube_vol = np.full(len(self.gens), np.nan)
        self._cells: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    # per-cube data, computed lazily
    def cube_volumes(self, rows: np.ndarray) -> np.ndarray:
        need = rows[np.isnan(self._cube_vol[rows])]
        if len(need):
            self._cube_vol[need] = cube_qh_volumes(self.E, self.idx[need] * self.side[need, None],
                                                   self.side[need])
        return self._cube_vol[rows]

    def _cell_data(self, rows: np.ndarray):
        """Concatenated (owner row, upper dist, lower dist, margin, volume) of the cells of ``rows``."""
        missing = [int(r) for r in rows if int(r) not in self._cells]
        if missing:
            missing = np.array(missing)
            if self.graph is None:
                pos, h, own = _cell_positions(self.gens[missing], self.idx[missing], self.refine, self.E.dim)
                own = missing[own]
                lo, _ = self.E.distance_bounds(pos, 1e-3 * float(h.min()))
                up = self.exact(self.x, pos)
                low = up
            else:
                nc = self.graph.n_cells
                sel = np.isin(self.graph.cube_of[:nc], missing)
                pos = self.graph.positions[:nc][sel]
                h = self.graph.size[:nc][sel]
                own = self.graph.cube_of[:nc][sel]
                lo = self.graph.dist_lo[:nc][sel]
                up = self.node_dist[:nc][sel]
                low = j_lower_bound(self.dx, self.x, pos, self.graph.dist[:nc][sel])
            half = 0.5 * math.sqrt(self.E.dim) * h
            margin = half / (lo - half)
            vol = _box_integrals(self.E, pos - 0.5 * h[:, None], h, CELL_ORDER)
            order = np.argsort(own, kind="stable")
            own, up, low, margin, vol = own[order], up[order], low[order], margin[order], vol[order]
            starts = np.searchsorted(own, missing)
            ends = np.searchsorted(own, missing, side="right")
            for r_, a, b in zip(missing, starts, ends):
                self._cells[int(r_)] = (up[a:b], low[a:b], margin[a:b], vol[a:b])
        parts = [self._cells[int(r)] for r in rows]
        if not parts:
            e = np.empty(0)
            return e, e, e, e
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))

    def ball(self, r: float) -> QhBallApprox:
        if not 0 < r <= self.r_max * (1 + 1e-12):
            raise ValueError(f"radius must lie in (0, {self.r_max}]")
        inner = self.cube_dist + 1.0 <= r
        outer = self.cube_lower - 1.0 > r
        boundary = ~inner & ~outer
        rows_in = np.flatnonzero(inner)
        rows_b = np.flatnonzero(boundary)
        v_inner = float(self.cube_volumes(rows_in).sum())
        up, low, margin, vol = self._cell_data(rows_b)
        sure_in = up + margin <= r
        sure_out = low - margin > r
        lower = v_inner + float(vol[sure_in].sum())
        upper = lower + float(vol[~sure_in & ~sure_out].sum())
        est = v_inner + float(vol[up <= r].sum())
        pack = lambda rows: [(int(self.gens[i]), tuple(int(c) for c in self.idx[i])) for i in rows]
        return QhBallApprox(tuple(float(v) for v in self.x), float(r), pack(rows_in), pack(rows_b),
                            lower, est, upper, self.k_max, self.metric, self.generations)

    def distances(self, points: np.ndarray) -> np.ndarray:
        """k_G(x, p): closed form, or the graph value at the nearest cell centre."""
        points = np.atleast_2d(points)
        if self.exact is not None:
            return self.exact(self.x, points)
        tree = self._tree
        _, i = tree.query(points)
        return self.node_dist[i]

    @cached_property
    def _tree(self):
        return cKDTree(self.graph.positions[:self.graph.n_cells])


def qh_ball(E: Descriptor, x, r: float, k_max: int, **kw) -> QhBallApprox:
    return QhField(E, x, r, k_max, **kw).ball(r)


@dataclass(frozen=True)
class GrowthCurve:
    r: np.ndarray
    vol_lo: np.ndarray
    vol_est: np.ndarray
    vol_hi: np.ndarray
    n_inner: np.ndarray
    n_boundary: np.ndarray
    metric: str

    def rows(self):
        for i in range(len(self.r)):
            yield (float(self.r[i]), float(self.vol_lo[i]), float(self.vol_est[i]),
                   float(self.vol_hi[i]), int(self.n_inner[i]), int(self.n_boundary[i]))


def ball_growth_curve(E: Descriptor, x, r_grid, k_max: int, method: str = "auto", **kw) -> GrowthCurve:
    """Volumes of B_k(x, r) over an increasing radius grid, from one shared field."""
    r_grid = np.asarray(r_grid, dtype=float)
    if len(r_grid) == 0 or np.any(np.diff(r_grid) <= 0):
        raise ValueError("r_grid must be increasing and non-empty")
    field = QhField(E, x, float(r_grid[-1]), k_max, metric=method, **kw)
    balls = [field.ball(float(r)) for r in r_grid]
    out = GrowthCurve(r_grid,
                      np.array([b.vol_lower for b in balls]),
                      np.array([b.vol_est for b in balls]),
                      np.array([b.vol_upper for b in balls]),
                      np.array([len(b.inner_cubes) for b in balls]),
                      np.array([len(b.boundary_cubes) for b in balls]),
                      field.metric)
    if np.any(np.diff(out.vol_est) < 0):
        raise InvariantError("growth curve is not monotone in r")
    return out


def write_growth_csv(curve: GrowthCurve, fh) -> None:
    import csv
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["r", "vol_lo", "vol_est", "vol_hi", "n_inner_cubes", "n_boundary_cubes"])
    for row in curve.rows():
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- uniformity constant ----------------------------------------------------

@dataclass(frozen=True)
class PsiFit:
    """Largest observed ratio k_G(x, y) / log(1 + |x - y| / min d)."""

    L_hat: float
    worst_pair: tuple[tuple[float, ...], tuple[float, ...]]
    ratios: np.ndarray
    skipped: int

    def to_json(self) -> dict:
        return {"L_hat": self.L_hat, "worst_pair": [list(p) for p in self.worst_pair],
                "pairs": int(len(self.ratios)), "skipped": self.skipped}


def sample_pairs_in_box(E: Descriptor, count: int, seed: int, box, d_min: float):
    """``count`` point pairs uniform in ``box`` with d >= d_min, reproducible per pair index."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    out = np.empty((count, 2, E.dim))
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        got = 0
        while got < 2:
            z = lo + (hi - lo) * rng.random((16, E.dim))
            ok = z[E.distance(z) >= d_min]
            take = min(2 - got, len(ok))
            out[i, got:got + take] = ok[:take]
            got += take
    return out


def psi_uniformity_fit(E: Descriptor, sample_pairs: int, seed: int, k_max: int,
                       box=None, pairs=None, refine: int = DEFAULT_REFINE,
                       reach: float = DEFAULT_REACH, workers: int = 1) -> PsiFit:
    """Empirical uniformity constant from sampled pairs.

    Graph distances over-estimate k_G, so the ratio of each pair is an upper
    estimate of its true ratio; the maximum over pairs is reported.  Pair
    ``i`` depends only on ``(seed, i)``, so doubling ``sample_pairs`` keeps
    the first half of the sample.  Explicit ``pairs`` bypass sampling.
    """
    n = E.dim
    if pairs is None:
        if box is None:
            if not E.bounded:
                raise ValueError("unbounded sets need an explicit sampling box")
            lo, hi = E.bbox()
            pad = 0.5 * max(float(np.max(hi - lo)), 1e-9)
            box = (lo - pad, hi + pad)
        d_min = 16 * math.sqrt(n) * 2.0 ** -k_max
        pairs = sample_pairs_in_box(E, sample_pairs, seed, box, d_min)
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2, n)
    keep = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=1) > 0
    pairs = pairs[keep]
    if not len(pairs):
        raise ValueError("no non-degenerate pairs")
    xs, ys = pairs[:, 0], pairs[:, 1]
    dx, dy = E.distance(xs), E.distance(ys)
    j = np.log1p(np.linalg.norm(xs - ys, axis=1) / np.minimum(dx, dy))
    k = np.full(len(pairs), np.nan)
    if E.bounded:
        pts = np.vstack([xs, ys])
        span = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        elo, ehi = E.bbox()
        k_min = math.floor(-math.log2(max(span, float(np.max(ehi - elo)), 1e-9))) - 2
        pad = 2.0 ** (2 - k_min) * math.sqrt(n) * 1.01
        win = (np.minimum(lo, elo) - pad, np.maximum(hi, ehi) + pad)
        dec = decompose(E, win, k_min, k_max)
        graph = build_graph(E, dec, pts, refine, reach)
        q = graph.query_nodes
        src, dst = q[:len(pairs)], q[len(pairs):]

        def run(chunk):
            return graph.distances_from(src[chunk])[np.arange(len(chunk)), dst[chunk]]
        chunks = np.array_split(np.arange(len(pairs)), max(1, workers))
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(workers) as pool:
                k = np.concatenate(list(pool.map(run, chunks)))
        else:
            k = run(chunks[0])
    else:
        for i in range(len(pairs)):
            try:
                k[i] = qh_distance(E, xs[i], ys[i], k_max, refine, reach).upper_bound
            except NoPathError:
                pass
    ok = np.isfinite(k)
    if not ok.any():
        raise NoPathError("no pair is connected at this resolution")
    ratio = k[ok] / j[ok]
    w = int(np.argmax(ratio))
    wi = np.flatnonzero(ok)[w]
    worst = (tuple(float(v) for v in xs[wi]), tuple(float(v) for v in ys[wi]))
    return PsiFit(float(ratio[w]), worst, ratio, int((~ok).sum()))
