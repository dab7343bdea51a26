import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhvol.geometry import FinitePoints, HalfspaceBoundary, Sphere
from qhvol.whitney import (count_generations, decompose, default_window, layer_volume, offsets_n0_n1,
                           write_counts_csv, write_cubes_csv)

from conftest import CANTOR_Q, brute_cantor_distance


def point_box_distance(lower, upper):
    gap = np.maximum(np.maximum(lower, 0.0), np.maximum(-upper, 0.0))
    return np.linalg.norm(gap, axis=1)


def circle_box_distance(lower, upper):
    near = point_box_distance(lower, upper)
    far = np.linalg.norm(np.maximum(np.abs(lower), np.abs(upper)), axis=1)
    return np.where(near > 1, near - 1, np.where(far < 1, 1 - far, 0.0))


def brute_whitney(point_dist, window, k_min, k_max):
    """Enumerate every dyadic cube and apply the centre-certified rule directly.

    A cube is kept when d(c) - diam/2 >= diam and d(c) <= 4 diam, and split
    while d(c) - diam/2 < diam.
    """
    n = 2
    out = {}

    def dist(lower, upper):
        return point_dist(0.5 * (lower + upper)) - 0.5 * math.sqrt(n) * (upper[:, 0] - lower[:, 0])

    for k in range(k_min, k_max + 1):
        h = 2.0 ** -k
        lo_i = np.floor(window[0] / h).astype(int)
        hi_i = np.ceil(window[1] / h).astype(int)
        ii, jj = np.meshgrid(np.arange(lo_i[0], hi_i[0]), np.arange(lo_i[1], hi_i[1]), indexing="ij")
        idx = np.column_stack([ii.ravel(), jj.ravel()])
        d = dist(idx * h, (idx + 1) * h)
        ok = (d >= math.sqrt(n) * h) & (d + 0.5 * math.sqrt(n) * h <= 4 * math.sqrt(n) * h)
        # reject cubes with an ancestor that was emitted or dropped instead of split
        for j in range(k_min, k):
            hj = 2.0 ** -j
            anc = idx >> (k - j)
            ok &= dist(anc * hj, (anc + 1) * hj) < math.sqrt(n) * hj
        out[k] = {tuple(c) for c in idx[ok].tolist()}
    return out


CASES = [
    ("point", FinitePoints(np.zeros((1, 2))), lambda z: np.linalg.norm(z, axis=1), point_box_distance,
     (np.array([-1.0, -1.0]), np.array([1.0, 1.0]))),
    ("circle", Sphere(np.zeros(2), 1.0), lambda z: np.abs(np.linalg.norm(z, axis=1) - 1), circle_box_distance,
     (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))),
]


@pytest.mark.parametrize("name,E,dist,box_dist,window", CASES)
def test_decomposition_matches_brute_force(name, E, dist, box_dist, window):
    dec = decompose(E, window, 3, 8, rel_tol=1e-9)
    want = brute_whitney(dist, window, 3, 8)
    for k in dec.generations:
        assert {tuple(c) for c in dec.cubes[k].tolist()} == want[k], (name, k)


@pytest.mark.parametrize("name,E,dist,box_dist,window", CASES)
def test_whitney_inequalities_with_exact_box_distance(name, E, dist, box_dist, window):
    dec = decompose(E, window, 3, 10)
    gens, idx = dec.flat()
    h = 2.0 ** -gens
    d = box_dist(idx * h[:, None], (idx + 1) * h[:, None])
    assert np.all(d >= math.sqrt(2) * h * (1 - 1e-9))
    assert np.all(d <= 4 * math.sqrt(2) * h * (1 + 1e-9))


def test_point_counts_are_scale_invariant():
    dec = decompose(FinitePoints(np.zeros((1, 2))), (np.array([-1.0, -1.0]), np.array([1.0, 1.0])), 3, 12)
    counts = count_generations(dec)
    inner = [counts.N[k] for k in range(6, 12)]
    assert len(set(inner)) == 1 and inner[0] == 48


def test_cube_distance_bounds_hold_for_cantor(cantor):
    dec = decompose(cantor, (np.array([-1.0, -1.0]), np.array([2.0, 1.0])), 3, 9)
    gens, idx = dec.flat()
    h = 2.0 ** -gens
    rng = np.random.default_rng(0)
    for _ in range(4):
        z = (idx + rng.random(idx.shape)) * h[:, None]
        d, slack = brute_cantor_distance(z)
        d_lo = np.concatenate([dec.d_lo[k] for k in dec.generations])
        assert np.all(d >= d_lo - slack - 1e-12)
        assert np.all(d >= math.sqrt(2) * h - slack - 1e-9)
        assert np.all(d <= 5 * math.sqrt(2) * h * 1.01 + slack)


def test_cubes_are_disjoint(circle):
    dec = decompose(circle, (np.array([-2.0, -2.0]), np.array([2.0, 2.0])), 3, 9)
    gens, idx = dec.flat()
    rng = np.random.default_rng(1)
    z = (idx + rng.random(idx.shape)) * (2.0 ** -gens)[:, None]
    g, row = dec.locate(z)
    assert np.array_equal(g, gens)
    assert np.array_equal(row, np.concatenate([np.arange(len(dec.cubes[k])) for k in dec.generations]))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.9, 1.9), st.floats(-1.9, 1.9))
def test_locate_covers_the_annulus_region(x, y):
    dec = _circle_dec()
    d = abs(math.hypot(x, y) - 1)
    g, row = dec.locate([[x, y]])
    if 2 * math.sqrt(2) * 2.0 ** -dec.k_max <= d <= 3 * math.sqrt(2) * 2.0 ** -dec.k_min:
        assert row[0] >= 0
    if row[0] >= 0:
        h = 2.0 ** -g[0]
        assert math.sqrt(2) * h - 1e-12 <= d <= 4.5 * math.sqrt(2) * h


_cache = {}


def _circle_dec():
    if "c" not in _cache:
        _cache["c"] = decompose(Sphere(np.zeros(2), 1.0), (np.array([-2.0, -2.0]), np.array([2.0, 2.0])), 3, 10)
    return _cache["c"]


def test_window_too_small_is_rejected(circle):
    with pytest.raises(ValueError, match="window"):
        decompose(circle, (np.array([-1.1, -1.1]), np.array([1.1, 1.1])), 1, 5)
    with pytest.raises(ValueError):
        decompose(circle, None, 6, 5)


def test_default_window_is_accepted(cantor):
    dec = decompose(cantor, default_window(cantor, 2), 2, 6)
    assert len(dec) > 0


def test_halfspace_decomposition_in_a_window():
    dec = decompose(HalfspaceBoundary(2), (np.array([-2.0, -2.0]), np.array([2.0, 2.0])), 2, 7)
    counts = count_generations(dec)
    # each generation doubles in count as the strip narrows
    assert counts.N[6] == 2 * counts.N[5]


@pytest.mark.parametrize("n,want", [(2, (4, 6)), (3, (4, 7))])
def test_offsets(n, want):
    n0, n1 = offsets_n0_n1(n)
    assert (n0, n1) == want
    assert 8 * math.sqrt(n) * 2.0 ** -n0 <= 1 < 8 * math.sqrt(n) * 2.0 ** (1 - n0)
    assert 80 * math.sqrt(n) * 2.0 ** -n1 >= 1 > 80 * math.sqrt(n) * 2.0 ** (-1 - n1)


def test_ntilde_is_window_sum():
    dec = decompose(FinitePoints(np.zeros((1, 2))), (np.array([-1.0, -1.0]), np.array([1.0, 1.0])), 3, 14)
    c = count_generations(dec)
    for k, v in c.Ntilde.items():
        assert v == sum(c.N[k + j] for j in range(c.n0, c.n1 + 1))


@pytest.mark.parametrize("E,r,want", [
    (FinitePoints(np.zeros((1, 2))), 0.25, math.pi * 0.25 ** 2),
    (Sphere(np.zeros(2), 1.0), 0.125, 4 * math.pi * 0.125),
])
def test_layer_volume_against_exact_area(E, r, want):
    assert layer_volume(E, r, 11) == pytest.approx(want, rel=0.01)


def test_layer_volume_matches_center_count(circle):
    k, r = 6, 0.3
    h = 2.0 ** -k
    ax = (np.arange(-2 / h, 2 / h) + 0.5) * h
    X, Y = np.meshgrid(ax, ax)
    count = np.count_nonzero(np.abs(np.hypot(X, Y) - 1) <= r)
    assert layer_volume(circle, r, k) == pytest.approx(count * h * h)


def test_csv_writers():
    dec = decompose(FinitePoints(np.zeros((1, 2))), (np.array([-1.0, -1.0]), np.array([1.0, 1.0])), 3, 6)
    buf = io.StringIO()
    write_cubes_csv(dec, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,c_1,c_2,d_lo,d_hi"
    assert len(lines) == len(dec) + 1
    buf = io.StringIO()
    write_counts_csv(count_generations(dec), buf)
    assert buf.getvalue().startswith("k,N_k,Ntilde_k\n")


def test_cantor_aggregated_counts_scale_like_2_kQ(cantor):
    dec = decompose(cantor, (np.array([-1.0, -1.0]), np.array([2.0, 1.0])), 3, 14)
    c = count_generations(dec)
    ratios = np.array([c.Ntilde[k] / 2.0 ** (k * CANTOR_Q) for k in range(3, 14 - c.n1 + 1)])
    assert np.all(ratios > 0)
    assert ratios.max() / ratios.min() < 2.5
