import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qhvol.geometry import (DescriptorError, FinitePoints, HalfspaceBoundary, IFSAttractor, PolygonalCurve,
                            PuncturedBallBoundary, Similitude, Sphere, Union, cantor_dust, cantor_middle_thirds,
                            descriptor_from_json, descriptor_to_json, distance_to_set, koch_curve,
                            layer_membership, similarity_dimension, unit_ball_constants)

from conftest import CANTOR_Q, brute_cantor_distance, brute_segment_distance

coord = st.floats(-3, 3, allow_nan=False)


def test_unit_ball_constants():
    vol, area = unit_ball_constants(2)
    assert vol == pytest.approx(math.pi) and area == pytest.approx(2 * math.pi)
    vol, area = unit_ball_constants(3)
    assert vol == pytest.approx(4 * math.pi / 3) and area == pytest.approx(4 * math.pi)
    with pytest.raises(ValueError):
        unit_ball_constants(1)


def test_point_distance_examples(point2):
    assert distance_to_set([3, 4], point2).value == pytest.approx(5.0)
    assert distance_to_set([0, 0], point2).value == 0.0


def test_sphere_distance(circle):
    assert distance_to_set([0, 0], circle).value == pytest.approx(1.0)
    assert distance_to_set([0.3, 0.4], circle).value == pytest.approx(0.5)
    assert distance_to_set([3, 4], circle).value == pytest.approx(4.0)


def test_punctured_ball_boundary_is_sphere_plus_origin():
    E = PuncturedBallBoundary(1.0, 2)
    z = np.array([[0.1, 0.0], [0.9, 0.0], [0.5, 0.0], [2.0, 0.0]])
    assert np.allclose(E.distance(z), [0.1, 0.1, 0.5, 1.0])


def test_halfspace_distance(halfplane):
    assert np.allclose(halfplane.distance(np.array([[5.0, 2.0], [-1.0, -3.0]])), [2.0, 3.0])
    assert not halfplane.bounded
    with pytest.raises(ValueError):
        halfplane.sample(3, np.random.default_rng(0))


def test_cantor_distance_matches_brute_force(cantor):
    rng = np.random.default_rng(1)
    z = np.column_stack([rng.uniform(-0.5, 1.5, 400), rng.uniform(-0.3, 0.3, 400)])
    z = np.vstack([z, [[0.5, 0.0], [1 / 3, 0.0], [0.2, 1e-4]]])
    want, slack = brute_cantor_distance(z)
    lo, hi = cantor.distance_bounds(z, 1e-9)
    assert np.all(lo <= want + slack + 1e-12)
    assert np.all(hi >= want - slack - 1e-12)
    assert np.all(hi - lo <= 1e-9 + 1e-15)


def test_cantor_scalar_branch_and_bound(cantor):
    r = distance_to_set([0.5, 0.0], cantor)
    assert r.value == pytest.approx(1 / 6, abs=1e-9)
    assert r.error_bound <= cantor.default_tol()
    r = distance_to_set([1 / 3, 0.25], cantor)
    assert r.value == pytest.approx(0.25, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(coord, coord)
def test_cantor_bounds_bracket_scalar_oracle(x, y):
    E = cantor_middle_thirds()
    lo, hi = E.distance_bounds(np.array([[x, y]]), 1e-8)
    r = distance_to_set([x, y], E, 1e-10)
    assert lo[0] <= r.hi + 1e-12 and r.lo <= hi[0] + 1e-12


@settings(max_examples=60, deadline=None)
@given(coord, coord, coord, coord)
def test_distance_is_one_lipschitz(x1, y1, x2, y2):
    for E in (FinitePoints(np.array([[0.0, 0.0], [1.0, 0.5]])), Sphere(np.zeros(2), 1.0), koch_curve(2)):
        a, b = E.distance(np.array([[x1, y1], [x2, y2]]))
        assert abs(a - b) <= math.hypot(x1 - x2, y1 - y2) + 1e-9


def test_polygon_matches_brute_force():
    rng = np.random.default_rng(3)
    verts = rng.uniform(-1, 1, (150, 2))
    E = PolygonalCurve(verts, closed=True)
    z = rng.uniform(-1.5, 1.5, (300, 2))
    assert np.allclose(E.distance(z), brute_segment_distance(z, verts, True), atol=1e-12)
    small = PolygonalCurve(verts[:5], closed=False)
    assert np.allclose(small.distance(z), brute_segment_distance(z, verts[:5], False), atol=1e-12)


def test_koch_curve_structure():
    E = koch_curve(3)
    assert len(E.vertices) == 3 * 4 ** 3
    assert E.closed
    lo, hi = E.bbox()
    # the snowflake is symmetric about the vertical axis
    assert lo[0] == pytest.approx(-hi[0])
    flat = koch_curve(2, snowflake=False)
    assert len(flat.vertices) == 4 ** 2 + 1
    # bumps point upwards for the flat curve
    assert flat.vertices[:, 1].max() == pytest.approx(math.sqrt(3) / 6)


def test_similitude_rejects_expansion():
    with pytest.raises(DescriptorError):
        Similitude(1.5, (0.0, 0.0))
    s = Similitude(0.5, (1.0, 0.0))
    assert np.allclose(s.fixed_point(), [2.0, 0.0])


def test_strong_separation_checked():
    maps = (Similitude(0.6, (0.0, 0.0)), Similitude(0.6, (0.4, 0.0)))
    with pytest.raises(DescriptorError):
        IFSAttractor(maps, strong_separation=True, separation_box=((0, 0), (1, 1)))


def test_similarity_dimension():
    assert similarity_dimension(cantor_middle_thirds()) == pytest.approx(CANTOR_Q)
    assert similarity_dimension(cantor_dust(0.25)) == pytest.approx(1.0)


def test_ifs_samples_lie_on_set(cantor):
    pts = cantor.sample(50, np.random.default_rng(0))
    assert np.all(cantor.distance(pts, 1e-9) <= 2e-9)


def test_layer_membership(point2):
    assert layer_membership([0.5, 0], point2, 0.25, 1.0) is True
    assert layer_membership([2, 0], point2, 0.25, 1.0) is False
    with pytest.raises(ValueError):
        layer_membership([1, 0], point2, 1.0, 0.5)


def test_union_distance():
    E = Union((FinitePoints(np.array([[0.0, 0.0]])), Sphere(np.array([5.0, 0.0]), 1.0)))
    assert np.allclose(E.distance(np.array([[3.0, 0.0], [-1.0, 0.0]])), [1.0, 1.0])


@pytest.mark.parametrize("E", [
    FinitePoints(np.array([[0.0, 0.0], [1.0, 2.0]])), Sphere(np.array([1.0, 0.0, 0.0]), 2.0),
    HalfspaceBoundary(3), PuncturedBallBoundary(1.0, 2), koch_curve(1), cantor_middle_thirds(), cantor_dust(),
])
def test_json_round_trip(E):
    doc = json.loads(json.dumps(descriptor_to_json(E)))
    F = descriptor_from_json(doc)
    z = np.array([[0.3, -0.7] + [0.1] * (E.dim - 2), [2.0, 1.0] + [0.5] * (E.dim - 2)])
    assert np.allclose(F.distance(z), E.distance(z))


@pytest.mark.parametrize("doc", [{"dim": 2}, {"dim": 2, "set": {"type": "blob"}},
                                 {"dim": 3, "set": {"type": "points", "points": [[0, 0]]}},
                                 {"dim": 2, "set": {"type": "sphere"}}])
def test_malformed_descriptors(doc):
    with pytest.raises(DescriptorError):
        descriptor_from_json(doc)


def test_scaled_descriptor(cantor):
    big = cantor.scaled(3.0)
    assert big.distance(np.array([[1.5, 0.0]]), 1e-9)[0] == pytest.approx(0.5, abs=1e-8)


def test_ifs_self_consistency(cantor):
    rng = np.random.default_rng(5)
    z = rng.uniform(-0.5, 1.5, (50, 2))
    coarse = cantor.distance(z, 1e-6)
    fine = cantor.distance(z, 1e-7)
    assert np.all(np.abs(coarse - fine) <= 1e-6 + 1e-7)
    # d(z, A) = min_i d(z, f_i(A)); both maps scale by 1/3, the second shifts by 2/3
    left = cantor.scaled(1 / 3).distance(z, 1e-8)
    right = cantor.scaled(1 / 3).distance(z - [2 / 3, 0.0], 1e-8)
    assert np.allclose(np.minimum(left, right), cantor.distance(z, 1e-8), atol=3e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), coord, coord)
def test_scaling_covariance(c, x, y):
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [-1.5, 0.5]])
    E = FinitePoints(pts)
    want = c * E.distance(np.array([[x, y]]))[0]
    assert E.scaled(c).distance(np.array([[c * x, c * y]]))[0] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_layer_membership_cantor_matches_brute_force(cantor):
    z = np.array([0.5, 0.4])
    d, _ = brute_cantor_distance(z)
    assert layer_membership(z, cantor, 0.3, 0.5) is bool(0.3 <= d[0] <= 0.5)
    assert layer_membership([0, 2], Sphere(np.zeros(2), 1.0), 0.5, 1.5) is True
    assert layer_membership([0, 0], Sphere(np.zeros(2), 1.0), 0.5, 0.9) is False
