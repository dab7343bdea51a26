import math

import numpy as np
import pytest

from qhvol.geometry import FinitePoints, HalfspaceBoundary, Sphere, unit_ball_constants
from qhvol.montecarlo import Annulus, EuclideanBall, QhBall, RadialShell, UniformBall, UniformBox, \
    qh_volume_monte_carlo
from qhvol.special import qh_vol_ball_H3, qh_vol_ball_punctured, qh_vol_euclidean_ball_in_Bn


def within(res, want, k=3.0):
    return abs(res.estimate - want) <= k * res.stderr


def test_punctured_plane_small_ball(point2):
    res = qh_volume_monte_carlo(point2, QhBall((1.0, 0.0), 2.0), 200_000, seed=1)
    assert within(res, 4 * math.pi)
    assert res.stderr < 0.01 * res.estimate


def test_punctured_plane_large_ball_matches_exact_area(point2):
    r = 2 * math.pi
    res = qh_volume_monte_carlo(point2, QhBall((1.0, 0.0), r), 400_000, seed=2)
    assert within(res, qh_vol_ball_punctured(2, r))


def test_unit_ball_euclidean_ball(circle):
    res = qh_volume_monte_carlo(circle, EuclideanBall((0.0, 0.0), 0.5), 200_000, seed=3)
    assert within(res, qh_vol_euclidean_ball_in_Bn(2, 0.5))


def test_h3_ball():
    res = qh_volume_monte_carlo(HalfspaceBoundary(3), QhBall((0.0, 0.0, 1.0), 1.0), 200_000, seed=4)
    assert within(res, qh_vol_ball_H3(1.0))


def test_annulus(point3):
    res = qh_volume_monte_carlo(point3, Annulus((0.0, 0.0, 0.0), 1.0, math.e), 100_000, seed=5)
    # the shell sampler matches the integrand exactly, so the estimate has no variance
    assert res.estimate == pytest.approx(unit_ball_constants(3)[1], rel=1e-9)


def test_graph_membership_on_cantor(cantor):
    res = qh_volume_monte_carlo(cantor, QhBall((0.5, 1.0), 1.0, k_max=9), 50_000, seed=6)
    assert res.accepted > 0 and res.estimate > 0


def test_result_independent_of_worker_count(point2):
    region = QhBall((1.0, 0.0), 3.0)
    a = qh_volume_monte_carlo(point2, region, 150_000, seed=7, workers=1)
    b = qh_volume_monte_carlo(point2, region, 150_000, seed=7, workers=4)
    assert a == b
    c = qh_volume_monte_carlo(point2, region, 150_000, seed=8)
    assert c.estimate != a.estimate


def test_region_not_hit(point2):
    with pytest.raises(RuntimeError, match="region not hit"):
        qh_volume_monte_carlo(point2, EuclideanBall((1.0, 0.0), 0.0), 1000, seed=0)


def test_argument_checks(point2):
    with pytest.raises(ValueError):
        qh_volume_monte_carlo(point2, EuclideanBall((0.0, 0.0), 1.0), 1, seed=0)
    with pytest.raises(ValueError):
        qh_volume_monte_carlo(point2, EuclideanBall((0.0, 0.0), 1.0), 100, seed=None)
    with pytest.raises(TypeError):
        qh_volume_monte_carlo(point2, "ball", 100, seed=0)


@pytest.mark.parametrize("sampler,volume", [
    (UniformBall(np.zeros(2), 2.0), 4 * math.pi),
    (UniformBox(np.array([-1.0, 0.0]), np.array([2.0, 1.0])), 3.0),
    (RadialShell(np.zeros(2), 0.5, 2.0), 4 * math.pi - math.pi / 4),
])
def test_sampler_weights_integrate_one(sampler, volume):
    z, w = sampler.draw(np.random.default_rng(0), 200_000)
    # E[w] is the volume of the sampled region
    assert w.mean() == pytest.approx(volume, rel=0.02)
