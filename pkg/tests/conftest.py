import math

import numpy as np
import pytest

from qhvol.geometry import FinitePoints, HalfspaceBoundary, Sphere, cantor_middle_thirds


def cantor_endpoints(depth: int) -> np.ndarray:
    """x-coordinates of the interval endpoints after ``depth`` middle-third removals."""
    left = np.zeros(1)
    width = 1.0
    for _ in range(depth):
        width /= 3
        left = np.concatenate([left, left + 2 * width])
    return np.sort(np.concatenate([left, left + width]))


def brute_cantor_distance(z: np.ndarray, depth: int = 20) -> tuple[np.ndarray, float]:
    """Distance to the depth-``depth`` endpoints (an upper bound) and the slack to the true set."""
    pts = cantor_endpoints(depth)
    z = np.atleast_2d(z)
    i = np.clip(np.searchsorted(pts, z[:, 0]), 1, len(pts) - 1)
    dx = np.minimum(np.abs(z[:, 0] - pts[i - 1]), np.abs(z[:, 0] - pts[i]))
    # inside a depth-level interval the set is within 3^-depth of any point
    return np.hypot(dx, z[:, 1]), 3.0 ** -depth


def brute_segment_distance(z, verts, closed):
    verts = np.asarray(verts, float)
    if closed:
        verts = np.vstack([verts, verts[:1]])
    best = np.full(len(z), np.inf)
    for a, b in zip(verts[:-1], verts[1:]):
        ab = b - a
        t = np.clip(((z - a) @ ab) / (ab @ ab), 0, 1)
        best = np.minimum(best, np.linalg.norm(z - (a + t[:, None] * ab), axis=1))
    return best


@pytest.fixture(scope="session")
def point2():
    return FinitePoints(np.zeros((1, 2)))


@pytest.fixture(scope="session")
def point3():
    return FinitePoints(np.zeros((1, 3)))


@pytest.fixture(scope="session")
def circle():
    return Sphere(np.zeros(2), 1.0)


@pytest.fixture(scope="session")
def cantor():
    return cantor_middle_thirds()


@pytest.fixture(scope="session")
def halfplane():
    return HalfspaceBoundary(2)


CANTOR_Q = math.log(2) / math.log(3)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        for line in RESULTS[number].lines():
            terminalreporter.write_line(line)
