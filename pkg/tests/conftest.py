import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from boolperc import geometry as geo
from boolperc import process as pr
from boolperc.rng import stream

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

SPACES = [geo.EUCLIDEAN2, geo.EUCLIDEAN3, geo.HYPERBOLIC_PLANE]


@pytest.fixture
def rng():
    return stream(12345, 0, "test")


def measure(space, pts, radii, labels=None, window=10.0, halo=3.0):
    """Hand-built point measure."""
    pts = np.asarray(pts, dtype=float).reshape(-1, space.dim)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(pts),))
    if labels is None:
        labels = (np.arange(len(pts)) + 1) / (len(pts) + 1)
    return pr.PointMeasure(space, pts, radii, labels, window, halo)


def chain(start, end, step):
    """Points from start to end (Euclidean chart) spaced by at most step."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    n = int(np.ceil(np.linalg.norm(end - start) / step))
    t = np.linspace(0, 1, n + 1)[:, None]
    return start + t * (end - start)
