import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boolperc import geometry as geo
from boolperc.errors import InputError
from boolperc.rng import stream

from conftest import SPACES

# integral of 2/(1-t^2) over [0, 0.5]: the disk metric along a radius
H2_DIST_HALF = 1.0986122886681096
# integral of 2 pi sinh t over [0, 1]
H2_AREA_1 = 3.412276265284902
# ratio of the same integrals over [0, 1] and [0, 2]
H2_RATIO_1_2 = 0.19661193324148182


def test_pythagoras():
    assert geo.distance(geo.EUCLIDEAN2, [0, 0], [3, 4]) == pytest.approx(5.0)


def test_disk_radial_distance():
    assert geo.distance(geo.HYPERBOLIC_PLANE, [0, 0], [0.5, 0]) == pytest.approx(H2_DIST_HALF, abs=1e-12)


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_distance_to_self_is_zero(sp, rng):
    p = geo.sample_polar(sp, 2.0, 20, rng)
    assert np.all(geo.distance(sp, p, p) == 0)


def test_distance_rejects_points_off_disk():
    with pytest.raises(InputError):
        geo.distance(geo.HYPERBOLIC_PLANE, [0, 0], [1.0, 0])
    with pytest.raises(InputError):
        geo.distance(geo.EUCLIDEAN2, [0, 0], [0, 0, 0])


def test_short_range_disk_distance_keeps_precision():
    p = np.array([0.9, 0.0])
    q = p + [1e-9, 0]
    expect = 2 * 1e-9 / (1 - 0.81)
    assert geo.distance(geo.HYPERBOLIC_PLANE, p, q) == pytest.approx(expect, rel=1e-6)


def test_ball_volumes():
    assert geo.ball_volume(geo.EUCLIDEAN2, 1) == pytest.approx(math.pi)
    assert geo.ball_volume(geo.EUCLIDEAN3, 1) == pytest.approx(4 / 3 * math.pi)
    assert geo.ball_volume(geo.HYPERBOLIC_PLANE, 1) == pytest.approx(H2_AREA_1, rel=1e-12)
    for sp in SPACES:
        assert geo.ball_volume(sp, 0) == 0
    with pytest.raises(InputError):
        geo.ball_volume(geo.EUCLIDEAN2, -1)


def test_uniform_ball_area_ratios():
    n = 100_000
    pts = geo.sample_uniform_ball(geo.EUCLIDEAN2, [0, 0], 1.0, stream(1, 0, "u"), size=n)
    f = np.mean(np.linalg.norm(pts, axis=1) <= 2 ** -0.5)
    assert abs(f - 0.5) < 3 * math.sqrt(0.25 / n)
    sp = geo.HYPERBOLIC_PLANE
    pts = geo.sample_uniform_ball(sp, [0, 0], 2.0, stream(2, 0, "u"), size=n)
    f = np.mean(geo.distance(sp, [0, 0], pts) <= 1)
    p = H2_RATIO_1_2
    assert abs(f - p) < 3 * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_uniform_ball_shrinks_to_centre(sp, rng):
    c = geo.sample_polar(sp, 1.0, 1, rng)[0]
    x = geo.sample_uniform_ball(sp, c, 1e-9, rng)
    assert geo.distance(sp, c, x) <= 1e-9


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_uniform_balls_off_centre(sp):
    # uniformity around a moved centre: share within half the radius
    c = geo.sample_polar(sp, 3.0, 1, stream(3))[0]
    n = 50_000
    pts = geo.sample_uniform_balls(sp, np.repeat(c[None], n, 0), 1.0, stream(4))
    d = geo.distance(sp, c, pts)
    assert d.max() <= 1 + 1e-9
    p = geo.ball_volume(sp, 0.5) / geo.ball_volume(sp, 1.0)
    assert abs(np.mean(d <= 0.5) - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_isometry_to_target_e2(rng):
    g = geo.sample_isometry_to(geo.EUCLIDEAN2, [1, 2], rng)
    assert np.allclose(g(np.zeros(2)), [1, 2])
    assert np.allclose(g.Q @ g.Q.T, np.eye(2))


def test_isometry_to_origin_h2_is_rotation(rng):
    sp = geo.HYPERBOLIC_PLANE
    g = geo.sample_isometry_to(sp, [0, 0], rng)
    p = geo.sample_polar(sp, 3, 50, rng)
    assert np.allclose(np.linalg.norm(g(p), axis=1), np.linalg.norm(p, axis=1))


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_isometries_preserve_distance(sp, rng):
    for _ in range(5):
        g = geo.sample_isometry_to(sp, geo.sample_polar(sp, 2, 1, rng)[0], rng)
        p = geo.sample_polar(sp, 3, 100, rng)
        q = geo.sample_polar(sp, 3, 100, rng)
        assert np.allclose(geo.distance(sp, g(p), g(q)), geo.distance(sp, p, q), atol=1e-9)


@given(theta=st.floats(0, 2 * math.pi), ax=st.floats(-0.6, 0.6), ay=st.floats(-0.6, 0.6),
       reflect=st.booleans(), seed=st.integers(0, 2**32))
def test_disk_maps_compose_and_invert(theta, ax, ay, reflect, seed):
    sp = geo.HYPERBOLIC_PLANE
    g = geo.Isometry.disk(theta, (ax, ay), reflect)
    h = geo.Isometry.disk(theta / 3, (ay / 2, ax / 2), not reflect)
    p = geo.sample_polar(sp, 2.5, 20, stream(seed))
    assert np.allclose(g.inverse()(g(p)), p, atol=1e-9)
    assert np.allclose(g.compose(h)(p), g(h(p)), atol=1e-9)
    q = p[::-1]
    assert np.allclose(geo.distance(sp, g(p), g(q)), geo.distance(sp, p, q), atol=1e-8)


@given(seed=st.integers(0, 2**32))
def test_euclidean_maps_compose_and_invert(seed):
    r = stream(seed)
    sp = geo.EUCLIDEAN3
    g = geo.sample_isometry_to(sp, r.normal(size=3), r)
    h = geo.sample_isometry_to(sp, r.normal(size=3), r)
    p = r.normal(size=(10, 3))
    assert np.allclose(g.inverse()(g(p)), p)
    assert np.allclose(g.compose(h)(p), g(h(p)))


@given(t=st.floats(0, 11.5))
def test_chart_radius_round_trip(t):
    sp = geo.HYPERBOLIC_PLANE
    rho = float(geo.chart_radius(sp, t))
    assert geo.distance(sp, [0, 0], [rho, 0]) == pytest.approx(t, abs=1e-6)
    assert float(geo.metric_radius(sp, rho)) == pytest.approx(t, abs=1e-6)


@given(a=st.floats(-0.7, 0.7), b=st.floats(-0.7, 0.7), c=st.floats(-0.7, 0.7))
def test_disk_triangle_inequality(a, b, c):
    sp = geo.HYPERBOLIC_PLANE
    p, q, s = np.array([a, b / 2]), np.array([b / 2, c]), np.array([c / 2, a / 2])
    assert geo.distance(sp, p, s) <= geo.distance(sp, p, q) + geo.distance(sp, q, s) + 1e-9


def test_sphere_area_is_volume_derivative():
    for sp in SPACES:
        r, e = 1.7, 1e-6
        dv = (geo.ball_volume(sp, r + e) - geo.ball_volume(sp, r - e)) / (2 * e)
        assert geo.sphere_area(sp, r) == pytest.approx(dv, rel=1e-6)
