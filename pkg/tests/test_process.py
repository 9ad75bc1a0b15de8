import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boolperc import geometry as geo
from boolperc import process as pr
from boolperc.errors import InputError
from boolperc.rng import stream

from conftest import SPACES, measure

# 0.2 times the integral of 2 pi sinh t over [0, 4]
H2_MEAN_L4 = 33.05990040262367


def _mean_count(sp, L, lam, seeds):
    n = [len(pr.sample_poisson(sp, L, 0.0, lam, pr.Constant(1.0), stream(s, 0, "omega"))) for s in range(seeds)]
    return np.mean(n), math.sqrt(lam * geo.ball_volume(sp, L) / seeds)


def test_poisson_mean_e2():
    m, se = _mean_count(geo.EUCLIDEAN2, 3, 0.5, 2000)
    assert abs(m - 0.5 * 9 * math.pi) < 3 * se


def test_poisson_mean_h2():
    m, se = _mean_count(geo.HYPERBOLIC_PLANE, 4, 0.2, 1000)
    assert abs(m - H2_MEAN_L4) < 3 * se


def test_tiny_intensity_gives_empty():
    empty = sum(len(pr.sample_poisson(geo.EUCLIDEAN2, 1, 0, 1e-9, pr.Constant(1), stream(s))) == 0
                for s in range(50))
    assert empty == 50


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_points_fill_window_uniformly(sp):
    om = pr.sample_poisson(sp, 3.0, 0.0, 20.0, pr.Constant(1.0), stream(5))
    t = om.norms()
    assert t.max() <= 3.0 + 1e-9
    p = geo.ball_volume(sp, 1.5) / geo.ball_volume(sp, 3.0)
    assert abs(np.mean(t <= 1.5) - p) < 4 * math.sqrt(p * (1 - p) / len(om))


def test_bad_arguments():
    with pytest.raises(InputError):
        pr.sample_poisson(geo.EUCLIDEAN2, 1, 0, 0.0, pr.Constant(1), stream(0))
    with pytest.raises(InputError):
        pr.sample_poisson(geo.HYPERBOLIC_PLANE, 11, 2, 1.0, pr.Constant(1), stream(0))
    with pytest.raises(InputError):
        measure(geo.EUCLIDEAN2, [[0, 0]], [-1.0])


def test_radius_laws():
    r = stream(9)
    law = pr.parse_radius_law("bounded:0.5@0.25,2.0@0.75")
    x = law.sample(20000, r)
    assert set(np.unique(x)) == {0.5, 2.0}
    assert abs(np.mean(x == 2.0) - 0.75) < 0.02
    assert (law.min_radius, law.max_radius) == (0.5, 2.0)
    e = pr.parse_radius_law("exptrunc:2.0,3.0,0.5")
    y = e.sample(20000, r)
    assert y.min() >= 0.5 and y.max() <= 3.0
    for text in ("constant:1.5", "bounded:1.0@0.5,2.0@0.5", "exptrunc:1.0,2.0,0.25"):
        assert pr.parse_radius_law(pr.parse_radius_law(text).to_text()) == pr.parse_radius_law(text)
    for bad in ("constant:-1", "bounded:1@0.3", "weird:1", "exptrunc:1,0.5,1"):
        with pytest.raises(InputError):
            pr.parse_radius_law(bad)


def test_insert_into_empty():
    om = pr.empty_measure(geo.EUCLIDEAN2, 5)
    om2 = pr.insert_atom(om, [0, 0], 1.0, 0.5)
    assert len(om2) == 1 and np.allclose(om2.points, 0)


@given(seed=st.integers(0, 2**32), x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_insert_adds_one_atom_and_its_ball(seed, x, y):
    sp = geo.EUCLIDEAN2
    om = pr.sample_poisson(sp, 4, 0, 0.3, pr.Constant(1.0), stream(seed))
    om2 = pr.insert_atom(om, [x, y], 0.7, 0.3)
    assert len(om2) == len(om) + 1
    probe = geo.sample_polar(sp, 5, 400, stream(seed, 1))

    def covered(m):
        if len(m) == 0:
            return np.zeros(len(probe), bool)
        return (geo.distance(sp, probe[:, None], m.points[None]) <= m.radii[None]).any(1)

    in_new = geo.distance(sp, [x, y], probe) <= 0.7
    assert np.array_equal(covered(om2), covered(om) | in_new)


def test_insert_duplicate_point_rejected():
    om = measure(geo.EUCLIDEAN2, [[1, 1]], 1.0)
    with pytest.raises(InputError):
        pr.insert_atom(om, [1, 1], 1.0, 0.1)


def test_delete_whole_window_and_empty_ball():
    om = pr.sample_poisson(geo.EUCLIDEAN2, 4, 1, 1.0, pr.Constant(1.0), stream(3))
    assert len(pr.delete_in_ball(om, [0, 0], 5.0)) == 0
    far = pr.delete_in_ball(om, [100, 100], 1.0)
    assert far.same_atoms(om)


def test_delete_respects_radius_cap():
    om = measure(geo.EUCLIDEAN2, [[0, 0], [0.5, 0]], [1.0, 2.0])
    out = pr.delete_in_ball(om, [0, 0], 1.0, radius_cap=1.5)
    assert np.allclose(out.radii, [2.0])


def test_thinning_extremes():
    om = pr.sample_poisson(geo.EUCLIDEAN2, 4, 0, 1.0, pr.Constant(1.0), stream(4))
    assert pr.thin_by_label(om, 1.0).same_atoms(om)
    assert len(pr.thin_by_label(om, 0.0)) == 0
    with pytest.raises(InputError):
        pr.thin_by_label(om, 1.5)


def test_thinning_mean():
    kept = [len(pr.thin_by_label(pr.sample_poisson(geo.EUCLIDEAN2, 5, 0, 1.0, pr.Constant(1.0),
                                                   stream(s)), 0.4)) for s in range(200)]
    mu = 0.4 * 25 * math.pi
    assert abs(np.mean(kept) - mu) < 3 * math.sqrt(mu / 200)


@given(t1=st.floats(0, 1), t2=st.floats(0, 1), seed=st.integers(0, 1000))
def test_thinning_is_nested(t1, t2, seed):
    om = pr.sample_poisson(geo.EUCLIDEAN2, 3, 0, 1.0, pr.Constant(1.0), stream(seed))
    a, b = sorted((t1, t2))
    small, big = pr.thin_by_label(om, a), pr.thin_by_label(om, b)
    assert set(map(tuple, small.points)) <= set(map(tuple, big.points))


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_text_round_trip_is_exact(sp, tmp_path):
    om = pr.sample_poisson(sp, 2, 1, 2.0, pr.parse_radius_law("exptrunc:2.0,1.0,0.25"), stream(6), seed=6)
    text = pr.to_text(om)
    back = pr.from_text(text)
    assert back.same_atoms(om)
    assert (back.window, back.halo, back.intensity, back.seed, back.radius_law) == \
        (om.window, om.halo, om.intensity, om.seed, om.radius_law)
    pr.write(om, tmp_path / "w.txt")
    assert pr.read(tmp_path / "w.txt").same_atoms(om)
    assert pr.to_text(back) == text


def test_header_echoes_config():
    om = pr.sample_poisson(geo.EUCLIDEAN2, 5, 0, 1.0, pr.Constant(1.0), stream(1), seed=1)
    head = [l for l in pr.to_text(om).splitlines() if l.startswith("#")]
    joined = "\n".join(head)
    for key in ("space = E2", "window = 5.0", "intensity = 1.0", "seed = 1"):
        assert key in joined


def test_restrict_keeps_inner_atoms():
    om = pr.sample_poisson(geo.EUCLIDEAN2, 6, 2, 1.0, pr.Constant(1.0), stream(7))
    sub = om.restrict(4, 1)
    assert np.all(sub.norms() <= 5) and len(sub) == int(np.sum(om.norms() <= 5))


@pytest.mark.parametrize("sp", SPACES, ids=lambda s: s.kind)
def test_transform_moves_points(sp, rng):
    om = pr.sample_poisson(sp, 2, 0, 1.0, pr.Constant(1.0), rng)
    g = geo.sample_isometry_to(sp, geo.sample_polar(sp, 1, 1, rng)[0], rng)
    moved = om.transform(g)
    assert np.allclose(moved.points, g(om.points))
    assert np.array_equal(moved.labels, om.labels)
