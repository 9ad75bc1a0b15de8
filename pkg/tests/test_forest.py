import math
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from boolperc import forest as fo
from boolperc import geometry as geo
from boolperc import process as pr
from boolperc.errors import InputError
from boolperc.rng import stream
from boolperc.scene import OCCUPIED, VACANT, build_scene

from conftest import chain, measure

E2 = geo.EUCLIDEAN2
ARM_R, HUB_R, STEP = 0.5, 1.3, 0.8


def arm(start, angle, length):
    end = np.asarray(start) + length * np.array([math.cos(angle), math.sin(angle)])
    return chain(start, end, STEP)[1:]


def build(pts, radii, L_a=10.0, h=0.1):
    om = measure(E2, pts, radii, window=L_a, halo=5.5)
    return build_scene(E2, om, L_a + 5.5, L_a, h)


def ys(points, labels=None):
    pts = np.atleast_2d(points)
    labels = np.linspace(0.1, 0.9, len(pts)) if labels is None else labels
    return measure(E2, pts, 1.0, labels, window=10.0, halo=5.5)


def tripod_scene():
    pts, rad = [np.zeros(2)], [HUB_R]
    for a in (0.3, 0.3 + 2 * math.pi / 3, 0.3 + 4 * math.pi / 3):
        seg = arm([0, 0], a, 10.6)
        pts.extend(seg)
        rad.extend([ARM_R] * len(seg))
    return build(np.array(pts), np.array(rad))


def star_of_hubs():
    """Central hub with three arms, each ending in a hub that forks twice to the rim."""
    pts, rad = [np.zeros(2)], [HUB_R]
    hubs = []
    for a in (0.2, 0.2 + 2 * math.pi / 3, 0.2 + 4 * math.pi / 3):
        seg = arm([0, 0], a, 4.2)
        hub = seg[-1]
        hubs.append(hub)
        pts.extend(seg[:-1])
        rad.extend([ARM_R] * (len(seg) - 1))
        pts.append(hub)
        rad.append(HUB_R)
        for da in (-0.6, 0.6):
            s2 = arm(hub, a + da, 7.0)
            pts.extend(s2)
            rad.extend([ARM_R] * len(s2))
    return build(np.array(pts), np.array(rad)), [np.zeros(2)] + hubs


def brute_branch_count(S, t):
    comp = S.labels(OCCUPIED) == t.component
    comp[t.local_cells] = False
    r = S.raster
    keep = comp[r.rows] & comp[r.indices] & (S.ball_group[r.rows] == S.ball_group[r.indices])
    g = nx.Graph()
    g.add_nodes_from(np.flatnonzero(comp).tolist())
    g.add_edges_from(zip(r.rows[keep].tolist(), r.indices[keep].tolist()))
    return sum(1 for cc in nx.connected_components(g) if r.boundary[list(cc)].any())


def test_no_y_atoms():
    S = tripod_scene()
    assert fo.find_trifurcations(S, pr.empty_measure(E2, 10.0, 5.5), 2.0, OCCUPIED) == []


def test_tripod_detected_with_three_branches():
    S = tripod_scene()
    T = fo.find_trifurcations(S, ys([[0.0, 0.0]]), 2.0, OCCUPIED)
    assert len(T) == 1
    assert len(T[0].branches) == 3
    assert brute_branch_count(S, T[0]) == 3


def test_y_on_an_arm_is_not_a_trifurcation():
    S = tripod_scene()
    p = arm([0, 0], 0.3, 5.0)[-1]
    S2 = build(np.vstack([S.omega.points, p + [0, 0.01]]), np.append(S.omega.radii, HUB_R))
    assert fo.find_trifurcations(S2, ys([p]), 2.0, OCCUPIED) == []


def test_y_in_bounded_component_excluded():
    pts = np.array([[0, 0], [1.0, 0], [-0.5, 0.9], [-0.5, -0.9]])
    S = build(pts, np.array([HUB_R, 0.6, 0.6, 0.6]))
    assert fo.find_trifurcations(S, ys([[0, 0]]), 1.0, OCCUPIED) == []


def test_scale_must_be_positive():
    with pytest.raises(InputError):
        fo.find_trifurcations(tripod_scene(), ys([[0, 0]]), 0.0, OCCUPIED)


def test_close_y_atoms_are_not_isolated():
    S = tripod_scene()
    assert fo.find_trifurcations(S, ys([[0, 0], [0.5, 0.5]]), 2.0, OCCUPIED) == []


def test_single_trifurcation_gives_edgeless_forest():
    S = tripod_scene()
    T = fo.find_trifurcations(S, ys([[0.0, 0.0]]), 2.0, OCCUPIED)
    F = fo.build_forest(S, T, OCCUPIED)
    assert F.edges == [] and not F.complete[0]
    assert fo.build_forest(S, [], OCCUPIED).n == 0


def test_two_hubs_share_one_edge():
    pts, rad = [], []
    for c, side in (([-3.0, 0], math.pi), ([3.0, 0], 0.0)):
        pts.append(c)
        rad.append(HUB_R)
        for da in (-0.7, 0.7):
            s = arm(c, side + da, 10.0)
            pts.extend(s)
            rad.extend([ARM_R] * len(s))
    bridge = chain([-3, 0], [3, 0], STEP)[1:-1]
    pts.extend(bridge)
    rad.extend([ARM_R] * len(bridge))
    S = build(np.array(pts), np.array(rad))
    T = fo.find_trifurcations(S, ys([[-3, 0], [3, 0]]), 2.0, OCCUPIED)
    assert len(T) == 2
    F = fo.build_forest(S, T, OCCUPIED)
    assert len(F.edges) == 1
    assert sorted(i for i, _, _ in F.out_edges) == [0, 1]


def test_star_of_hubs_forest():
    S, centres = star_of_hubs()
    T = fo.find_trifurcations(S, ys(centres, [0.5, 0.2, 0.3, 0.4]), 2.0, OCCUPIED)
    assert len(T) == 4
    F = fo.build_forest(S, T, OCCUPIED)
    # the centre is complete: one edge into each branch, each to a distinct hub
    c = [i for i, t in enumerate(T) if np.allclose(t.point, 0)][0]
    assert F.complete[c]
    outs = [(j, b) for i, j, b in F.out_edges if i == c]
    assert len(outs) == 3 and sorted(b for _, b in outs) == sorted(T[c].branches)
    assert len({j for j, _ in outs}) == 3
    g = nx.Graph([(e.u, e.v) for e in F.edges])
    assert nx.is_forest(g) and g.number_of_edges() == 3
    assert all(not F.complete[i] for i in range(4) if i != c)
    text = F.to_text().splitlines()
    assert len(text) == 3 and all(len(l.split()) == 5 for l in text)


def test_forest_is_acyclic_on_random_scenes():
    # vacant phase of a sparse disk scene; networkx forest check as oracle
    done = 0
    sp = geo.HYPERBOLIC_PLANE
    for s in range(12):
        om = pr.sample_poisson(sp, 7.0, 4.5, 0.025, pr.Constant(2.0), stream(s, 0, "omega"))
        Y = pr.sample_poisson(sp, 7.0, 4.5, 0.03, pr.Constant(1.0), stream(s, 0, "Y"))
        S = build_scene(sp, om, 11.5, 7.0, 0.5)
        T = fo.find_trifurcations(S, Y, 1.25, VACANT)
        F = fo.build_forest(S, T, VACANT)
        if F.n == 0:
            continue
        g = nx.Graph()
        g.add_nodes_from(range(F.n))
        g.add_edges_from((e.u, e.v) for e in F.edges)
        assert nx.is_forest(g)
        done += 1
    assert done > 0


# ---------------------------------------------------------------- spanning forests


def test_msf_triangle_and_tree():
    kept = fo.minimal_spanning_forest(3, [(0, 1, 0.2), (1, 2, 0.5), (0, 2, 0.9)])
    assert sorted(k[2] for k in kept) == [0.2, 0.5]
    tree = [(0, 1, 0.7), (1, 2, 0.1), (1, 3, 0.4)]
    assert sorted(fo.minimal_spanning_forest(4, tree)) == sorted(tree)
    with pytest.raises(InputError):
        fo.minimal_spanning_forest(2, [(0, 1, 0.5), (1, 0, 0.5)])


def cycle_rule(n, edges):
    """Delete the top-label edge of some cycle until none is left."""
    g = nx.MultiGraph()
    g.add_nodes_from(range(n))
    for u, v, lab in edges:
        g.add_edge(u, v, key=lab)
    while True:
        try:
            cyc = nx.find_cycle(g)
        except nx.NetworkXNoCycle:
            break
        u, v, k = max(cyc, key=lambda e: e[2])
        g.remove_edge(u, v, key=k)
    return sorted(k for _, _, k in g.edges(keys=True))


@given(seed=st.integers(0, 2**32), n=st.integers(2, 50), p=st.floats(0.05, 0.4))
def test_msf_matches_cycle_rule(seed, n, p):
    r = stream(seed)
    edges = [(u, v, float(r.uniform())) for u in range(n) for v in range(u + 1, n) if r.uniform() < p]
    kept = fo.minimal_spanning_forest(n, edges)
    assert sorted(k[2] for k in kept) == cycle_rule(n, edges)


# ---------------------------------------------------------------- backbones


def test_backbone_path_and_star():
    bb = fo.backbone(5, [(i, i + 1) for i in range(4)], {0, 4})
    assert bb.vertices == [0, 1, 2, 3, 4]
    star = fo.backbone(4, [(0, 1), (0, 2), (0, 3)], {1})
    assert star.vertices == []


@given(seed=st.integers(0, 2**32))
def test_backbone_matches_path_membership(seed):
    r = stream(seed)
    n = 40
    edges = [(int(r.integers(0, v)), v) for v in range(1, n)]
    att = set(int(a) for a in r.choice(n, 5, replace=False))
    bb = fo.backbone(n, edges, att)
    g = nx.Graph(edges)
    keep = set()
    for a in att:
        for b in att:
            if a < b:
                keep.update(nx.shortest_path(g, a, b))
    assert set(bb.vertices) == keep


# ---------------------------------------------------------------- flows


def tree_e1(depth):
    t = fo.regular_tree(3, depth)
    bb = fo.backbone(t.n, list(zip(t.eu, t.ev)), t.attachments)
    return fo.unit_flow(bb, 0, exact=True)


def test_regular_tree_flow_values():
    f = tree_e1(6)
    t = fo.regular_tree(3, 6)
    s = t.depth_start
    assert all(f.theta[v] == Fraction(1, 3) for v in range(s[1], s[2]))
    assert all(f.theta[v] == Fraction(1, 6) for v in range(s[2], s[3]))
    # E1 at depth d is 5/3 - (2/3) 2^-d; Richardson on two depths is exact
    e = {d: tree_e1(d).e1 for d in (5, 6)}
    assert e[6] == Fraction(5, 3) - Fraction(2, 3) / 2 ** 6
    assert 2 * e[6] - e[5] == Fraction(5, 3)


def test_single_edge_flow():
    # y has one branch, ending in a single attachment
    bb = fo.Backbone([0, 1, 2], {0: [1], 1: [0, 2], 2: [1]}, {2: 1})
    assert bb.D(0) == 1
    f = fo.unit_flow(bb, 0, exact=True)
    assert f.kirchhoff_residual(bb) == 0
    assert all(v == 1 for v in f.theta.values())


def test_incoming_mass_between_two_trifurcations():
    bb = fo.backbone(3, [(0, 1), (1, 2)], {0: 2, 2: 2})
    flows = fo.all_flows(bb, exact=True)
    mass, x = fo.incoming_mass(bb, flows)
    assert (mass, x) == (Fraction(2, 9), 1)


def test_incoming_mass_single_root():
    bb = fo.backbone(4, [(0, 1), (1, 2), (0, 3)], {0: 1, 2: 1, 3: 1})
    flows = fo.all_flows(bb, exact=True)
    assert len(flows) == 1
    mass, _ = fo.incoming_mass(bb, flows)
    assert mass <= Fraction(1, bb.D(0) ** 2)


def random_backbone(seed, n=60):
    r = stream(seed)
    edges = [(int(r.integers(0, v)), v) for v in range(1, n)]
    leaves = [v for v in range(n) if sum(v in e for e in edges) == 1]
    att = {v: int(r.integers(1, 3)) for v in leaves}
    for v in r.choice(n, 5, replace=False):
        att[int(v)] = att.get(int(v), 0) + 1
    return fo.backbone(n, edges, att)


@given(seed=st.integers(0, 2**32))
def test_flow_bounds_on_random_backbones(seed):
    bb = random_backbone(seed)
    flows = fo.all_flows(bb, exact=True)
    for f in flows:
        assert f.kirchhoff_residual(bb) == 0
        assert f.e1 <= 2
    mass, _ = fo.incoming_mass(bb, flows)
    assert mass <= 1


def test_flow_root_must_be_on_backbone():
    bb = fo.backbone(3, [(0, 1), (1, 2)], {0, 2})
    with pytest.raises(InputError):
        fo.unit_flow(bb, 7)


def test_flows_text_rows():
    bb = fo.backbone(3, [(0, 1), (1, 2)], {0: 2, 2: 2})
    rows = fo.flows_to_text(bb, fo.all_flows(bb)).splitlines()
    assert len(rows) == 6 and all(len(r.split()) == 3 for r in rows)


def test_ball_graph_backbone_realized():
    om = pr.sample_poisson(E2, 8, 3, 0.4, pr.Constant(1.0), stream(3))
    S = build_scene(E2, om, 11, 8, 0.25)
    bb, idx, msf = fo.ball_graph_backbone(S)
    g = nx.Graph([(u, v) for u, v, _ in msf])
    assert nx.is_forest(g) if g.number_of_nodes() else True
    for f in fo.all_flows(bb, exact=True):
        assert f.kirchhoff_residual(bb) == 0 and f.e1 <= 2
