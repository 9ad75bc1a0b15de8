"""Trifurcations, the trifurcation forest, spanning forests and unit flows."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels as K
from . import geometry as geo
from .errors import InputError, InvariantViolation
from .rng import pair_label
from .scene import _phase

# ---------------------------------------------------------------- graphs


class Graph:
    """Undirected simple graph in CSR form."""

    def __init__(self, n, eu, ev, exits=None, positions=None, space=None):
        self.n = int(n)
        self.space = space
        eu = np.asarray(eu, dtype=np.int64)
        ev = np.asarray(ev, dtype=np.int64)
        s = np.concatenate([eu, ev])
        d = np.concatenate([ev, eu])
        order = np.lexsort((d, s))
        s, d = s[order], d[order]
        self.indices = d
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(s, minlength=self.n))]).astype(np.int64)
        self.eu, self.ev = eu, ev
        self.exits = np.zeros(self.n, dtype=bool) if exits is None else np.asarray(exits, dtype=bool)
        self.positions = positions

    @property
    def degree(self):
        return np.diff(self.indptr)

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]


def regular_tree(degree, depth):
    """Ball of radius ``depth`` in the ``degree``-regular tree, root 0.

    Leaves are marked as exits and carry ``degree - 1`` attachment ends,
    standing for the subtrees cut off by truncation.
    """
    if degree < 2 or depth < 0:
        raise InputError("need degree >= 2 and depth >= 0")
    sizes = [1] + [degree * (degree - 1) ** (k - 1) for k in range(1, depth + 1)]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n = int(starts[-1])
    par = np.empty(n - 1, dtype=np.int64)
    child = np.arange(1, n, dtype=np.int64)
    for k in range(1, depth + 1):
        idx = np.arange(starts[k], starts[k + 1]) - starts[k]
        per = degree if k == 1 else degree - 1
        par[starts[k] - 1:starts[k + 1] - 1] = starts[k - 1] + idx // per
    exits = np.zeros(n, dtype=bool)
    exits[starts[depth]:] = depth > 0
    g = Graph(n, par, child, exits=exits)
    g.depth_start = starts
    g.attachments = {int(v): degree - 1 for v in range(int(starts[depth]), n)} if depth else {}
    return g


def path_graph(n):
    return Graph(n, np.arange(n - 1), np.arange(1, n))


# ---------------------------------------------------------------- trifurcations


@dataclass(eq=False)
class Trifurcation:
    index: int
    point: np.ndarray
    label: float
    r: float
    component: int
    cell: int
    local_cells: np.ndarray = field(repr=False)
    branch_of_cell: np.ndarray = field(repr=False)
    branch_boundary: np.ndarray = field(repr=False)

    @property
    def branches(self):
        """Ids of boundary-contacting branches."""
        return [int(b) for b in np.flatnonzero(self.branch_boundary)]


def find_trifurcations(scene, Y, r, phase):
    """Y-atoms whose local piece splits their component into >= 3 boundary branches."""
    if not r > 0:
        raise InputError("scale r must be positive")
    phase = _phase(phase)
    if len(Y) == 0:
        return []
    sp = scene.space
    ras = scene.raster
    reach = max(r, 1.0)
    norms = Y.norms()
    mask_s = scene.phase_mask(phase)
    labels = scene.labels(phase)
    group = scene.group(phase)
    _, comp_bnd = scene._summary[phase]
    out = []
    for i in np.flatnonzero(norms + reach <= scene.L_a):
        y = Y.points[i]
        d = geo.distance(sp, y, Y.points)
        d[i] = np.inf
        if d.min() <= 2 * r:
            continue
        unit = ras.cells_in_ball(y, 1.0)
        if len(unit) == 0 or not mask_s[unit].all():
            continue
        cell = scene.cell_of(y, phase)
        if cell < 0:
            continue
        comp = int(labels[cell])
        if not comp_bnd[comp]:
            continue
        local = scene.local_component(y, r, phase)
        rest = labels == comp
        rest[local] = False
        br = K.label_masked(ras.indptr, ras.indices, rest, group)
        nb = int(br.max()) + 1 if rest.any() else 0
        bnd = np.zeros(nb, dtype=bool)
        bnd[np.unique(br[rest & ras.boundary])] = True
        if bnd.sum() >= 3:
            out.append(Trifurcation(int(i), y.copy(), float(Y.labels[i]), float(r), comp,
                                    int(cell), local, br, bnd))
    return out


# ---------------------------------------------------------------- forest


@dataclass
class ForestEdge:
    u: int
    v: int
    label: int
    branch_u: int
    branch_v: int


@dataclass(eq=False)
class TrifurcationForest:
    vertices: list
    out_edges: list          # (i, j, branch of i containing j)
    edges: list              # ForestEdge with u < v
    complete: np.ndarray
    distances: np.ndarray = field(repr=False)
    space: object = None

    @property
    def n(self):
        return len(self.vertices)

    @property
    def positions(self):
        if not self.vertices:
            return np.empty((0, 2))
        return np.array([t.point for t in self.vertices])

    def graph(self):
        eu = [e.u for e in self.edges]
        ev = [e.v for e in self.edges]
        return Graph(self.n, eu, ev, exits=~np.asarray(self.complete, dtype=bool),
                     positions=self.positions, space=self.space)

    def degree(self):
        return self.graph().degree

    def out_edges_of(self, i):
        return [(j, b) for (a, j, b) in self.out_edges if a == i]

    def to_text(self):
        lines = [f"{self.vertices[e.u].index} {self.vertices[e.v].index} {e.label} {e.branch_u} {e.branch_v}"
                 for e in self.edges]
        return "".join(x + "\n" for x in lines)


def _anchors(scene, tri, phase, k):
    ras = scene.raster
    local = np.zeros(ras.n, dtype=bool)
    local[tri.local_cells] = True
    other = (scene.labels(phase) == tri.component) & ~local
    rows = ras.rows
    hit = local[rows] & other[ras.indices]
    front = np.unique(rows[hit])
    if len(front) == 0:
        front = tri.local_cells
    if k is None or len(front) <= k:
        return front
    v = ras.xy[front] - tri.point
    ang = np.arctan2(v[:, 1], v[:, 0]) if v.shape[1] >= 2 else np.zeros(len(front))
    order = np.lexsort((front, ang))
    pick = np.unique(np.round(np.linspace(0, len(front) - 1, k)).astype(int))
    return front[order[pick]]


def build_forest(scene, trifurcations, phase, anchors=8, tie=None):
    """Join each trifurcation to its nearest trifurcation in every boundary branch.

    Distances are shortest raster paths inside the component between
    anchor cells on the rims of the two local pieces.  Distances are
    binned to width ``tie`` (default 2h) and equal bins go to the smaller
    label; this keeps the choice a strict order, so no cycle can form.
    """
    phase = _phase(phase)
    tris = list(trifurcations)
    n = len(tris)
    tie = 2 * scene.h if tie is None else float(tie)
    D = np.full((n, n), np.inf)
    labels = scene.labels(phase)
    anc = [_anchors(scene, t, phase, anchors) for t in tris]
    for i, t in enumerate(tris):
        same = [j for j in range(n) if j != i and tris[j].component == t.component]
        if not same:
            continue
        dist = scene.distances_from(phase, anc[i], labels == t.component)
        for j in same:
            D[i, j] = dist[anc[j]].min()
    D = np.minimum(D, D.T)
    out_edges = []
    complete = np.ones(n, dtype=bool)
    for i, t in enumerate(tris):
        per_branch = {b: [] for b in t.branches}
        for j, s in enumerate(tris):
            if j == i or s.component != t.component:
                continue
            b = int(t.branch_of_cell[s.cell])
            if b in per_branch:
                per_branch[b].append(j)
        for b, cand in per_branch.items():
            if not cand:
                complete[i] = False
                continue
            best = min(cand, key=lambda j: (math.floor(D[i, j] / tie), tris[j].label, j))
            out_edges.append((i, best, b))
    seen = {}
    for i, j, b in out_edges:
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        u, v = key
        bu = int(tris[u].branch_of_cell[tris[v].cell])
        bv = int(tris[v].branch_of_cell[tris[u].cell])
        seen[key] = ForestEdge(u, v, pair_label(tris[u].label, tris[v].label), bu, bv)
    edges = [seen[k] for k in sorted(seen)]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges:
        a, b = find(e.u), find(e.v)
        if a == b:
            raise InvariantViolation("forest acyclicity", f"edge {e.u}-{e.v} closes a cycle")
        parent[max(a, b)] = min(a, b)
    return TrifurcationForest(tris, out_edges, edges, complete, D, scene.space)


# ---------------------------------------------------------------- spanning forests


def minimal_spanning_forest(n, edges):
    """Kruskal on (u, v, label) triples; returns the kept triples sorted by label."""
    edges = [(int(u), int(v), lab) for u, v, lab in edges]
    labs = [e[2] for e in edges]
    if len(set(labs)) != len(labs):
        raise InputError("edge labels must be distinct")
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    kept = []
    for u, v, lab in sorted(edges, key=lambda e: e[2]):
        a, b = find(u), find(v)
        if a != b:
            parent[max(a, b)] = min(a, b)
            kept.append((u, v, lab))
    return kept


@dataclass
class Backbone:
    vertices: list
    adj: dict
    attachments: dict   # vertex -> number of virtual ends

    def D(self, x):
        return len(self.adj[x]) + self.attachments.get(x, 0)

    def trifurcations(self):
        return [x for x in self.vertices if self.D(x) >= 3]

    def edges(self):
        return sorted((u, v) for u in self.adj for v in self.adj[u] if u < v)


def backbone(n, tree_edges, attachment_set):
    """Union of tree paths between pairs of attachment vertices.

    ``attachment_set`` is a collection of vertices or a dict vertex ->
    multiplicity (the number of cut-off ends the vertex stands for).
    """
    att = dict(attachment_set) if isinstance(attachment_set, dict) else {int(a): 1 for a in attachment_set}
    adj = {v: set() for v in range(n)}
    for e in tree_edges:
        u, v = int(e[0]), int(e[1])
        adj[u].add(v)
        adj[v].add(u)
    alive = set(range(n))
    queue = deque(v for v in range(n) if len(adj[v]) <= 1 and v not in att)
    while queue:
        v = queue.popleft()
        if v not in alive or v in att or len(adj[v]) > 1:
            continue
        alive.discard(v)
        for w in adj[v]:
            adj[w].discard(v)
            if len(adj[w]) <= 1 and w not in att:
                queue.append(w)
        adj[v] = set()
    # drop trees holding fewer than two attachments
    seen = set()
    for s in sorted(alive):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if sum(1 for v in comp if v in att) < 2:
            alive.difference_update(comp)
    verts = sorted(alive)
    return Backbone(verts, {v: sorted(adj[v] & alive) for v in verts},
                    {v: m for v, m in att.items() if v in alive})


@dataclass
class FlowAssignment:
    root: int
    theta: dict
    energy: object
    e1: object
    e2: object
    D: dict = field(repr=False)
    parent: dict = field(repr=False)

    def kirchhoff_residual(self, bb):
        """Largest |inflow - outflow| over vertices, counting virtual ends as outflow."""
        worst = 0
        for x, th in self.theta.items():
            kids = [c for c in bb.adj[x] if self.parent.get(c) == x]
            m = bb.attachments.get(x, 0)
            if x == self.root:
                inflow = 1
                share = th / self.D[x] if self.D[x] else 0
            else:
                inflow = th
                share = th / (self.D[x] - 1) if self.D[x] > 1 else 0
            out = sum(self.theta[c] for c in kids) + m * share
            if x != self.root and self.D[x] == 1:
                out = inflow  # dead end, only possible when D is one
            worst = max(worst, abs(inflow - out))
        return worst


def unit_flow(bb, root, exact=False):
    """The flow that starts with mass 1 at ``root`` and splits evenly at each vertex."""
    if root not in bb.adj:
        raise InputError("root is not a backbone vertex")
    one = Fraction(1) if exact else 1.0
    D = {x: bb.D(x) for x in bb.vertices}
    theta = {root: one}
    parent = {root: None}
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for c in bb.adj[x]:
            if c in theta:
                continue
            parent[c] = x
            if x == root:
                theta[c] = one / D[root]
            else:
                theta[c] = theta[x] / (D[x] - 1)
            queue.append(c)
    e1 = sum((t * t for x, t in theta.items() if x == root or D[x] >= 3), 0 * one)
    e2 = sum((t * t for x, t in theta.items() if x != root and D[x] < 3), 0 * one)
    return FlowAssignment(root, theta, e1 + e2, e1, e2, D, parent)


def incoming_mass(bb, flows):
    """max over degree-2 vertices x of sum_y theta_y(x)^2; returns (value, vertex)."""
    tot = {}
    for f in flows:
        for x, t in f.theta.items():
            if x != f.root and f.D[x] == 2:
                tot[x] = tot.get(x, 0) + t * t
    if not tot:
        return 0.0, None
    x = max(tot, key=lambda k: (tot[k], -k))
    return tot[x], x


def all_flows(bb, exact=False):
    return [unit_flow(bb, y, exact=exact) for y in bb.trifurcations()]


def flows_to_text(bb, flows):
    lines = []
    for f in flows:
        for x in sorted(f.theta):
            lines.append(f"{f.root} {x} {float(f.theta[x])!r}")
    return "".join(s + "\n" for s in lines)


def ball_graph_backbone(scene):
    """Spanning-forest backbone of the occupied ball graph seen from the window.

    Balls meeting B(0, L_a) are vertices; those also meeting the sphere of
    radius L_a are attachments.  Edge labels hash the two atom labels.
    """
    om = scene.omega
    t = om.norms()
    inside = t - om.radii <= scene.L_a
    idx = np.flatnonzero(inside)
    remap = -np.ones(len(om), dtype=np.int64)
    remap[idx] = np.arange(len(idx))
    ei, ej = scene.edges
    keep = inside[ei] & inside[ej]
    edges = [(int(remap[a]), int(remap[b]), pair_label(om.labels[a], om.labels[b]))
             for a, b in zip(ei[keep], ej[keep])]
    msf = minimal_spanning_forest(len(idx), edges)
    att = {int(remap[i]): 1 for i in idx if t[i] + om.radii[i] >= scene.L_a}
    return backbone(len(idx), [(u, v) for u, v, _ in msf], att), idx, msf
