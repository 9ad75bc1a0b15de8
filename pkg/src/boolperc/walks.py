"""Walks on trifurcation forests and in the ambient space.

The forest walk is the delayed simple walk: from a vertex of degree d it
stays put or moves to one of the d neighbours, each with probability
1/(d+1).  The two-sided version starts from a vertex near an anchor
point, picked with weight deg+1, and runs two independent copies of the
walk, one for positive and one for negative times.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from . import geometry as geo
from .errors import InputError
from .forest import Graph

# ---------------------------------------------------------------- helpers


def as_graph(forest):
    """Graph view of a TrifurcationForest or Graph."""
    if isinstance(forest, Graph):
        return forest
    if hasattr(forest, "graph"):
        return forest.graph()
    raise InputError("expected a forest or a Graph")


def union_graph(graphs):
    """Disjoint union; vertex ``i`` of graph ``g`` becomes ``offset[g] + i``."""
    graphs = [as_graph(g) for g in graphs]
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    eu = np.concatenate([g.eu + o for g, o in zip(graphs, off)]) if graphs else np.empty(0, np.int64)
    ev = np.concatenate([g.ev + o for g, o in zip(graphs, off)]) if graphs else np.empty(0, np.int64)
    exits = np.concatenate([g.exits for g in graphs]) if graphs else np.empty(0, bool)
    pos = None
    space = graphs[0].space if graphs else None
    if graphs and all(g.positions is not None for g in graphs):
        dim = space.dim if space is not None else 2
        pos = np.concatenate([np.asarray(g.positions, dtype=float).reshape(-1, dim) for g in graphs])
    u = Graph(int(off[-1]), eu.astype(np.int64), ev.astype(np.int64), exits=exits,
              positions=pos, space=space)
    u.offsets = off
    u.owner = np.repeat(np.arange(len(graphs)), sizes)
    return u


def _near_lists(g, reach):
    """For each vertex, the vertices of the same part within ``reach`` (itself included)."""
    owner = getattr(g, "owner", np.zeros(g.n, dtype=np.int64))
    out = [None] * g.n
    for part in np.unique(owner):
        idx = np.flatnonzero(owner == part)
        P = g.positions[idx]
        for a, v in enumerate(idx):
            d = geo.distance(g.space, P[a], P)
            out[v] = idx[d <= reach]
    return out


def _pick(cand, weights, u):
    cum = np.cumsum(weights)
    return int(cand[min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(cand) - 1)])


def _first_exit(paths, exits):
    """Index of the first non-complete vertex along each row (k+1 if none)."""
    hit = exits[paths]
    k1 = paths.shape[1]
    return np.where(hit.any(axis=1), hit.argmax(axis=1), k1)


# ---------------------------------------------------------------- forest walks


@dataclass(eq=False)
class ForestWalk:
    forward: np.ndarray      # w(0), w(1), ..., w(k)
    backward: np.ndarray     # w(0), w(-1), ..., w(-k)
    candidates: np.ndarray
    weights: np.ndarray
    chosen: int
    exit_forward: int = -1   # first n >= 0 at a vertex that is not interior-complete
    exit_backward: int = -1

    @property
    def k(self):
        return len(self.forward) - 1

    def at(self, n):
        return int(self.forward[n] if n >= 0 else self.backward[-n])

    @property
    def path(self):
        """w(-k), ..., w(k)."""
        return np.concatenate([self.backward[::-1], self.forward[1:]])

    def to_jsonl(self):
        return "".join(json.dumps({"n": n, "vertex": self.at(n)}) + "\n"
                       for n in range(-self.k, self.k + 1))


def delayed_walk(graph, start, k, rng, lazy=True):
    g = as_graph(graph)
    u = rng.random((1, int(k)))
    return K.walk_paths(g.indptr, g.indices, np.array([start], dtype=np.int64), u, lazy)[0]


def candidates_near(graph, x, radius=1.0):
    g = as_graph(graph)
    if g.n == 0:
        return np.empty(0, dtype=np.int64)
    d = geo.distance(g.space, np.asarray(x, dtype=float), g.positions)
    return np.flatnonzero(d <= radius)


def two_sided_walk(forest, anchor, k, rng):
    """Two-sided delayed walk started near ``anchor``, or None if no vertex is within 1."""
    if k < 0:
        raise InputError("k must be non-negative")
    g = as_graph(forest)
    cand = candidates_near(g, anchor)
    if len(cand) == 0:
        return None
    w = g.degree[cand] + 1
    v0 = _pick(cand, w, rng.random())
    u = rng.random((2, int(k)))
    p = K.walk_paths(g.indptr, g.indices, np.array([v0, v0], dtype=np.int64), u, True)
    ex = _first_exit(p, g.exits)
    return ForestWalk(p[0], p[1], cand, w, v0,
                      int(ex[0]) if ex[0] <= k else -1, int(ex[1]) if ex[1] <= k else -1)


def one_step_test(graph, vertices, draws, rng):
    """Chi-square test of the delayed one-step law at each vertex.

    Returns per-vertex p-values and a pooled test (sum of statistics
    against the summed degrees of freedom).
    """
    g = as_graph(graph)
    pvals, chi, dof = [], 0.0, 0
    for v in vertices:
        v = int(v)
        d = int(g.degree[v])
        u = rng.random((draws, 1))
        nxt = K.walk_paths(g.indptr, g.indices, np.full(draws, v, dtype=np.int64), u, True)[:, 1]
        targets = np.concatenate([[v], g.neighbors(v)])
        counts = np.array([(nxt == t).sum() for t in targets])
        if counts.sum() != draws:
            raise AssertionError("walk left the neighbourhood")
        if d == 0:
            pvals.append(1.0)
            continue
        res = stats.chisquare(counts)
        pvals.append(float(res.pvalue))
        chi += float(res.statistic)
        dof += d
    pooled = float(stats.chi2.sf(chi, dof)) if dof else 1.0
    return np.array(pvals), pooled


# ---------------------------------------------------------------- stationarity


@dataclass(eq=False)
class StationarityResult:
    ns: np.ndarray
    values: np.ndarray = field(repr=False)     # (walks, 2k+1), -1 where censored
    bins: np.ndarray = field(repr=False)
    hist: np.ndarray = field(repr=False)       # (2k+1, len(bins))
    tv: np.ndarray = field(repr=False)         # pairwise TV among n = 0..k
    reversal_tv: np.ndarray = field(repr=False)
    accepted: int = 0
    attempts: int = 0
    censored_fraction: float = 0.0

    @property
    def max_tv(self):
        return float(self.tv.max()) if self.tv.size else 0.0

    @property
    def max_reversal_tv(self):
        return float(self.reversal_tv.max()) if self.reversal_tv.size else 0.0

    def to_rows(self, name="observable"):
        """(n, observable, bin, count) rows."""
        rows = []
        for i, n in enumerate(self.ns):
            for b, c in zip(self.bins, self.hist[i]):
                rows.append((int(n), name, int(b), int(c)))
        return rows


def _tv(p, q):
    sp, sq = p.sum(), q.sum()
    if sp == 0 or sq == 0:
        return 0.0
    return 0.5 * float(np.abs(p / sp - q / sq).sum())


def _degree_obs(g, verts):
    return g.degree[verts]


def stationarity_diagnostic(forests, rng, n_max=10, walks=5000, observable="degree",
                            anchor="uniform", censor=False, batch=4096):
    """Distribution of an observable along two-sided walks, pooled over an ensemble.

    ``anchor="uniform"`` draws the anchor point uniformly over each window
    (conditioned on a vertex within distance 1, which only discards
    walk-less draws); ``anchor="origin"`` uses the origin of every scene.
    The start is size-biased by acceptance-rejection with weight
    W = sum of deg+1 over the candidates, then picked with weight deg+1.
    """
    g = union_graph(forests)
    if g.n == 0:
        raise InputError("the ensemble holds no forest vertex")
    obs = _degree_obs if observable == "degree" else observable
    c = g.degree + 1
    starts = []
    attempts = 0
    if anchor == "uniform":
        near2 = _near_lists(g, 2.0)
        wcap = max(int(c[n2].sum()) for n2 in near2)
        while len(starts) < walks:
            v = rng.integers(0, g.n, batch)
            x = geo.sample_uniform_balls(g.space, g.positions[v], 1.0, rng)
            ua = rng.random(batch)
            up = rng.random(batch)
            for b in range(batch):
                attempts += 1
                pool = near2[v[b]]
                d = geo.distance(g.space, x[b], g.positions[pool])
                cand = pool[d <= 1.0]
                W = int(c[cand].sum())
                # x is uniform on the union of unit balls once divided by |cand|
                if ua[b] * len(cand) * wcap < W:
                    starts.append(_pick(cand, c[cand], up[b]))
                    if len(starts) == walks:
                        break
    elif anchor == "origin":
        cands = []
        for part in range(len(g.offsets) - 1):
            idx = np.arange(g.offsets[part], g.offsets[part + 1])
            if len(idx):
                d = geo.distance(g.space, g.space.origin, g.positions[idx])
                cands.append(idx[d <= 1.0])
            else:
                cands.append(idx)
        W = np.array([int(c[x].sum()) for x in cands])
        if W.max() == 0:
            raise InputError("no forest vertex within distance 1 of the origin")
        wcap = int(W.max())
        while len(starts) < walks:
            f = rng.integers(0, len(cands), batch)
            ua = rng.random(batch)
            up = rng.random(batch)
            for b in range(batch):
                attempts += 1
                if ua[b] * wcap < W[f[b]]:
                    starts.append(_pick(cands[f[b]], c[cands[f[b]]], up[b]))
                    if len(starts) == walks:
                        break
    else:
        raise InputError(f"unknown anchor mode {anchor!r}")
    starts = np.array(starts, dtype=np.int64)
    k = int(n_max)
    fw = K.walk_paths(g.indptr, g.indices, starts, rng.random((len(starts), k)), True)
    bw = K.walk_paths(g.indptr, g.indices, starts, rng.random((len(starts), k)), True)
    paths = np.concatenate([bw[:, ::-1], fw[:, 1:]], axis=1)
    values = np.asarray(obs(g, paths), dtype=np.int64).reshape(paths.shape)
    cens = np.zeros(paths.shape, dtype=bool)
    ef = _first_exit(fw, g.exits)
    eb = _first_exit(bw, g.exits)
    steps = np.arange(k + 1)
    cens[:, k:] = steps[None, :] > ef[:, None]
    cens[:, :k + 1] = (steps[None, :] > eb[:, None])[:, ::-1]
    censored_fraction = float(cens.any(axis=1).mean())
    if censor:
        values = np.where(cens, -1, values)
    valid = values >= 0
    bins = np.unique(values[valid])
    hist = np.zeros((2 * k + 1, len(bins)), dtype=np.int64)
    for i in range(2 * k + 1):
        col = values[valid[:, i], i]
        hist[i] = np.bincount(np.searchsorted(bins, col), minlength=len(bins))
    pos = hist[k:]
    tv = np.zeros((k + 1, k + 1))
    for a in range(k + 1):
        for b in range(a + 1, k + 1):
            tv[a, b] = tv[b, a] = _tv(pos[a], pos[b])
    rev = np.array([_tv(hist[k + n], hist[k - n]) for n in range(k + 1)])
    return StationarityResult(np.arange(-k, k + 1), values, bins, hist, tv, rev,
                              len(starts), attempts, censored_fraction)


# ---------------------------------------------------------------- escape


@dataclass
class EscapeEstimate:
    p: float
    se: float
    trials: int
    returned: int
    exited: int
    capped: int

    @property
    def censoring_rate(self):
        return self.capped / self.trials if self.trials else 0.0


def escape_probability(graph, vertex, trials, step_cap, rng):
    """Fraction of non-delayed walks from ``vertex`` that never come back.

    A walk escapes when it reaches an exit vertex (the edge of the
    realised forest) or runs ``step_cap`` steps without returning; the
    share ended by the cap is the censoring rate.
    """
    g = as_graph(graph)
    if g.degree[vertex] == 0:
        return EscapeEstimate(0.0, 0.0, int(trials), 0, 0, 0)
    u = rng.random((int(trials), int(step_cap)))
    code = K.escape_runs(g.indptr, g.indices, int(vertex), np.asarray(g.exits, dtype=bool), u)
    ret = int((code == 0).sum())
    ex = int((code == 1).sum())
    cap = int((code == 2).sum())
    p = (ex + cap) / trials
    return EscapeEstimate(p, math.sqrt(p * (1 - p) / trials), int(trials), ret, ex, cap)


# ---------------------------------------------------------------- ambient walks


@dataclass(eq=False)
class AmbientWalk:
    space: geo.SpaceModel
    points: np.ndarray   # (steps + 1, dim), starting at the origin

    @property
    def steps(self):
        return len(self.points) - 1

    def increments(self):
        return geo.distance(self.space, self.points[:-1], self.points[1:])


def ambient_walks(space, walks, steps, rng, L_a=None, max_redraws=1000):
    """Many unit-ball walks from the origin at once: array (walks, steps+1, dim).

    With ``L_a`` set, a step that lands outside B(0, L_a) is drawn again.
    """
    space = geo.space(space)
    if steps < 0:
        raise InputError("steps must be non-negative")
    out = np.empty((int(walks), int(steps) + 1, space.dim))
    out[:, 0] = 0.0
    for t in range(int(steps)):
        cur = out[:, t]
        nxt = geo.sample_uniform_balls(space, cur, 1.0, rng)
        if L_a is not None:
            bad = geo.distance(space, space.origin, nxt) > L_a
            tries = 0
            while bad.any():
                tries += 1
                if tries > max_redraws:
                    raise InputError("walk cannot stay inside the analysis region")
                nxt[bad] = geo.sample_uniform_balls(space, cur[bad], 1.0, rng)
                bad[bad] = geo.distance(space, space.origin, nxt[bad]) > L_a
        out[:, t + 1] = nxt
    return out


def ambient_walk(space, steps, rng, L_a=None):
    space = geo.space(space)
    return AmbientWalk(space, ambient_walks(space, 1, steps, rng, L_a)[0])


@dataclass
class FrequencyEstimate:
    mean: float
    se: float
    per_walk: np.ndarray = field(repr=False)


def component_frequency(scene, component, walks, steps, rng):
    """Share of walk steps spent in ``component``, averaged over walks."""
    pts = ambient_walks(scene.space, walks, steps, rng, L_a=scene.L_a)
    flat = pts[:, 1:].reshape(-1, scene.space.dim)
    cells = scene.raster.locate_many(flat)
    lab = scene.labels(component.phase)
    hit = (cells >= 0) & (lab[np.maximum(cells, 0)] == component.id)
    per = hit.reshape(int(walks), int(steps)).mean(axis=1) if steps else np.zeros(int(walks))
    se = float(per.std(ddof=1) / math.sqrt(len(per))) if len(per) > 1 else 0.0
    return FrequencyEstimate(float(per.mean()) if len(per) else 0.0, se, per)
