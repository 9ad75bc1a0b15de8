"""Metric-aware rasters of a centred ball.

2D spaces use a geodesic polar grid: rings of metric width h, each cut
into cells of arc length about h (arc length is rho dphi in the plane and
sinh(rho) dphi on the disk).  E3 uses a Cartesian grid of side h.  Cells
are numbered ring by ring; adjacency is stored as CSR arrays with the
metric distance between cell centres as edge weight.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from ._kernels import chart_disc


def _disc(space, xy, r):
    return chart_disc(xy, np.full(len(xy), r), space.hyperbolic)


class Raster:
    def __init__(self, space, L_a, h):
        self.space = space
        self.L_a = float(L_a)
        self.h = float(h)
        if space.dim == 2:
            self._build_polar()
        else:
            self._build_cartesian()
        self.rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        self.weights = geo.distance(space, self.xy[self.rows], self.xy[self.indices])
        self.boundary = self.rho > self.L_a - self.h
        for a in ("xy", "rho", "indptr", "indices", "weights", "boundary", "rows"):
            getattr(self, a).setflags(write=False)

    @property
    def n(self):
        return len(self.xy)

    # ------------------------------------------------------------ polar

    def _build_polar(self):
        h, L = self.h, self.L_a
        n_r = max(1, int(math.ceil(L / h - 1e-9)))
        inner = np.arange(n_r) * h
        outer = np.minimum(inner + h, L)
        rc = 0.5 * (inner + outer)
        circ = np.sinh(rc) if self.space.hyperbolic else rc
        counts = np.maximum(3, np.ceil(2 * math.pi * circ / h - 1e-9).astype(np.int64))
        off = np.concatenate([[0], np.cumsum(counts)])
        ring = np.repeat(np.arange(n_r), counts)
        j = np.arange(off[-1]) - off[ring]
        phi = (j + 0.5) * 2 * math.pi / counts[ring]
        rho = rc[ring]
        cr = geo.chart_radius(self.space, rho)
        self.xy = geo.clamp(self.space, np.stack([cr * np.cos(phi), cr * np.sin(phi)], axis=1))
        self.rho = rho
        self.phi = phi
        self.ring = ring
        self.ring_rho = rc
        self.ring_off = off
        self.ring_counts = counts
        # within a ring
        src = [np.arange(off[-1])]
        dst = [off[ring] + (j + 1) % counts[ring]]
        # ring 0 cells all meet at the centre
        n0 = counts[0]
        a, b = np.meshgrid(np.arange(n0), np.arange(n0), indexing="ij")
        keep = a != b
        src.append(a[keep].ravel())
        dst.append(b[keep].ravel())
        # between ring i and i+1: overlapping angular intervals
        for i in range(n_r - 1):
            n1, n2 = counts[i], counts[i + 1]
            jj = np.arange(n1)
            lo = (jj * n2) // n1
            hi = ((jj + 1) * n2 - 1) // n1
            width = hi - lo + 1
            s = np.repeat(jj, width)
            k = np.concatenate([np.arange(l, u + 1) for l, u in zip(lo, hi)]) if n1 else s
            src.append(off[i] + s)
            dst.append(off[i + 1] + k % n2)
        self._to_csr(np.concatenate(src), np.concatenate(dst))

    # ------------------------------------------------------------ cartesian

    def _build_cartesian(self):
        h, L = self.h, self.L_a
        g = int(math.ceil(2 * L / h - 1e-9))
        ax = -L + (np.arange(g) + 0.5) * h
        X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        r = np.linalg.norm(pts, axis=1)
        inside = r <= L
        grid = np.full(g ** 3, -1, dtype=np.int64)
        grid[inside] = np.arange(int(inside.sum()))
        grid = grid.reshape(g, g, g)
        self.grid = grid
        self.xy = pts[inside]
        self.rho = r[inside]
        src, dst = [], []
        idx = np.argwhere(grid >= 0)
        for d in range(3):
            step = np.zeros(3, dtype=np.int64)
            step[d] = 1
            nb = idx + step
            ok = nb[:, d] < g
            a = grid[tuple(idx[ok].T)]
            b = grid[tuple(nb[ok].T)]
            good = b >= 0
            src.append(a[good])
            dst.append(b[good])
        self._to_csr(np.concatenate(src), np.concatenate(dst))

    # ------------------------------------------------------------ shared

    def _to_csr(self, s, d):
        s, d = np.concatenate([s, d]), np.concatenate([d, s])
        pairs = np.unique(np.stack([s, d], axis=1), axis=0)
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        self.indices = pairs[:, 1].astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(pairs[:, 0], minlength=len(self.xy)))]).astype(np.int64)

    def locate(self, x):
        """Index of the cell containing x, or -1 outside the raster."""
        x = np.asarray(x, dtype=float)
        t = float(geo.distance(self.space, self.space.origin, x))
        if t > self.L_a:
            return -1
        if self.space.dim == 3:
            i = np.minimum(np.floor((x + self.L_a) / self.h).astype(int), self.grid.shape[0] - 1)
            return int(self.grid[tuple(i)])
        i = min(int(t // self.h), len(self.ring_rho) - 1)
        n = self.ring_counts[i]
        phi = math.atan2(x[1], x[0]) % (2 * math.pi)
        j = min(int(phi * n / (2 * math.pi)), n - 1)
        return int(self.ring_off[i] + j)

    def locate_many(self, pts):
        """Vectorised ``locate`` for an (m, dim) array."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(pts) == 0:
            return np.empty(0, dtype=np.int64)
        t = geo.distance(self.space, self.space.origin, pts)
        out = np.full(len(pts), -1, dtype=np.int64)
        ok = t <= self.L_a
        if self.space.dim == 3:
            i = np.minimum(np.floor((pts[ok] + self.L_a) / self.h).astype(np.int64),
                           self.grid.shape[0] - 1)
            out[ok] = self.grid[i[:, 0], i[:, 1], i[:, 2]]
            return out
        ring = np.minimum((t[ok] // self.h).astype(np.int64), len(self.ring_rho) - 1)
        n = self.ring_counts[ring]
        phi = np.arctan2(pts[ok, 1], pts[ok, 0]) % (2 * math.pi)
        j = np.minimum((phi * n / (2 * math.pi)).astype(np.int64), n - 1)
        out[ok] = self.ring_off[ring] + j
        return out

    def candidate_range(self, center, r):
        """Cells that may lie in B(center, r): a slice for polar rasters."""
        if self.space.dim == 3:
            return np.arange(self.n)
        t = float(geo.distance(self.space, self.space.origin, center))
        lo = max(0, int((t - r) // self.h) - 1)
        hi = min(len(self.ring_rho) - 1, int((t + r) // self.h) + 1)
        if lo > hi:
            return np.arange(0)
        return np.arange(self.ring_off[lo], self.ring_off[hi + 1])

    def cells_in_ball(self, center, r):
        cand = self.candidate_range(center, r)
        if len(cand) == 0:
            return cand
        d = geo.distance(self.space, np.asarray(center, dtype=float), self.xy[cand])
        return cand[d <= r]

    def kdtree(self):
        if getattr(self, "_tree", None) is None:
            self._tree = cKDTree(self.xy)
        return self._tree

    def metric_graph(self):
        """Cells joined to every cell within 2.5 h, weighted by distance.

        Used for shortest paths: the extra chords keep raster path lengths
        within a few percent of straight-line distance in every direction.
        """
        if getattr(self, "_mgraph", None) is None:
            reach = 2.5 * self.h
            c, R = _disc(self.space, self.xy, reach)
            hits = self.kdtree().query_ball_point(c, R * (1 + 1e-9) + 1e-12)
            sizes = np.fromiter((len(x) for x in hits), dtype=np.int64, count=self.n)
            dst = np.concatenate([np.asarray(x, dtype=np.int64) for x in hits])
            src = np.repeat(np.arange(self.n), sizes)
            keep = src != dst
            src, dst = src[keep], dst[keep]
            w = geo.distance(self.space, self.xy[src], self.xy[dst])
            ok = w <= reach
            src, dst, w = src[ok], dst[ok], w[ok]
            order = np.lexsort((dst, src))
            src, dst, w = src[order], dst[order], w[order]
            indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=self.n))])
            self._mgraph = (indptr.astype(np.int64), dst, w)
        return self._mgraph

    def ball_mask(self, center, r):
        m = np.zeros(self.n, dtype=bool)
        m[self.cells_in_ball(center, r)] = True
        return m


@lru_cache(maxsize=16)
def _cached(kind, L_a, h):
    return Raster(geo.SpaceModel(kind), L_a, h)


def get_raster(space, L_a, h):
    return _cached(space.kind, float(L_a), float(h))
