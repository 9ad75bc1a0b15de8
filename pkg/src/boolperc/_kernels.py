"""Hot loops, each in two flavours.

Every kernel exists as a numba-compiled loop (``*_nb``) and as a
vectorised numpy/scipy route (``*_np``).  The public names at the bottom
of the module point at one of them, chosen by the ``BOOLPERC_BACKEND``
environment variable ("numba" or "numpy").  When numba is not importable
the numpy route is used regardless.

Inputs are plain arrays so both routes see identical data.  Random
numbers are always drawn by the caller and passed in, which makes the
two routes agree draw-for-draw.
"""
from __future__ import annotations

import heapq
import math
import os

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _requested_backend():
    name = os.environ.get("BOOLPERC_BACKEND", "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"BOOLPERC_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


BACKEND = _requested_backend()

if HAS_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover
    def njit(f):
        return f


def canonical_labels(labels):
    """Relabel so components are numbered by first appearance; -1 stays -1."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, -1, dtype=np.int64)
    keep = labels >= 0
    if not keep.any():
        return out
    vals = labels[keep]
    uniq, first, inv = np.unique(vals, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    out[keep] = rank[inv]
    return out


# ---------------------------------------------------------------- geometry


@njit
def _sep(p, q, hyp):
    # squared chart gap, divided by the conformal factors for the disk
    d2 = 0.0
    for k in range(p.shape[0]):
        t = p[k] - q[k]
        d2 += t * t
    if not hyp:
        return d2
    pp = 0.0
    qq = 0.0
    for k in range(p.shape[0]):
        pp += p[k] * p[k]
        qq += q[k] * q[k]
    return d2 / ((1.0 - pp) * (1.0 - qq))


def separation(p, q, hyp):
    """Vectorised twin of ``_sep``; distance is monotone in this quantity."""
    dx = p - q
    d2 = np.sum(dx * dx, axis=-1)
    if not hyp:
        return d2
    pp = np.sum(p * p, axis=-1)
    qq = np.sum(q * q, axis=-1)
    return d2 / ((1.0 - pp) * (1.0 - qq))


def threshold(r, hyp):
    """Value of ``separation`` at metric distance r."""
    r = np.asarray(r, dtype=float)
    if hyp:
        return np.sinh(r / 2.0) ** 2
    return r * r


def chart_disc(centers, radii, hyp):
    """Euclidean disc in the chart that equals the metric ball."""
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if not hyp:
        return centers, radii
    t = np.tanh(radii / 2.0)
    zz = np.sum(centers * centers, axis=-1)
    den = 1.0 - t * t * zz
    c = centers * ((1.0 - t * t) / den)[..., None]
    R = t * (1.0 - zz) / den
    return c, R


# ------------------------------------------------------------ cell cover


@njit
def cover_polar_nb(ring_rho, ring_off, h, hyp, cell_xy, atom_xy, atom_rho, atom_phi,
                   radii, thr):
    n_cells = cell_xy.shape[0]
    n_rings = ring_rho.shape[0]
    cover = np.full(n_cells, -1, dtype=np.int64)
    two_pi = 2.0 * math.pi
    for a in range(atom_xy.shape[0]):
        ra = atom_rho[a]
        r = radii[a]
        i_lo = int(math.floor((ra - r) / h)) - 1
        i_hi = int(math.floor((ra + r) / h)) + 1
        if i_lo < 0:
            i_lo = 0
        if i_hi > n_rings - 1:
            i_hi = n_rings - 1
        for i in range(i_lo, i_hi + 1):
            rc = ring_rho[i]
            n = ring_off[i + 1] - ring_off[i]
            full = False
            half = 0.0
            if ra < 1e-12 or rc < 1e-12:
                full = True
            else:
                if hyp:
                    c0 = (math.cosh(ra) * math.cosh(rc) - math.cosh(r)) / (
                        math.sinh(ra) * math.sinh(rc))
                else:
                    c0 = (ra * ra + rc * rc - r * r) / (2.0 * ra * rc)
                if c0 > 1.0 + 1e-9:
                    continue
                if c0 <= -1.0:
                    full = True
                else:
                    if c0 > 1.0:
                        c0 = 1.0
                    half = math.acos(c0) + 2.0 * two_pi / n + 1e-9
            if full:
                j_lo = 0
                j_hi = n - 1
            else:
                j_lo = int(math.floor((atom_phi[a] - half) * n / two_pi))
                j_hi = int(math.floor((atom_phi[a] + half) * n / two_pi))
                if j_hi - j_lo + 1 >= n:
                    j_lo = 0
                    j_hi = n - 1
            for jj in range(j_lo, j_hi + 1):
                j = jj % n
                c = ring_off[i] + j
                if cover[c] >= 0:
                    continue
                if _sep(cell_xy[c], atom_xy[a], hyp) <= thr[a]:
                    cover[c] = a
    return cover


@njit
def cover_cartesian_nb(grid, L, h, cell_xy, atom_xy, radii, thr):
    n_cells = cell_xy.shape[0]
    g = grid.shape[0]
    cover = np.full(n_cells, -1, dtype=np.int64)
    for a in range(atom_xy.shape[0]):
        r = radii[a]
        lo = np.empty(3, dtype=np.int64)
        hi = np.empty(3, dtype=np.int64)
        for k in range(3):
            lo[k] = max(0, int(math.floor((atom_xy[a, k] - r + L) / h)) - 1)
            hi[k] = min(g - 1, int(math.floor((atom_xy[a, k] + r + L) / h)) + 1)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    c = grid[i, j, k]
                    if c < 0 or cover[c] >= 0:
                        continue
                    if _sep(cell_xy[c], atom_xy[a], False) <= thr[a]:
                        cover[c] = a
    return cover


def cover_np(cell_xy, atom_xy, radii, thr, hyp, tree=None):
    """Smallest index of a ball containing each cell centre, or -1."""
    n_cells = cell_xy.shape[0]
    cover = np.full(n_cells, np.iinfo(np.int64).max, dtype=np.int64)
    if len(atom_xy):
        tree = cKDTree(cell_xy) if tree is None else tree
        c, R = chart_disc(atom_xy, radii, hyp)
        hits = tree.query_ball_point(c, R * (1 + 1e-9) + 1e-12)
        sizes = np.fromiter((len(x) for x in hits), dtype=np.int64, count=len(hits))
        if sizes.sum():
            cells = np.concatenate([np.asarray(x, dtype=np.int64) for x in hits if len(x)])
            atoms = np.repeat(np.arange(len(atom_xy)), sizes)
            ok = separation(cell_xy[cells], atom_xy[atoms], hyp) <= thr[atoms]
            np.minimum.at(cover, cells[ok], atoms[ok])
    cover[cover == np.iinfo(np.int64).max] = -1
    return cover


# ------------------------------------------------------------ ball graph


@njit
def _push(ei, ej, m, a, b):
    if m == ei.shape[0]:
        ei2 = np.empty(2 * m, dtype=np.int64)
        ej2 = np.empty(2 * m, dtype=np.int64)
        ei2[:m] = ei[:m]
        ej2[:m] = ej[:m]
        ei, ej = ei2, ej2
    ei[m] = a
    ej[m] = b
    return ei, ej, m + 1


@njit
def _pair_thr(s, hyp):
    if hyp:
        t = math.sinh(s / 2.0)
        return t * t
    return s * s


@njit
def _edges_polar(xy, radii, hyp, rho, phi, bstart, band, smax):
    # atoms sorted by (band of width smax in rho, angle)
    n = xy.shape[0]
    nb = bstart.shape[0] - 1
    ei = np.empty(64, dtype=np.int64)
    ej = np.empty(64, dtype=np.int64)
    m = 0
    big = math.sinh(smax) if hyp else smax
    two_pi = 2.0 * math.pi
    for i in range(n):
        # a ball of radius s around a point at radius rho subtends at most
        # asin(sinh s / sinh rho) (asin(s / rho) in the plane) from the origin
        sr = math.sinh(rho[i]) if hyp else rho[i]
        if sr <= big:
            alpha = math.pi
        else:
            alpha = math.asin(big / sr) + 1e-9
        for b2 in range(band[i], min(band[i] + 2, nb)):
            s0 = bstart[b2]
            s1 = bstart[b2 + 1]
            if alpha >= math.pi:
                lo1, hi1, lo2, hi2 = s0, s1, s1, s1
            else:
                a = phi[i] - alpha
                b = phi[i] + alpha
                seg = phi[s0:s1]
                if a < 0.0:
                    lo1 = s0 + np.searchsorted(seg, a + two_pi)
                    hi1 = s1
                    lo2 = s0
                    hi2 = s0 + np.searchsorted(seg, b, side="right")
                elif b >= two_pi:
                    lo1 = s0 + np.searchsorted(seg, a)
                    hi1 = s1
                    lo2 = s0
                    hi2 = s0 + np.searchsorted(seg, b - two_pi, side="right")
                else:
                    lo1 = s0 + np.searchsorted(seg, a)
                    hi1 = s0 + np.searchsorted(seg, b, side="right")
                    lo2, hi2 = s1, s1
                if lo2 < hi2 and lo2 < hi1 and lo1 < hi2:
                    # the two arcs overlap: scan the segment once
                    lo1, hi1, lo2, hi2 = s0, s1, s1, s1
            for (lo, hi) in ((lo1, hi1), (lo2, hi2)):
                for j in range(lo, hi):
                    if j <= i:
                        continue
                    if _sep(xy[i], xy[j], hyp) <= _pair_thr(radii[i] + radii[j], hyp):
                        ei, ej, m = _push(ei, ej, m, i, j)
    return ei[:m].copy(), ej[:m].copy()


@njit
def _edges_grid(xy, radii, keys, cells, G):
    # atoms sorted by the linear key of their cube of side smax
    n = xy.shape[0]
    ei = np.empty(64, dtype=np.int64)
    ej = np.empty(64, dtype=np.int64)
    m = 0
    for i in range(n):
        cx, cy, cz = cells[i, 0], cells[i, 1], cells[i, 2]
        for dx in range(-1, 2):
            for dy in range(-1, 2):
                for dz in range(-1, 2):
                    x, y, z = cx + dx, cy + dy, cz + dz
                    if x < 0 or y < 0 or z < 0 or x >= G or y >= G or z >= G:
                        continue
                    k = (x * G + y) * G + z
                    lo = np.searchsorted(keys, k)
                    hi = np.searchsorted(keys, k, side="right")
                    for j in range(max(lo, i + 1), hi):
                        if _sep(xy[i], xy[j], False) <= _pair_thr(radii[i] + radii[j], False):
                            ei, ej, m = _push(ei, ej, m, i, j)
    return ei[:m].copy(), ej[:m].copy()


def ball_edges_nb(xy, radii, hyp):
    """Intersecting pairs through a spatial index; candidates lie within 2 max radius."""
    n = len(xy)
    if n < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    xy = np.ascontiguousarray(xy, dtype=float)
    radii = np.ascontiguousarray(radii, dtype=float)
    smax = 2.0 * float(radii.max())
    if xy.shape[1] == 2:
        nrm = np.sqrt(np.einsum("ij,ij->i", xy, xy))
        rho = 2.0 * np.arctanh(np.minimum(nrm, 1 - 1e-16)) if hyp else nrm
        phi = np.arctan2(xy[:, 1], xy[:, 0]) % (2 * math.pi)
        band = np.floor(rho / smax).astype(np.int64)
        order = np.lexsort((phi, band))
        bs = band[order]
        bstart = np.searchsorted(bs, np.arange(int(bs[-1]) + 2)).astype(np.int64)
        a, b = _edges_polar(xy[order], radii[order], hyp, rho[order], phi[order],
                            bstart, bs, smax)
    else:
        lo = xy.min(axis=0)
        cells = np.floor((xy - lo) / smax).astype(np.int64)
        G = int(cells.max()) + 1
        keys = (cells[:, 0] * G + cells[:, 1]) * G + cells[:, 2]
        order = np.argsort(keys, kind="stable")
        a, b = _edges_grid(xy[order], radii[order], keys[order],
                           np.ascontiguousarray(cells[order]), G)
    a, b = order[a], order[b]
    ei, ej = np.minimum(a, b), np.maximum(a, b)
    o = np.lexsort((ej, ei))
    return ei[o], ej[o]


def ball_edges_np(xy, radii, hyp):
    n = len(xy)
    if n < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    tree = cKDTree(xy)
    rmax = float(np.max(radii))
    c, R = chart_disc(xy, radii + rmax, hyp)
    hits = tree.query_ball_point(c, R * (1 + 1e-9) + 1e-12)
    sizes = np.fromiter((len(x) for x in hits), dtype=np.int64, count=n)
    ej = np.concatenate([np.asarray(x, dtype=np.int64) for x in hits])
    ei = np.repeat(np.arange(n), sizes)
    keep = ej > ei
    ei, ej = ei[keep], ej[keep]
    s = radii[ei] + radii[ej]
    thr = np.sinh(s / 2.0) ** 2 if hyp else s * s
    ok = separation(xy[ei], xy[ej], hyp) <= thr
    ei, ej = ei[ok], ej[ok]
    order = np.lexsort((ej, ei))
    return ei[order], ej[order]


# ------------------------------------------------------------ union-find


@njit
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit
def components_nb(n, ei, ej):
    parent = np.arange(n)
    for k in range(ei.shape[0]):
        a = _find(parent, ei[k])
        b = _find(parent, ej[k])
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    out = np.empty(n, dtype=np.int64)
    remap = np.full(n, -1, dtype=np.int64)
    nxt = 0
    for v in range(n):
        r = _find(parent, v)
        if remap[r] < 0:
            remap[r] = nxt
            nxt += 1
        out[v] = remap[r]
    return out


def components_np(n, ei, ej):
    if n == 0:
        return np.empty(0, dtype=np.int64)
    g = sparse.coo_matrix((np.ones(len(ei)), (ei, ej)), shape=(n, n)).tocsr()
    _, lab = csgraph.connected_components(g, directed=False)
    return canonical_labels(lab)


# ------------------------------------------------------------ flood fill


@njit
def label_masked_nb(indptr, indices, mask, group):
    n = mask.shape[0]
    lab = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    nxt = 0
    for s in range(n):
        if not mask[s] or lab[s] >= 0:
            continue
        lab[s] = nxt
        head = 0
        tail = 1
        queue[0] = s
        g = group[s]
        while head < tail:
            v = queue[head]
            head += 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if mask[w] and lab[w] < 0 and group[w] == g:
                    lab[w] = nxt
                    queue[tail] = w
                    tail += 1
        nxt += 1
    return lab


def label_masked_np(indptr, indices, mask, group):
    n = mask.shape[0]
    rows = np.repeat(np.arange(n), np.diff(indptr))
    keep = mask[rows] & mask[indices] & (group[rows] == group[indices])
    g = sparse.coo_matrix((np.ones(int(keep.sum())), (rows[keep], indices[keep])),
                          shape=(n, n)).tocsr()
    _, lab = csgraph.connected_components(g, directed=False)
    lab = np.where(mask, lab, -1)
    return canonical_labels(lab)


# ------------------------------------------------------------ shortest paths


@njit
def dijkstra_nb(indptr, indices, weights, mask, sources, cutoff):
    n = mask.shape[0]
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for s in sources:
        if mask[s] and dist[s] > 0.0:
            dist[s] = 0.0
            heap.append((0.0, np.int64(s)))
    heapq.heapify(heap)
    while len(heap) > 0:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for p in range(indptr[v], indptr[v + 1]):
            w = indices[p]
            if not mask[w] or done[w]:
                continue
            nd = d + weights[p]
            if nd <= cutoff and nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, np.int64(w)))
    return dist


def dijkstra_np(indptr, indices, weights, mask, sources, cutoff):
    n = mask.shape[0]
    sources = np.asarray(sources, dtype=np.int64)
    sources = sources[mask[sources]]
    if len(sources) == 0:
        return np.full(n, np.inf)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    keep = mask[rows] & mask[indices]
    g = sparse.csr_matrix((weights[keep], (rows[keep], indices[keep])), shape=(n, n))
    limit = np.inf if not np.isfinite(cutoff) else cutoff
    dist = csgraph.dijkstra(g, directed=True, indices=sources, min_only=True, limit=limit)
    dist = np.asarray(dist, dtype=float)
    dist[dist > cutoff] = np.inf
    return dist


# ------------------------------------------------------------ walks


@njit
def walk_paths_nb(indptr, indices, starts, u, lazy):
    m, k = u.shape
    out = np.empty((m, k + 1), dtype=np.int64)
    for w in range(m):
        v = starts[w]
        out[w, 0] = v
        for t in range(k):
            deg = indptr[v + 1] - indptr[v]
            if lazy:
                c = int(math.floor(u[w, t] * (deg + 1)))
                if c > deg:
                    c = deg
                if c > 0:
                    v = indices[indptr[v] + c - 1]
            elif deg > 0:
                c = int(math.floor(u[w, t] * deg))
                if c >= deg:
                    c = deg - 1
                v = indices[indptr[v] + c]
            out[w, t + 1] = v
    return out


def walk_paths_np(indptr, indices, starts, u, lazy):
    m, k = u.shape
    out = np.empty((m, k + 1), dtype=np.int64)
    v = np.asarray(starts, dtype=np.int64).copy()
    out[:, 0] = v
    for t in range(k):
        deg = indptr[v + 1] - indptr[v]
        if lazy:
            c = np.minimum(np.floor(u[:, t] * (deg + 1)).astype(np.int64), deg)
            move = c > 0
            v = np.where(move, indices[np.where(move, indptr[v] + c - 1, 0)], v)
        else:
            c = np.minimum(np.floor(u[:, t] * deg).astype(np.int64), np.maximum(deg - 1, 0))
            move = deg > 0
            v = np.where(move, indices[np.where(move, indptr[v] + c, 0)], v)
        out[:, t + 1] = v
    return out


@njit
def escape_runs_nb(indptr, indices, start, exit_mask, u):
    # 0 = came back, 1 = reached an exit vertex, 2 = ran out of steps
    m, k = u.shape
    code = np.full(m, 2, dtype=np.int64)
    for w in range(m):
        v = start
        for t in range(k):
            deg = indptr[v + 1] - indptr[v]
            if deg == 0:
                break
            c = int(math.floor(u[w, t] * deg))
            if c >= deg:
                c = deg - 1
            v = indices[indptr[v] + c]
            if v == start:
                code[w] = 0
                break
            if exit_mask[v]:
                code[w] = 1
                break
    return code


def escape_runs_np(indptr, indices, start, exit_mask, u):
    m, k = u.shape
    code = np.full(m, 2, dtype=np.int64)
    v = np.full(m, start, dtype=np.int64)
    live = np.ones(m, dtype=bool)
    for t in range(k):
        if not live.any():
            break
        deg = indptr[v + 1] - indptr[v]
        stuck = live & (deg == 0)
        live &= ~stuck
        c = np.minimum(np.floor(u[:, t] * deg).astype(np.int64), np.maximum(deg - 1, 0))
        nv = indices[np.where(live, indptr[v] + c, 0)]
        v = np.where(live, nv, v)
        back = live & (v == start)
        code[back] = 0
        live &= ~back
        out = live & exit_mask[v]
        code[out] = 1
        live &= ~out
    return code


# ------------------------------------------------------------ dispatch

if BACKEND == "numba":
    cover_polar = cover_polar_nb
    cover_cartesian = cover_cartesian_nb
    ball_edges = ball_edges_nb
    components = components_nb
    label_masked = label_masked_nb
    dijkstra = dijkstra_nb
    walk_paths = walk_paths_nb
    escape_runs = escape_runs_nb
else:
    cover_polar = None
    cover_cartesian = None
    ball_edges = ball_edges_np
    components = components_np
    label_masked = label_masked_np
    dijkstra = dijkstra_np
    walk_paths = walk_paths_np
    escape_runs = escape_runs_np
