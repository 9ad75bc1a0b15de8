"""Realised Boolean model in a window: ball graph, raster, components.

Connectivity is taken inside the analysis region B(0, L_a): two points
are joined when a path in the phase links them without leaving it.
Occupied cells are flood filled within one ball-graph component and then
bridged wherever two balls overlap inside the region, so the labelling
refines the ball graph and agrees with it away from the rim.  Vacant
cells are a plain flood fill.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels as K
from . import geometry as geo
from . import process as pr
from .errors import ConfigError, InputError
from .raster import get_raster

OCCUPIED = "occupied"
VACANT = "vacant"
PHASES = (OCCUPIED, VACANT)


def _phase(phase):
    p = str(phase).lower()
    if p in ("o", "occ", OCCUPIED):
        return OCCUPIED
    if p in ("v", "vac", VACANT):
        return VACANT
    raise InputError(f"unknown phase {phase!r}")


@dataclass(frozen=True)
class ComponentRef:
    phase: str
    id: int
    boundary: bool
    cell_count: int
    balls: tuple = ()


def cover_cells(raster, omega):
    """Smallest index of an atom whose closed ball holds each cell centre."""
    sp = raster.space
    n = len(omega)
    if n == 0:
        return np.full(raster.n, -1, dtype=np.int64)
    thr = K.threshold(omega.radii, sp.hyperbolic)
    backend = K.BACKEND
    if backend == "numba" and sp.dim == 2:
        rho = omega.norms()
        phi = np.arctan2(omega.points[:, 1], omega.points[:, 0])
        return K.cover_polar_nb(raster.ring_rho, raster.ring_off, raster.h, sp.hyperbolic,
                                raster.xy, omega.points, rho, phi, omega.radii, thr)
    if backend == "numba":
        return K.cover_cartesian_nb(raster.grid, raster.L_a, raster.h, raster.xy,
                                    omega.points, omega.radii, thr)
    return K.cover_np(raster.xy, omega.points, omega.radii, thr, sp.hyperbolic, raster.kdtree())


def check_resolution(h, min_radius):
    if min_radius is not None and h > min_radius / 4 + 1e-12:
        raise ConfigError(f"raster step h={h} exceeds min_radius/4={min_radius / 4}; "
                          "refine h or raise the smallest radius")


class Scene:
    def __init__(self, space, omega, L, L_a, h, *, min_radius=None, _parts=None):
        space = geo.space(space)
        if omega.space != space:
            raise InputError("measure lives in a different space")
        if not 0 < L_a <= L:
            raise ConfigError("need 0 < L_a <= L")
        if space.hyperbolic and L > geo.H2_MAX_RADIUS:
            raise ConfigError(f"disk windows are capped at radius {geo.H2_MAX_RADIUS}")
        if min_radius is None and omega.radius_law:
            min_radius = pr.parse_radius_law(omega.radius_law).min_radius
        if min_radius is None and len(omega):
            min_radius = float(omega.radii.min())
        check_resolution(h, min_radius)
        if len(omega) and float(omega.norms().max()) > L * (1 + 1e-12):
            raise InputError("atoms outside the window B(0, L)")
        self.space = space
        self.omega = omega
        self.L, self.L_a, self.h = float(L), float(L_a), float(h)
        self.raster = get_raster(space, L_a, h)
        if _parts is None:
            self.cover = cover_cells(self.raster, omega)
            pts = np.ascontiguousarray(omega.points)
            self.edges = K.ball_edges(pts, np.ascontiguousarray(omega.radii), space.hyperbolic)
            self.ball_labels = K.components(len(omega), *self.edges)
        else:
            self.cover, self.edges, self.ball_labels = _parts
        self.occupied = self.cover >= 0

    # ------------------------------------------------------------ labels

    @cached_property
    def ball_group(self):
        """Ball-graph component of the ball covering each cell (-1 if vacant)."""
        g = np.full(self.raster.n, -1, dtype=np.int64)
        g[self.occupied] = self.ball_labels[self.cover[self.occupied]]
        return g

    @cached_property
    def occ_labels(self):
        """Occupied cells joined inside the window.

        Raster flood fill that never leaves a ball-graph component, plus a
        bridge for every pair of intersecting balls whose overlap reaches
        into the analysis region, so thin lenses missed by cell centres
        still connect.  Links that exist only through the halo are not used.
        """
        r = self.raster
        lab = K.label_masked(r.indptr, r.indices, self.occupied, self.ball_group)
        pairs = _bridge_pairs(self, lab)
        if len(pairs):
            m = int(lab.max()) + 1
            merged = K.components(m, pairs[:, 0], pairs[:, 1])
            lab = np.where(lab >= 0, merged[np.maximum(lab, 0)], -1)
            lab = K.canonical_labels(lab)
        return lab

    @cached_property
    def vac_labels(self):
        r = self.raster
        return K.label_masked(r.indptr, r.indices, ~self.occupied,
                              np.zeros(r.n, dtype=np.int64))

    def labels(self, phase):
        return self.occ_labels if _phase(phase) == OCCUPIED else self.vac_labels

    def phase_mask(self, phase):
        return self.occupied if _phase(phase) == OCCUPIED else ~self.occupied

    def group(self, phase):
        """Cells may only join when they share this value (ball component for O)."""
        if _phase(phase) == OCCUPIED:
            return self.ball_group
        return np.zeros(self.raster.n, dtype=np.int64)

    @cached_property
    def _summary(self):
        out = {}
        b = self.raster.boundary
        for ph in PHASES:
            lab = self.labels(ph)
            m = lab >= 0
            size = int(lab.max()) + 1 if m.any() else 0
            counts = np.bincount(lab[m], minlength=size)
            bnd = np.zeros(size, dtype=bool)
            bnd[np.unique(lab[m & b])] = True
            out[ph] = (counts, bnd)
        return out

    def component(self, phase, cid):
        phase = _phase(phase)
        counts, bnd = self._summary[phase]
        if not 0 <= cid < len(counts):
            raise InputError(f"no {phase} component {cid}")
        balls = ()
        if phase == OCCUPIED:
            cells = self.occ_labels == cid
            balls = tuple(int(i) for i in np.unique(self.cover[cells]))
        return ComponentRef(phase, int(cid), bool(bnd[cid]), int(counts[cid]), balls)

    def components(self, phase, boundary_only=False):
        """Components with at least one cell in the analysis region."""
        phase = _phase(phase)
        counts, bnd = self._summary[phase]
        ids = np.flatnonzero(counts > 0)
        if boundary_only:
            ids = ids[bnd[ids]]
        return [self.component(phase, int(i)) for i in ids]

    def cells(self, comp):
        return np.flatnonzero(self.labels(comp.phase) == comp.id)

    # ------------------------------------------------------------ point queries

    def in_phase(self, x, phase):
        x = np.asarray(x, dtype=float)
        covered = False
        if len(self.omega):
            d = geo.distance(self.space, x, self.omega.points)
            covered = bool(np.any(d <= self.omega.radii))
        return covered if _phase(phase) == OCCUPIED else not covered

    def cell_of(self, x, phase):
        """A raster cell of the given phase standing in for x, or -1."""
        phase = _phase(phase)
        if not self.in_phase(x, phase):
            return -1
        c = self.raster.locate(x)
        if c < 0:
            return -1
        mask = self.phase_mask(phase)
        if phase == OCCUPIED:
            d = geo.distance(self.space, np.asarray(x, dtype=float), self.omega.points)
            comp = self.ball_labels[int(np.flatnonzero(d <= self.omega.radii)[0])]
            ok = mask & (self.ball_group == comp)
        else:
            ok = mask
        if ok[c]:
            return c
        r = self.raster
        nb = r.indices[r.indptr[c]:r.indptr[c + 1]]
        nb = nb[ok[nb]]
        if len(nb) == 0:
            return -1
        d = geo.distance(self.space, np.asarray(x, dtype=float), r.xy[nb])
        return int(nb[np.argmin(d)])

    def component_of(self, x, phase):
        phase = _phase(phase)
        if not self.in_phase(x, phase):
            return None
        c = self.cell_of(x, phase)
        if c < 0:
            return None
        return self.component(phase, int(self.labels(phase)[c]))

    def local_component(self, x, r, phase):
        """Cells of the piece of S inside B(x, r) that contains x."""
        phase = _phase(phase)
        start = self.cell_of(x, phase)
        if start < 0:
            return np.empty(0, dtype=np.int64)
        ball = self.raster.cells_in_ball(x, r)
        mask = np.zeros(self.raster.n, dtype=bool)
        mask[ball] = True
        mask &= self.phase_mask(phase)
        if not mask[start]:
            return np.empty(0, dtype=np.int64)
        return flood_from(self.raster, mask, self.group(phase), start)

    def count_components_in_ball(self, center, rho, phase):
        phase = _phase(phase)
        mask = np.zeros(self.raster.n, dtype=bool)
        mask[self.raster.cells_in_ball(center, rho)] = True
        mask &= self.phase_mask(phase)
        if not mask.any():
            return 0
        r = self.raster
        lab = K.label_masked(r.indptr, r.indices, mask, self.group(phase))
        return int(lab.max()) + 1

    def intrinsic_distance(self, phase, a, b):
        phase = _phase(phase)
        ca, cb = self.cell_of(a, phase), self.cell_of(b, phase)
        if ca < 0 or cb < 0:
            raise InputError("point not in the requested phase")
        lab = self.labels(phase)
        if lab[ca] != lab[cb]:
            return math.inf
        dist = self.distances_from(phase, [ca], lab == lab[ca])
        if not np.isfinite(dist[cb]):
            return math.inf
        xy = self.raster.xy
        return float(dist[cb] + geo.distance(self.space, a, xy[ca]) + geo.distance(self.space, xy[cb], b))

    def distances_from(self, phase, sources, mask=None, cutoff=math.inf):
        """Shortest-path lengths over same-phase cells from a set of source cells."""
        indptr, indices, w = self.raster.metric_graph()
        if mask is None:
            mask = self.phase_mask(phase)
        return K.dijkstra(indptr, indices, w, mask, np.asarray(sources, dtype=np.int64), float(cutoff))

    # ------------------------------------------------------------ modification

    def with_inserted_atom(self, x, radius, label):
        """Scene of omega + one atom, updated locally.

        The new atom takes the last index, so cells it covers that were
        already covered keep their smaller index, as a rebuild would.
        """
        omega = pr.insert_atom(self.omega, x, radius, label)
        k = len(omega) - 1
        cover = self.cover.copy()
        cells = self.raster.cells_in_ball(x, radius)
        cells = cells[cover[cells] < 0]
        cover[cells] = k
        if k:
            d = geo.distance(self.space, np.asarray(x, dtype=float), self.omega.points)
            hit = np.flatnonzero(d <= self.omega.radii + radius)
        else:
            hit = np.empty(0, dtype=np.int64)
        ei = np.concatenate([self.edges[0], hit])
        ej = np.concatenate([self.edges[1], np.full(len(hit), k, dtype=np.int64)])
        labels = K.components(len(omega), ei, ej)
        return Scene(self.space, omega, self.L, self.L_a, self.h,
                     _parts=(cover, (ei, ej), labels))

    # ------------------------------------------------------------ export

    @cached_property
    def digest(self):
        h = hashlib.sha256()
        h.update(f"{self.space.kind}|{self.L!r}|{self.L_a!r}|{self.h!r}".encode())
        for a in (self.omega.points, self.omega.radii, self.omega.labels):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def summary_records(self):
        recs = []
        for ph in PHASES:
            for c in self.components(ph):
                recs.append({"phase": ph, "id": c.id, "cells": c.cell_count,
                             "boundary": c.boundary})
        return recs

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.summary_records())

    def rle_dump(self):
        """Run-length text of the phase along cell order, for debugging."""
        occ = self.occupied.astype(np.int8)
        if len(occ) == 0:
            return ""
        change = np.flatnonzero(np.diff(occ)) + 1
        starts = np.concatenate([[0], change])
        lens = np.diff(np.concatenate([starts, [len(occ)]]))
        return " ".join(f"{'O' if occ[s] else 'V'}{n}" for s, n in zip(starts, lens)) + "\n"


def overlap_points(space, a, b, ra, rb):
    """A point of B(a, ra) and B(b, rb) on the geodesic between the centres."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    ra = np.asarray(ra, dtype=float)
    rb = np.asarray(rb, dtype=float)
    if space.hyperbolic:
        za = a[:, 0] + 1j * a[:, 1]
        zb = b[:, 0] + 1j * b[:, 1]
        w = (zb - za) / (1 - np.conj(za) * zb)      # b seen from a at the origin
        d = 2 * np.arctanh(np.minimum(np.abs(w), geo.CHART_EDGE))
        s = np.clip((d + ra - rb) / 2, 0, d)
        u = np.where(np.abs(w) > 0, w / np.maximum(np.abs(w), 1e-300), 1)
        q = u * np.tanh(s / 2)
        z = (q + za) / (1 + np.conj(za) * q)
        return geo.clamp(space, np.stack([z.real, z.imag], axis=1))
    v = b - a
    d = np.linalg.norm(v, axis=1)
    s = np.clip((d + ra - rb) / 2, 0, d)
    f = np.where(d > 0, s / np.maximum(d, 1e-300), 0)
    return a + v * f[:, None]


def _bridge_pairs(scene, lab):
    """Label pairs joined by a ball overlap that lies inside the analysis region."""
    none = np.empty((0, 2), dtype=np.int64)
    ei, ej = scene.edges
    if len(ei) == 0:
        return none
    om = scene.omega
    p = overlap_points(scene.space, om.points[ei], om.points[ej], om.radii[ei], om.radii[ej])
    r = scene.raster
    cells = r.locate_many(p)
    ok = cells >= 0
    if not ok.any():
        return none
    cells, grp = cells[ok], scene.ball_labels[ei[ok]]
    # each overlap cell together with its raster neighbours
    deg = r.indptr[cells + 1] - r.indptr[cells]
    owner = np.concatenate([np.arange(len(cells)), np.repeat(np.arange(len(cells)), deg)])
    pos = np.repeat(r.indptr[cells] - np.cumsum(np.concatenate([[0], deg[:-1]])), deg) + np.arange(deg.sum())
    cand = np.concatenate([cells, r.indices[pos]])
    keep = scene.ball_group[cand] == grp[owner]
    owner, cand = owner[keep], cand[keep]
    if len(cand) == 0:
        return none
    ls = lab[cand]
    rep = np.full(len(cells), np.iinfo(np.int64).max)
    np.minimum.at(rep, owner, ls)
    pairs = np.stack([rep[owner], ls], axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return np.unique(pairs, axis=0)


def flood_from(raster, mask, group, start):
    """Cells reachable from ``start`` inside ``mask`` without changing group."""
    lab = K.label_masked(raster.indptr, raster.indices, mask, group)
    return np.flatnonzero(lab == lab[start])


def build_scene(space, omega, L, L_a, h, **kw):
    return Scene(space, omega, L, L_a, h, **kw)
