"""Monte-Carlo experiments on Boolean models.

Every experiment is a pure function of a ``ModelConfig``, a master seed
and a list of replica indices.  Randomness comes from named streams, so
records are reproducible bit for bit and independent of how replicas are
spread over worker threads.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import forest as fo
from . import geometry as geo
from . import process as pr
from . import walks as wk
from .errors import ConfigError, InputError, InvariantViolation
from .rng import stream
from .scene import OCCUPIED, VACANT, Scene, _phase

# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ModelConfig:
    space: str = "E2"
    intensity: float = 1.0
    radius_law: str = "constant:1.0"
    L_a: float = 10.0
    h: float = 0.25
    r: float = 1.5
    halo: float | None = None        # default: max radius + 2 r
    y_intensity: float = 1.0
    z_intensity: float = 1.0
    phase: str = OCCUPIED

    @property
    def law(self):
        return pr.parse_radius_law(self.radius_law)

    @property
    def sp(self):
        return geo.space(self.space)

    @property
    def halo_(self):
        return self.law.max_radius + 2 * self.r if self.halo is None else float(self.halo)

    @property
    def L(self):
        return self.L_a + self.halo_

    def validate(self):
        sp = self.sp
        law = self.law
        if not self.intensity > 0:
            raise ConfigError("intensity must be positive")
        if not (self.h > 0 and self.r > 0 and self.L_a > 0):
            raise ConfigError("h, r and L_a must be positive")
        if self.h > law.min_radius / 4 + 1e-12:
            raise ConfigError(f"h = {self.h} exceeds min_radius/4 = {law.min_radius / 4}; "
                              "lower h or raise the smallest radius")
        need = law.max_radius + 2 * self.r
        if self.halo_ < need - 1e-12:
            raise ConfigError(f"halo = {self.halo_} is below max_radius + 2r = {need}; "
                              "widen the halo or reduce r")
        if sp.hyperbolic and self.L > geo.H2_MAX_RADIUS + 1e-12:
            raise ConfigError(f"L_a + halo = {self.L} exceeds the disk cap {geo.H2_MAX_RADIUS}")
        if self.y_intensity <= 0 or self.z_intensity <= 0:
            raise ConfigError("auxiliary intensities must be positive")
        _phase(self.phase)
        return self


def sample_measure(cfg, seed, replica, tag="omega", intensity=None, law=None, L_a=None):
    L_a = cfg.L_a if L_a is None else L_a
    law = cfg.law if law is None else law
    lam = cfg.intensity if intensity is None else intensity
    return pr.sample_poisson(cfg.sp, L_a, cfg.halo_, lam, law, stream(seed, replica, tag), seed=seed)


def build(cfg, omega, L_a=None):
    L_a = cfg.L_a if L_a is None else L_a
    return Scene(cfg.sp, omega, L_a + cfg.halo_, L_a, cfg.h, min_radius=cfg.law.min_radius)


def scene_for(cfg, seed, replica):
    return build(cfg, sample_measure(cfg, seed, replica))


def auxiliary(cfg, seed, replica, tag, intensity):
    return pr.sample_poisson(cfg.sp, cfg.L_a, cfg.halo_, intensity, pr.Constant(1.0),
                             stream(seed, replica, tag), seed=seed)


def map_replicas(fn, replicas, threads=1):
    """fn over replicas, results in replica order whatever the thread count."""
    replicas = list(replicas)
    if threads <= 1 or len(replicas) <= 1:
        return [fn(r) for r in replicas]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, replicas))


# ---------------------------------------------------------------- records


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class ExperimentRecord:
    name: str
    config: dict
    per_seed: list
    summary: dict
    tables: dict = field(default_factory=dict)   # name -> (columns, rows)

    def to_json(self):
        body = {"name": self.name, "config": self.config, "summary": self.summary}
        return json.dumps(_plain(body), sort_keys=True, indent=1) + "\n"

    def per_seed_jsonl(self):
        return "".join(json.dumps(_plain(r), sort_keys=True) + "\n" for r in self.per_seed)

    def digest(self):
        h = hashlib.sha256(self.to_json().encode())
        h.update(self.per_seed_jsonl().encode())
        return h.hexdigest()


def wilson(k, n, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


# ---------------------------------------------------------------- component properties


_CACHE = {}
_CACHE_LIMIT = 200_000


def _cache_get(key, fn):
    if key in _CACHE:
        return _CACHE[key]
    val = fn()
    if len(_CACHE) > _CACHE_LIMIT:
        _CACHE.clear()
    _CACHE[key] = val
    return val


@dataclass(frozen=True)
class ComponentProperty:
    """Yes/no question about a component, memoised per (scene, component, name)."""

    name: str
    evaluator: Callable
    invariant: bool = True

    def __call__(self, scene, comp):
        key = (scene.digest, comp.phase, comp.id, self.name)
        return _cache_get(key, lambda: bool(self.evaluator(scene, comp)))

    def checked(self, scene, comp):
        """Evaluate, then re-evaluate from another cell of the component; raise if they differ."""
        a = self(scene, comp)
        cells = scene.cells(comp)
        other = scene.component_of(scene.raster.xy[cells[-1]], comp.phase) if len(cells) else None
        b = bool(self.evaluator(scene, other if other is not None else comp))
        if a != b:
            raise InvariantViolation("component-constant property",
                                     f"{self.name} differs within component {comp.id}")
        return a


def boundary_contact():
    return ComponentProperty("boundary_contact", lambda s, c: c.boundary)


def cell_count_at_least(v):
    return ComponentProperty(f"cells>={v}", lambda s, c: c.cell_count >= v)


def contains_trifurcation(r, Y):
    def ev(scene, comp):
        key = (scene.digest, "tri", comp.phase, float(r), id(Y))
        tris = _cache_get(key, lambda: fo.find_trifurcations(scene, Y, r, comp.phase))
        return any(t.component == comp.id for t in tris)
    return ComponentProperty(f"trifurcation(r={r})", ev)


def _frequencies(scene, phase, walks, steps):
    """Walk occupation share of every component of ``phase``, from one walk budget."""
    def go():
        seed = int(scene.digest[:15], 16)
        pts = wk.ambient_walks(scene.space, walks, steps, stream(seed, 0, "frequency"), L_a=scene.L_a)
        cells = scene.raster.locate_many(pts[:, 1:].reshape(-1, scene.space.dim))
        lab = scene.labels(phase)
        ids = np.where(cells >= 0, lab[np.maximum(cells, 0)], -1).reshape(walks, steps)
        m = int(lab.max()) + 1 if (lab >= 0).any() else 0
        out = np.zeros((walks, max(m, 1)))
        for w in range(walks):
            row = ids[w][ids[w] >= 0]
            out[w, :m] = np.bincount(row, minlength=m)[:m] / steps
        return out
    return _cache_get((scene.digest, "freq", phase, walks, steps), go)


def frequency_at_least(t, walks=20, steps=2000):
    def ev(scene, comp):
        return _frequencies(scene, comp.phase, walks, steps)[:, comp.id].mean() >= t
    return ComponentProperty(f"frequency>={t}", ev)


def frequency_above_median(walks=20, steps=2000):
    """Frequency at least the median over the scene's boundary-contacting components."""
    def ev(scene, comp):
        f = _frequencies(scene, comp.phase, walks, steps).mean(axis=0)
        ids = [c.id for c in scene.components(comp.phase, boundary_only=True)]
        med = float(np.median(f[ids])) if ids else 0.0
        return f[comp.id] >= med
    return ComponentProperty("frequency>=median", ev)


def percolates_at(lam, eta, lam_max):
    def ev(scene, comp):
        if not comp.boundary:
            return False
        res = percolation_on_component(scene, comp, [lam], eta, lam_max=lam_max)
        return res.lam_star is not None
    return ComponentProperty(f"percolates({lam})", ev)


def component_id_even():
    """Depends on an arbitrary numbering, so it is not isometry invariant."""
    return ComponentProperty("id_even", lambda s, c: c.id % 2 == 0, invariant=False)


BUILTIN_PROPERTIES = {
    "boundary_contact": boundary_contact,
    "cell_count": cell_count_at_least,
    "frequency": frequency_at_least,
    "frequency_median": frequency_above_median,
    "id_even": component_id_even,
}


# ---------------------------------------------------------------- pivotal scans


@dataclass
class PivotalResult:
    z: int
    point: np.ndarray
    fraction: float
    flipped: bool


def _origin_component(scene, phase):
    o = scene.space.origin
    comp = scene.component_of(o, phase)
    if comp is None:
        raise InputError(f"the origin is not in the {phase} phase")
    return comp


def pivotal_scan_occupied(scene, prop, Z, rng, delta=0.125, samples=32, r_star=None):
    """Flip fraction of the origin's occupied component for each empty B(z, delta)."""
    base_c = _origin_component(scene, OCCUPIED)
    base = prop.checked(scene, base_c)
    law = pr.parse_radius_law(scene.omega.radius_law) if scene.omega.radius_law else pr.Constant(1.0)
    out = []
    for i, z in enumerate(Z.points):
        if geo.distance(scene.space, scene.space.origin, z) + delta > scene.L_a:
            continue
        if scene.omega.count_in_ball(z, delta) > 0:
            continue
        xs = geo.sample_uniform_ball(scene.space, z, delta, rng, size=samples)
        rad = law.sample(samples, rng)
        if r_star is not None:
            rad = np.minimum(rad, r_star)
        lab = rng.uniform(0.0, 1.0, samples)
        flips = 0
        for x, rr, u in zip(xs, rad, lab):
            s2 = scene.with_inserted_atom(x, float(rr), float(u))
            c2 = s2.component_of(scene.space.origin, OCCUPIED)
            flips += prop(s2, c2) != base
        out.append(PivotalResult(i, z.copy(), flips / samples, flips > 0))
    return out


def pivotal_scan_vacant(scene, prop, Z, Delta=2.0, r_star=None):
    """Whether deleting atoms centred in B(z, Delta) flips the origin's vacant component."""
    base_c = _origin_component(scene, VACANT)
    base = prop.checked(scene, base_c)
    out = []
    for i, z in enumerate(Z.points):
        hit = scene.omega.in_ball(z, Delta)
        if r_star is not None:
            hit &= scene.omega.radii <= r_star
        if not hit.any():
            out.append(PivotalResult(i, z.copy(), 0.0, False))
            continue
        om2 = pr.delete_in_ball(scene.omega, z, Delta, radius_cap=r_star)
        s2 = Scene(scene.space, om2, scene.L, scene.L_a, scene.h)
        c2 = s2.component_of(scene.space.origin, VACANT)
        f = prop(s2, c2) != base
        out.append(PivotalResult(i, z.copy(), float(f), bool(f)))
    return out


# ---------------------------------------------------------------- indistinguishability


def indistinguishability_harness(cfg, prop, seed, replicas, phase=None, strata=(0, 100, 1000),
                                 threads=1, prop_factory=None):
    """Mixed-type rate of a property over boundary-contacting components.

    ``prop_factory(scene, seed, replica)`` may build a per-scene property
    (used when the property needs auxiliary randomness).
    """
    if not prop.invariant:
        raise InputError(f"property {prop.name!r} is not isometry invariant; refused")
    cfg.validate()
    phase = _phase(phase or cfg.phase)

    def one(rep):
        S = scene_for(cfg, seed, rep)
        p = prop_factory(S, seed, rep) if prop_factory else prop
        rows = []
        for c in S.components(phase, boundary_only=True):
            rows.append({"seed": rep, "component_id": c.id, "cell_count": c.cell_count,
                         "boundary": c.boundary, "property_value": p(S, c)})
        return rows

    per = map_replicas(one, replicas, threads)
    table = [r for rows in per for r in rows]
    summary = {}
    for q in strata:
        mixed = n = 0
        for rows in per:
            vals = {r["property_value"] for r in rows if r["cell_count"] >= q}
            if len(vals) == 0:
                continue
            n += 1
            mixed += len(vals) > 1
        summary[f"mixed_rate_min{q}"] = mixed / n if n else float("nan")
        summary[f"seeds_min{q}"] = n
    cols = ("seed", "component_id", "cell_count", "boundary", "property_value")
    return ExperimentRecord("indist", _cfg_dict(cfg, seed=seed, property=prop.name, phase=phase),
                            [{"seed": rows[0]["seed"] if rows else rep, "components": len(rows),
                              "mixed": len({r["property_value"] for r in rows}) > 1}
                             for rep, rows in zip(replicas, per)],
                            summary, {"indist": (cols, [tuple(r[c] for c in cols) for r in table])})


def _cfg_dict(cfg, **extra):
    d = asdict(cfg)
    d["halo"] = cfg.halo_
    d.update(extra)
    return d


# ---------------------------------------------------------------- crossings and monotonicity


def crossing_components(scene, phase):
    """Ids of components holding two boundary cells at distance >= L_a."""
    phase = _phase(phase)
    lab = scene.labels(phase)
    ras = scene.raster
    out = []
    for c in scene.components(phase, boundary_only=True):
        cells = np.flatnonzero((lab == c.id) & ras.boundary)
        if len(cells) < 2:
            continue
        if scene.space.dim == 2:
            phi = np.sort(ras.phi[cells])
            # widest angular separation between two of the angles
            tgt = (phi + math.pi) % (2 * math.pi)
            j = np.searchsorted(phi, tgt) % len(phi)
            cand = np.concatenate([phi[j], phi[j - 1]])
            gap = np.abs(np.concatenate([phi, phi]) - cand)
            gap = np.minimum(gap, 2 * math.pi - gap).max()
            rho = float(ras.rho[cells].max())
            cr = geo.chart_radius(scene.space, rho)
            a = np.array([cr, 0.0])
            b = np.array([cr * math.cos(gap), cr * math.sin(gap)])
            diam = float(geo.distance(scene.space, a, b))
        else:
            pts = ras.xy[cells]
            if len(pts) > 600:
                pts = pts[np.linspace(0, len(pts) - 1, 600).astype(int)]
            diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
        if diam >= scene.L_a - 1e-9:
            out.append(c.id)
    return out


def monotonicity_experiment(cfg, lam1, lam2, seed, replicas, ladder=None, phase=None, threads=1):
    """Two intensities from one marked measure via label thinning, on nested windows."""
    if not 0 < lam1 <= lam2:
        raise InputError("need 0 < lam1 <= lam2")
    cfg.validate()
    phase = _phase(phase or cfg.phase)
    ladder = sorted(ladder or [cfg.L_a])
    big = replace(cfg, L_a=ladder[-1], intensity=lam2)
    big.validate()

    def one(rep):
        om2_full = sample_measure(big, seed, rep)
        om1_full = pr.thin_by_label(om2_full, lam1 / lam2)
        rows = []
        for La in ladder:
            om2 = om2_full.restrict(La, cfg.halo_)
            om1 = om1_full.restrict(La, cfg.halo_)
            S1, S2 = build(cfg, om1, La), build(cfg, om2, La)
            if np.any(S1.occupied & ~S2.occupied):
                raise InvariantViolation("coupling inclusion", f"O(lam1) not inside O(lam2), replica {rep}")
            n1 = len(crossing_components(S1, phase))
            n2 = len(crossing_components(S2, phase))
            if phase == OCCUPIED:
                viol = n1 == 1 and n2 != 1
            else:
                viol = n2 == 1 and n1 != 1
            rows.append({"seed": rep, "L_a": La, "cross_lam1": n1, "cross_lam2": n2,
                         "violation": viol})
        return rows

    per = map_replicas(one, replicas, threads)
    flat = [r for rows in per for r in rows]
    summary = {}
    for La in ladder:
        sub = [r for r in flat if r["L_a"] == La]
        n = len(sub)
        summary[f"L_a={La}"] = {
            "violation_rate": sum(r["violation"] for r in sub) / n,
            "unique_lam1": sum(r["cross_lam1"] == 1 for r in sub) / n,
            "unique_lam2": sum(r["cross_lam2"] == 1 for r in sub) / n,
            "seeds": n}
    cols = ("seed", "L_a", "cross_lam1", "cross_lam2", "violation")
    return ExperimentRecord("monotone", _cfg_dict(cfg, seed=seed, lam1=lam1, lam2=lam2, ladder=ladder),
                            flat, summary, {"monotone": (cols, [tuple(r[c] for c in cols) for r in flat])})


# ---------------------------------------------------------------- connectivity decay


def connectivity_decay(cfg, t_grid, seed, replicas, phase=None, threads=1):
    """Share of seeds where 0 and a point at distance t lie in one component."""
    cfg.validate()
    phase = _phase(phase or cfg.phase)
    t_grid = [float(t) for t in t_grid]
    if max(t_grid) > cfg.L_a:
        raise InputError("distance grid leaves the analysis region")

    def one(rep):
        S = scene_for(cfg, seed, rep)
        g = stream(seed, rep, "direction")
        if cfg.sp.dim == 2:
            a = g.uniform(0, 2 * math.pi)
            u = np.array([math.cos(a), math.sin(a)])
        else:
            u = g.standard_normal(3)
            u /= np.linalg.norm(u)
        c0 = S.component_of(S.space.origin, phase)
        hits = []
        for t in t_grid:
            x = u * float(geo.chart_radius(S.space, min(t, S.L_a - 1e-9)))
            ct = S.component_of(x, phase)
            hits.append(bool(c0 is not None and ct is not None and ct.id == c0.id))
        return {"seed": rep, "hits": hits}

    per = map_replicas(one, replicas, threads)
    n = len(per)
    rows = []
    for i, t in enumerate(t_grid):
        k = sum(r["hits"][i] for r in per)
        lo, hi = wilson(k, n)
        rows.append((t, k / n, lo, hi, n))
    cols = ("t", "tau_hat", "ci_lo", "ci_hi", "n_seeds")
    summary = {"tau_hat": [r[1] for r in rows], "t": t_grid,
               "ci_lo": [r[2] for r in rows], "ci_hi": [r[3] for r in rows]}
    return ExperimentRecord("connectivity", _cfg_dict(cfg, seed=seed, phase=phase), per, summary,
                            {"connectivity": (cols, rows)})


def monotone_with_one_inversion(tau, lo, hi):
    """Non-increasing, except possibly one rise whose intervals overlap."""
    bad = 0
    for i in range(len(tau) - 1):
        if tau[i + 1] > tau[i]:
            if hi[i] < lo[i + 1]:
                return False
            bad += 1
    return bad <= 1


# ---------------------------------------------------------------- percolation in components


@dataclass
class PercolationResult:
    lam_grid: list
    percolates: list
    lam_star: float | None
    vertices: list
    clusters: list = field(default_factory=list)


def percolation_on_component(scene, comp, lam_grid, eta, lam_max=None, reach=2.0):
    """Smallest grid intensity at which G_{S,lam} spans the component.

    Vertices are eta-atoms inside the component whose label is at most
    lam/lam_max, so the vertex sets are nested in lam.  Two vertices are
    joined when their distance inside S is at most ``reach``.  A cluster
    spans when it holds a vertex in B(0, reach) and one within ``reach``
    of the sphere of radius L_a.
    """
    if not comp.boundary:
        raise InputError("component does not reach the boundary; nothing to percolate to")
    lam_grid = [float(x) for x in lam_grid]
    if any(b <= a for a, b in zip(lam_grid, lam_grid[1:])):
        raise InputError("lambda grid must increase")
    lam_max = float(lam_max if lam_max is not None else eta.intensity)
    sp = scene.space
    lab = scene.labels(comp.phase)
    ras = scene.raster
    cells = ras.locate_many(eta.points) if len(eta) else np.empty(0, dtype=np.int64)
    inside = np.zeros(len(eta), dtype=bool)
    if len(eta):
        ok = cells >= 0
        inside[ok] = lab[cells[ok]] == comp.id
        if comp.phase == OCCUPIED:
            d = geo.distance(sp, eta.points[inside][:, None], scene.omega.points[None]) \
                if inside.any() and len(scene.omega) else np.zeros((inside.sum(), 0))
            covered = (d <= scene.omega.radii[None]).any(axis=1) if d.size else np.zeros(inside.sum(), bool)
            idx = np.flatnonzero(inside)
            inside[idx[~covered]] = False
    idx = np.flatnonzero(inside)
    pts = eta.points[idx]
    vc = cells[idx]
    thr = eta.labels[idx] * lam_max
    norms = geo.distance(sp, sp.origin, pts) if len(idx) else np.empty(0)
    mask = lab == comp.id
    off = geo.distance(sp, pts, ras.xy[vc]) if len(idx) else np.empty(0)
    ei, ej = [], []
    for a in range(len(idx) - 1):
        amb = geo.distance(sp, pts[a], pts[a + 1:])
        nb = np.flatnonzero(amb <= reach) + a + 1
        if len(nb) == 0:
            continue
        dist = scene.distances_from(comp.phase, [vc[a]], mask, cutoff=reach + 2 * scene.h)
        db = dist[vc[nb]] + off[a] + off[nb]
        ok = (db <= reach) | (amb[nb - a - 1] == 0)
        ei.extend([a] * int(ok.sum()))
        ej.extend(nb[ok].tolist())
    ei = np.array(ei, dtype=np.int64)
    ej = np.array(ej, dtype=np.int64)
    inner = norms <= reach
    outer = norms >= scene.L_a - reach
    perc = []
    clusters = []
    for lam in lam_grid:
        on = thr <= lam
        keep = on[ei] & on[ej] if len(ei) else np.zeros(0, dtype=bool)
        from .scene import K as _K
        labs = _K.components(len(idx), ei[keep], ej[keep]) if len(idx) else np.empty(0, np.int64)
        good = set(labs[on & inner]) & set(labs[on & outer])
        perc.append(bool(good))
        clusters.append(int(len(set(labs[on]))))
    star = next((l for l, p in zip(lam_grid, perc) if p), None)
    return PercolationResult(lam_grid, perc, star, [int(on.sum()) for on in (thr[None] <= np.array(lam_grid)[:, None])], clusters)


def giant_component(scene, phase):
    comps = scene.components(phase, boundary_only=True)
    if not comps:
        return None
    return max(comps, key=lambda c: (c.cell_count, -c.id))


def percolation_experiment(cfg, lam_grid, seed, replicas, ladder=None, phase=None, threads=1):
    """lambda_* on the giant boundary component, for nested windows of one seed."""
    cfg.validate()
    phase = _phase(phase or cfg.phase)
    ladder = sorted(ladder or [cfg.L_a])
    lam_max = max(lam_grid)
    big = replace(cfg, L_a=ladder[-1])
    big.validate()

    def one(rep):
        om = sample_measure(big, seed, rep)
        eta = pr.sample_poisson(cfg.sp, ladder[-1], cfg.halo_, lam_max, pr.Constant(1.0),
                                stream(seed, rep, "eta"), seed=seed)
        rows = []
        for La in ladder:
            S = build(cfg, om.restrict(La, cfg.halo_), La)
            g = giant_component(S, phase)
            if g is None:
                rows.append({"seed": rep, "L_a": La, "lam_star": None, "percolates": [False] * len(lam_grid)})
                continue
            res = percolation_on_component(S, g, lam_grid, eta.restrict(La, 0.0), lam_max=lam_max)
            if any(a and not b for a, b in zip(res.percolates, res.percolates[1:])):
                raise InvariantViolation("percolation monotone in lambda", f"replica {rep}")
            rows.append({"seed": rep, "L_a": La, "lam_star": res.lam_star, "percolates": res.percolates,
                         "vertices": res.vertices})
        return rows

    per = map_replicas(one, replicas, threads)
    flat = [r for rows in per for r in rows]
    table = []
    summary = {}
    for La in ladder:
        sub = [r for r in flat if r["L_a"] == La]
        for i, lam in enumerate(lam_grid):
            table.append((lam, sum(r["percolates"][i] for r in sub) / len(sub), La))
        stars = [r["lam_star"] for r in sub if r["lam_star"] is not None]
        summary[f"L_a={La}"] = {"median_lam_star": float(np.median(stars)) if stars else None,
                                "finite": len(stars), "seeds": len(sub)}
    return ExperimentRecord("percolation", _cfg_dict(cfg, seed=seed, lam_grid=list(lam_grid), ladder=ladder),
                            flat, summary, {"percolation": (("lambda", "percolates_fraction", "L_a"), table)})


# ---------------------------------------------------------------- forests, walks and flows


def forest_for(cfg, seed, rep, scene=None):
    S = scene if scene is not None else scene_for(cfg, seed, rep)
    Y = auxiliary(cfg, seed, rep, "Y", cfg.y_intensity)
    T = fo.find_trifurcations(S, Y, cfg.r, cfg.phase)
    return S, fo.build_forest(S, T, cfg.phase)


def forest_checks(F):
    """Structural checks of a forest; returns a dict of counts, raises on failure."""
    g = F.graph()
    deg = g.degree
    per = {}
    for i, j, b in F.out_edges:
        if (i, b) in per:
            raise InvariantViolation("one edge per branch", f"vertex {i} branch {b}")
        per[(i, b)] = j
    for e in F.edges:
        tu, tv = F.vertices[e.u], F.vertices[e.v]
        if e.branch_u not in tu.branches or e.branch_v not in tv.branches:
            raise InvariantViolation("branch exchange", f"edge {e.u}-{e.v}")
    for i, t in enumerate(F.vertices):
        nb = len(t.branches)
        if deg[i] > nb:
            raise InvariantViolation("degree bound", f"vertex {i} has degree {deg[i]} > {nb}")
        if F.complete[i]:
            got = {b for (a, b) in per if a == i}
            if got != set(t.branches):
                raise InvariantViolation("edge per branch", f"complete vertex {i}")
    return {"vertices": F.n, "edges": len(F.edges), "complete": int(np.sum(F.complete))}


def transport_masses(F, space, radius=1.0):
    """(out-mass, in-mass) of the ordered-edge transport for B(0, radius)."""
    if F.n == 0:
        return 0, 0
    inb = geo.distance(space, space.origin, F.positions) <= radius
    out = sum(1 for i, j, _ in F.out_edges if inb[i])
    inn = sum(1 for i, j, _ in F.out_edges if inb[j])
    return out, inn


def transience_experiment(cfg, seed, replicas, threads=1, trials=2000, step_cap=2000):
    """Flow energies on ball-graph backbones plus escape estimates, per seed."""
    cfg.validate()

    def one(rep):
        S = scene_for(cfg, seed, rep)
        bb, idx, msf = fo.ball_graph_backbone(S)
        flows = fo.all_flows(bb)
        kir = max((f.kirchhoff_residual(bb) for f in flows), default=0.0)
        e1 = max((float(f.e1) for f in flows), default=0.0)
        im, _ = fo.incoming_mass(bb, flows)
        row = {"seed": rep, "backbone_vertices": len(bb.vertices), "roots": len(flows),
               "max_kirchhoff": float(kir), "max_e1": e1, "incoming_mass": float(im)}
        roots = bb.trifurcations()
        if roots:
            pos = {v: i for i, v in enumerate(bb.vertices)}
            eu = [pos[u] for u, v in bb.edges()]
            ev = [pos[v] for u, v in bb.edges()]
            exits = np.array([v in bb.attachments for v in bb.vertices])
            g = fo.Graph(len(bb.vertices), eu, ev, exits=exits)
            y = roots[0]
            est = wk.escape_probability(g, pos[y], trials, step_cap, stream(seed, rep, "escape"))
            row.update(escape=est.p, escape_censored=est.censoring_rate,
                       min_degree=int(min(bb.D(v) for v in bb.vertices)))
        return row

    per = map_replicas(one, replicas, threads)
    summary = {"max_e1": max((r["max_e1"] for r in per), default=0.0),
               "max_incoming_mass": max((r["incoming_mass"] for r in per), default=0.0),
               "max_kirchhoff": max((r["max_kirchhoff"] for r in per), default=0.0)}
    return ExperimentRecord("transience", _cfg_dict(cfg, seed=seed), per, summary)
