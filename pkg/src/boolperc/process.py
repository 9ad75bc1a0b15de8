"""Marked point measures, Poisson sampling and local modifications."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import InputError

# ---------------------------------------------------------------- radius laws


@dataclass(frozen=True)
class Constant:
    r: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise InputError("constant radius must be positive")

    def sample(self, n, rng):
        return np.full(n, float(self.r))

    @property
    def min_radius(self):
        return float(self.r)

    @property
    def max_radius(self):
        return float(self.r)

    def to_text(self):
        return f"constant:{self.r!r}"


@dataclass(frozen=True)
class BoundedIID:
    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or len(v) == 0:
            raise InputError("values and probs must be equal-length lists")
        if np.any(v <= 0) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise InputError("radii must be positive and probabilities sum to one")
        object.__setattr__(self, "values", tuple(float(x) for x in v))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    def sample(self, n, rng):
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.uniform(0.0, cdf[-1], n), side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    @property
    def min_radius(self):
        return min(v for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def max_radius(self):
        return max(v for v, p in zip(self.values, self.probs) if p > 0)

    def to_text(self):
        return "bounded:" + ",".join(f"{v!r}@{p!r}" for v, p in zip(self.values, self.probs))


@dataclass(frozen=True)
class ExponentialTruncated:
    """lo + Exp(rate), conditioned to stay below cap."""

    rate: float
    cap: float
    lo: float = 0.0

    def __post_init__(self):
        if not (self.rate > 0 and self.cap > self.lo >= 0):
            raise InputError("need rate > 0 and cap > lo >= 0")

    def sample(self, n, rng):
        u = rng.uniform(0.0, 1.0, n)
        span = 1.0 - math.exp(-self.rate * (self.cap - self.lo))
        r = self.lo - np.log1p(-u * span) / self.rate
        return np.clip(r, np.nextafter(self.lo, np.inf), self.cap)

    @property
    def min_radius(self):
        return float(self.lo)

    @property
    def max_radius(self):
        return float(self.cap)

    def to_text(self):
        return f"exptrunc:{self.rate!r},{self.cap!r},{self.lo!r}"


def parse_radius_law(text):
    text = str(text).strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "constant":
            return Constant(float(rest) if rest else 1.0)
        if kind == "bounded":
            pairs = [p.split("@") for p in rest.split(",") if p.strip()]
            return BoundedIID(tuple(float(a) for a, _ in pairs), tuple(float(b) for _, b in pairs))
        if kind == "exptrunc":
            args = [float(a) for a in rest.split(",")]
            return ExponentialTruncated(*args)
    except (ValueError, TypeError) as exc:
        raise InputError(f"cannot parse radius law {text!r}: {exc}") from exc
    raise InputError(f"unknown radius law {text!r}")


# ---------------------------------------------------------------- measures


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite simple counting measure with radius and label marks."""

    space: geo.SpaceModel
    points: np.ndarray
    radii: np.ndarray
    labels: np.ndarray
    window: float
    halo: float = 0.0
    intensity: float = float("nan")
    seed: int | None = None
    radius_law: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.space.dim)
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "radii", _frozen(np.asarray(self.radii, dtype=float).reshape(-1)))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=float).reshape(-1)))
        n = len(self.points)
        if len(self.radii) != n or len(self.labels) != n:
            raise InputError("points, radii and labels must have equal length")
        if n and (np.any(self.radii <= 0) or np.any(self.labels < 0) or np.any(self.labels > 1)):
            raise InputError("radii must be positive and labels in [0, 1]")

    def __len__(self):
        return len(self.points)

    @property
    def extent(self):
        return self.window + self.halo

    def _with(self, keep=None, points=None, radii=None, labels=None):
        if keep is not None:
            points, radii, labels = self.points[keep], self.radii[keep], self.labels[keep]
        return PointMeasure(self.space, points, radii, labels, self.window, self.halo,
                            self.intensity, self.seed, self.radius_law, dict(self.meta))

    def norms(self):
        if len(self) == 0:
            return np.empty(0)
        return geo.distance(self.space, self.space.origin, self.points)

    def in_ball(self, center, R):
        """Boolean mask of atoms whose point lies in the closed ball B(center, R)."""
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        return geo.distance(self.space, np.asarray(center, dtype=float), self.points) <= R

    def count_in_ball(self, center, R):
        return int(self.in_ball(center, R).sum())

    def restrict(self, window, halo=0.0):
        """Atoms inside B(0, window + halo), relabelled as sampled there."""
        keep = self.norms() <= window + halo
        out = self._with(keep=keep)
        object.__setattr__(out, "window", float(window))
        object.__setattr__(out, "halo", float(halo))
        return out

    def transform(self, iso):
        return self._with(points=iso(self.points), radii=self.radii, labels=self.labels)

    def same_atoms(self, other):
        return (len(self) == len(other) and np.array_equal(self.points, other.points)
                and np.array_equal(self.radii, other.radii)
                and np.array_equal(self.labels, other.labels))


def empty_measure(space, window, halo=0.0):
    return PointMeasure(space, np.empty((0, space.dim)), np.empty(0), np.empty(0), window, halo)


def sample_poisson(space, window_radius, halo, intensity, radius_law, rng, seed=None):
    """Poisson measure with intensity ``intensity`` times volume in B(0, L + halo)."""
    if not intensity > 0:
        raise InputError("intensity must be positive")
    if window_radius < 0 or halo < 0:
        raise InputError("window and halo must be non-negative")
    R = window_radius + halo
    if space.hyperbolic and R > geo.H2_MAX_RADIUS:
        raise InputError(f"disk windows are capped at radius {geo.H2_MAX_RADIUS}")
    n = int(rng.poisson(intensity * geo.ball_volume(space, R)))
    pts = geo.sample_polar(space, R, n, rng) if n else np.empty((0, space.dim))
    radii = radius_law.sample(n, rng)
    labels = rng.uniform(0.0, 1.0, n)
    return PointMeasure(space, pts, radii, labels, float(window_radius), float(halo),
                        float(intensity), seed, radius_law.to_text())


def insert_atom(omega, x, radius, label):
    x = geo.check_points(omega.space, x).reshape(-1)
    if radius <= 0 or not 0 <= label <= 1:
        raise InputError("radius must be positive and label in [0, 1]")
    if len(omega) and np.any(np.all(omega.points == x, axis=1)):
        raise InputError("point already carries an atom")
    return omega._with(points=np.vstack([omega.points, x[None, :]]),
                       radii=np.append(omega.radii, radius),
                       labels=np.append(omega.labels, label))


def delete_in_ball(omega, center, R, radius_cap=None):
    """Drop atoms centred in B(center, R), optionally only those with radius <= cap."""
    if not R > 0:
        raise InputError("deletion radius must be positive")
    hit = omega.in_ball(center, R)
    if radius_cap is not None:
        hit &= omega.radii <= radius_cap
    return omega._with(keep=~hit)


def thin_by_label(omega, t):
    if not 0 <= t <= 1:
        raise InputError("threshold must lie in [0, 1]")
    out = omega._with(keep=omega.labels <= t)
    object.__setattr__(out, "intensity", omega.intensity * t)
    return out


# ---------------------------------------------------------------- text format

_HEADER = "# boolperc point measure v1"


def to_text(omega):
    lines = [_HEADER,
             f"# space = {omega.space.kind}",
             f"# window = {omega.window!r}",
             f"# halo = {omega.halo!r}",
             f"# intensity = {omega.intensity!r}",
             f"# seed = {omega.seed!r}",
             f"# radius_law = {omega.radius_law}",
             f"# atoms = {len(omega)}"]
    for p, r, u in zip(omega.points, omega.radii, omega.labels):
        lines.append(" ".join(repr(float(v)) for v in (*p, r, u)))
    return "\n".join(lines) + "\n"


def from_text(text):
    head = {}
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                head[key.strip()] = val.strip()
            continue
        rows.append([float(v) for v in line.split()])
    if "space" not in head:
        raise InputError("missing space header")
    sp = geo.SpaceModel(head["space"])
    data = np.array(rows, dtype=float).reshape(-1, sp.dim + 2)
    if "atoms" in head and int(head["atoms"]) != len(data):
        raise InputError("atom count does not match header")
    seed = head.get("seed", "None")
    return PointMeasure(sp, data[:, :sp.dim], data[:, sp.dim], data[:, sp.dim + 1],
                        float(head.get("window", "nan")), float(head.get("halo", "0.0")),
                        float(head.get("intensity", "nan")),
                        None if seed == "None" else int(seed), head.get("radius_law", ""))


def write(omega, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(omega))


def read(path):
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())
