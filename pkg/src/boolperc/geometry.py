"""Metric, volume, uniform sampling and isometries.

Three spaces are supported, each in one chart:

* ``E2``, ``E3``: Euclidean coordinates.
* ``H2``: the Poincare disk with curvature -1; points are pairs (x, y)
  with x^2 + y^2 < 1.

Points are numpy arrays of shape (dim,) or (n, dim).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

CHART_EDGE = 1.0 - 1e-12
H2_MAX_RADIUS = 12.0

_ALIASES = {
    "E2": "E2", "Euclidean2": "E2", "euclidean2": "E2",
    "E3": "E3", "Euclidean3": "E3", "euclidean3": "E3",
    "H2": "H2", "HyperbolicPlane": "H2", "hyperbolic": "H2", "hyperbolicplane": "H2",
}


@dataclass(frozen=True)
class SpaceModel:
    kind: str

    def __post_init__(self):
        if self.kind not in _ALIASES:
            raise InputError(f"unknown space kind {self.kind!r}")
        object.__setattr__(self, "kind", _ALIASES[self.kind])

    @property
    def dim(self) -> int:
        return 3 if self.kind == "E3" else 2

    @property
    def hyperbolic(self) -> bool:
        return self.kind == "H2"

    @property
    def origin(self) -> np.ndarray:
        return np.zeros(self.dim)

    def distance(self, p, q):
        return distance(self, p, q)

    def ball_volume(self, r):
        return ball_volume(self, r)

    def norm(self, p):
        return distance(self, self.origin, p)


EUCLIDEAN2 = SpaceModel("E2")
EUCLIDEAN3 = SpaceModel("E3")
HYPERBOLIC_PLANE = SpaceModel("H2")


def space(kind) -> SpaceModel:
    return kind if isinstance(kind, SpaceModel) else SpaceModel(kind)


def check_points(space, p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != space.dim:
        raise InputError(f"expected {space.dim} coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InputError("non-finite coordinates")
    if space.hyperbolic and np.any(np.sum(p * p, axis=-1) >= 1.0):
        raise InputError("point outside the open unit disk")
    return p


def clamp(space, p):
    """Pull disk points back to |z| <= 1 - 1e-12."""
    p = np.asarray(p, dtype=float)
    if not space.hyperbolic:
        return p
    r = np.sqrt(np.sum(p * p, axis=-1))
    scale = np.where(r > CHART_EDGE, CHART_EDGE / np.maximum(r, 1e-300), 1.0)
    return p * scale[..., None] if p.ndim > 1 else p * scale


def distance(space, p, q):
    """Metric distance, broadcasting over leading axes."""
    p = check_points(space, p)
    q = check_points(space, q)
    dx = p - q
    d2 = np.sum(dx * dx, axis=-1)
    if not space.hyperbolic:
        return np.sqrt(d2)
    s = d2 / ((1.0 - np.sum(p * p, axis=-1)) * (1.0 - np.sum(q * q, axis=-1)))
    # arcosh(1 + 2s) written to keep precision at short range
    return 2.0 * np.arcsinh(np.sqrt(s))


def chart_radius(space, t):
    """Chart norm of a point at metric distance t from the origin."""
    t = np.asarray(t, dtype=float)
    return np.tanh(t / 2.0) if space.hyperbolic else t


def metric_radius(space, rho):
    rho = np.asarray(rho, dtype=float)
    return 2.0 * np.arctanh(rho) if space.hyperbolic else rho


def ball_volume(space, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InputError("negative radius")
    if space.kind == "E2":
        v = math.pi * r ** 2
    elif space.kind == "E3":
        v = 4.0 / 3.0 * math.pi * r ** 3
    else:
        v = 4.0 * math.pi * np.sinh(r / 2.0) ** 2  # = 2 pi (cosh r - 1)
    return float(v) if v.ndim == 0 else v


def sphere_area(space, r):
    r = np.asarray(r, dtype=float)
    if space.kind == "E2":
        return 2 * math.pi * r
    if space.kind == "E3":
        return 4 * math.pi * r ** 2
    return 2 * math.pi * np.sinh(r)


# ---------------------------------------------------------------- sampling


def _directions(dim, n, rng):
    if dim == 2:
        phi = rng.uniform(0.0, 2 * math.pi, n)
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _radii(space, r, n, rng):
    u = rng.uniform(0.0, 1.0, n)
    if space.hyperbolic:
        # P[T <= t] = (cosh t - 1)/(cosh r - 1) = sinh^2(t/2)/sinh^2(r/2)
        return 2.0 * np.arcsinh(np.sqrt(u) * math.sinh(r / 2.0))
    return r * u ** (1.0 / space.dim)


def sample_uniform_ball(space, center, r, rng, size=None):
    """Uniform point(s) in B(center, r) with respect to the volume measure."""
    if r <= 0:
        raise InputError("radius must be positive")
    center = check_points(space, center)
    n = 1 if size is None else int(size)
    t = _radii(space, r, n, rng)
    pts = _directions(space.dim, n, rng) * chart_radius(space, t)[:, None]
    if space.hyperbolic:
        pts = clamp(space, mobius_from_origin(pts, center))
    else:
        pts = pts + center
    return pts[0] if size is None else pts


def sample_uniform_balls(space, centers, r, rng):
    """One uniform point in B(c, r) for every row c of ``centers``."""
    centers = check_points(space, np.atleast_2d(centers))
    n = len(centers)
    t = _radii(space, r, n, rng)
    pts = _directions(space.dim, n, rng) * chart_radius(space, t)[:, None]
    if not space.hyperbolic:
        return pts + centers
    z = pts[:, 0] + 1j * pts[:, 1]
    a = centers[:, 0] + 1j * centers[:, 1]
    w = (z + a) / (1.0 + np.conj(a) * z)
    return clamp(space, np.stack([w.real, w.imag], axis=1))


def sample_polar(space, r, n, rng):
    """Uniform points in B(0, r) plus their metric radii and angles (2D)."""
    t = _radii(space, r, n, rng)
    if space.dim == 2:
        phi = rng.uniform(0.0, 2 * math.pi, n)
        rho = chart_radius(space, t)
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)
    else:
        pts = _directions(space.dim, n, rng) * t[:, None]
    return clamp(space, pts)


def mobius_from_origin(w, a):
    """The disk automorphism w -> (w + a)/(1 + conj(a) w), sending 0 to a."""
    w = np.asarray(w, dtype=float)
    z = w[..., 0] + 1j * w[..., 1]
    ac = complex(a[0], a[1])
    out = (z + ac) / (1.0 + ac.conjugate() * z)
    return np.stack([out.real, out.imag], axis=-1)


# ---------------------------------------------------------------- isometries


class Isometry:
    """Isometry of one of the supported spaces.

    Euclidean: x -> Q x + t.  Disk: z -> M(conj z or z) where M is a matrix
    in SU(1,1) acting by linear fractional maps.
    """

    def __init__(self, space, Q=None, t=None, M=None, reflect=False):
        self.space = space
        if space.hyperbolic:
            self.M = np.eye(2, dtype=complex) if M is None else np.asarray(M, dtype=complex)
            self.reflect = bool(reflect)
        else:
            self.Q = np.eye(space.dim) if Q is None else np.asarray(Q, dtype=float)
            self.t = np.zeros(space.dim) if t is None else np.asarray(t, dtype=float)

    @classmethod
    def disk(cls, theta=0.0, a=(0.0, 0.0), reflect=False):
        """z -> e^{i theta} (w + a)/(1 + conj(a) w), w = z or conj z."""
        ac = complex(a[0], a[1])
        if abs(ac) >= 1:
            raise InputError("Mobius centre must lie in the open disk")
        s = 1.0 / math.sqrt(1.0 - abs(ac) ** 2)
        e = complex(math.cos(theta / 2), math.sin(theta / 2))
        M = s * np.array([[e, e * ac], [e.conjugate() * ac.conjugate(), e.conjugate()]])
        return cls(HYPERBOLIC_PLANE, M=M, reflect=reflect)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if not self.space.hyperbolic:
            return p @ self.Q.T + self.t
        z = p[..., 0] + 1j * p[..., 1]
        if self.reflect:
            z = np.conj(z)
        (a, b), (c, d) = self.M
        w = (a * z + b) / (c * z + d)
        return clamp(self.space, np.stack([w.real, w.imag], axis=-1))

    def compose(self, other):
        """self after other."""
        if not self.space.hyperbolic:
            return Isometry(self.space, Q=self.Q @ other.Q, t=self.Q @ other.t + self.t)
        inner = np.conj(other.M) if self.reflect else other.M
        return Isometry(self.space, M=self.M @ inner, reflect=self.reflect ^ other.reflect)

    def inverse(self):
        if not self.space.hyperbolic:
            return Isometry(self.space, Q=self.Q.T, t=-self.Q.T @ self.t)
        Minv = np.linalg.inv(self.M)
        if self.reflect:
            # z -> M conj(z) inverts to w -> conj(M^{-1} w) = conj(M^{-1}) conj(w)
            return Isometry(self.space, M=np.conj(Minv), reflect=True)
        return Isometry(self.space, M=Minv)


def random_rotation(dim, rng):
    """Haar-distributed element of SO(dim)."""
    A = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def sample_isometry_to(space, target, rng):
    """An isometry sending the origin to ``target`` with uniform rotation part."""
    target = check_points(space, target)
    if space.hyperbolic:
        theta = rng.uniform(0.0, 2 * math.pi)
        # M_a o R_theta: rotate first, then move the origin to the target
        rot = Isometry.disk(theta=theta)
        move = Isometry.disk(a=target)
        return move.compose(rot)
    return Isometry(space, Q=random_rotation(space.dim, rng), t=target.copy())
