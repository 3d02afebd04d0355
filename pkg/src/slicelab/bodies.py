"""Convex-body catalog and the membership / support / gauge oracles.

Every body works on arrays of points of shape ``(..., n)``; the oracle
methods are vectorised over the leading axes.  Bodies are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog, minimize

GAUGE_RTOL = 1e-8
_BISECT_ITERS = 48


class OracleUnavailable(NotImplementedError):
    """Raised when a body cannot answer an oracle query exactly."""


class MalformedBody(ValueError):
    pass


def ball_volume(n: int) -> float:
    """Volume of the Euclidean unit ball in R^n."""
    return math.exp(0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1))


def unit_volume_radius(n: int) -> float:
    """Radius r_n of the Euclidean ball of volume one."""
    return math.exp(-(0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1)) / n)


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AffineMap:
    """Invertible affine map ``x -> matrix @ x + translation``."""

    matrix: np.ndarray = field(compare=False)
    translation: np.ndarray = field(default=None, compare=False)
    det_abs: float = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        n = m.shape[0]
        t = np.zeros(n) if self.translation is None else np.array(self.translation, dtype=float)
        if t.shape != (n,):
            raise ValueError("translation has wrong shape")
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > 1e12:
            raise MalformedBody("affine map is singular")
        det = abs(float(np.linalg.det(m)))
        if self.det_abs is not None and abs(self.det_abs - det) > 1e-10 * det:
            raise ValueError("det_abs does not match the matrix")
        m.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "det_abs", det)
        inv = np.linalg.inv(m)
        inv.setflags(write=False)
        object.__setattr__(self, "_inverse", inv)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse_matrix(self) -> np.ndarray:
        return self._inverse

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def diagonal(cls, d, translation=None):
        return cls(np.diag(np.asarray(d, dtype=float)), translation)

    @classmethod
    def scaling(cls, s, n):
        return cls(s * np.eye(n))

    @classmethod
    def translation_map(cls, t):
        t = np.asarray(t, dtype=float)
        return cls(np.eye(t.size), t)

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.matrix.T + self.translation

    def inverse(self, x):
        return (np.asarray(x, dtype=float) - self.translation) @ self._inverse.T

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """The map ``self o inner``."""
        return AffineMap(self.matrix @ inner.matrix, self.matrix @ inner.translation + self.translation)

    def is_identity(self, tol=0.0) -> bool:
        return (np.max(np.abs(self.matrix - np.eye(self.n))) <= tol
                and np.max(np.abs(self.translation)) <= tol)

    def similarity_factor(self) -> Optional[float]:
        """Return ``s`` if the linear part is ``s`` times an orthogonal matrix."""
        g = self.matrix.T @ self.matrix
        s2 = g[0, 0]
        if np.allclose(g, s2 * np.eye(self.n), rtol=1e-10, atol=1e-12):
            return math.sqrt(s2)
        return None

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "translation": self.translation.tolist(),
                "det_abs": self.det_abs}


class Body:
    """Base class of all convex bodies.

    Subclasses provide ``contains``, ``support_raw`` and ``radius``; the
    remaining oracles have generic fallbacks (bisection, hit-and-run).
    """

    n: int
    origin_symmetric: bool = False
    unconditional: bool = False
    isotropic_by_symmetry: bool = False

    # -- oracles --------------------------------------------------------
    def contains(self, x, tol: float = 1e-12):
        raise NotImplementedError

    def support_raw(self, y):
        """Support function at arbitrary (not necessarily unit) vectors."""
        raise NotImplementedError

    def gauge(self, x):
        return _gauge_by_bisection(self, x)

    def radius(self) -> float:
        """Upper bound for max ||x||_2 over the body (exact for the catalog)."""
        raise NotImplementedError

    def volume(self) -> Optional[float]:
        """Exact volume when known in closed form, else ``None``."""
        return None

    def nearest_point(self, x):
        raise OracleUnavailable(f"no nearest-point oracle for {type(self).__name__}")

    def has_nearest_point(self) -> bool:
        try:
            self.nearest_point(np.zeros(self.n))
        except OracleUnavailable:
            return False
        return True

    def has_gauge(self) -> bool:
        """True when the origin is interior, so the gauge is finite."""
        return bool(self.contains(np.zeros(self.n)))

    def chord(self, x, d):
        """Parameters ``(t_minus, t_plus)`` with ``x + t d`` on the boundary.

        ``x`` has shape (m, n) and is inside, ``d`` unit directions.
        """
        return _chord_by_bisection(self, x, d)

    def sample_exact(self, rng, count):
        """Exact uniform sampler or ``None`` if this shape has none."""
        return None

    def boundary_level(self, x):
        """Continuous function, <= 0 exactly on the body, or ``None``."""
        return None

    def interior_point(self):
        return np.zeros(self.n)

    @property
    def volume_normalized(self) -> bool:
        v = self.volume()
        return v is not None and abs(v - 1.0) < 1e-9

    def scaled(self, lam: float) -> "Body":
        return AffineImage(self, AffineMap.scaling(lam, self.n))

    def second_moment_exact(self) -> Optional[float]:
        """E <x, e_1>^2 under the uniform probability measure, if known."""
        return None

    def isotropic_constant_exact(self) -> Optional[float]:
        """Closed-form L_K for catalog shapes in isotropic position."""
        m2 = self.second_moment_exact()
        v = self.volume()
        if m2 is None or v is None or not self.isotropic_by_symmetry:
            return None
        return math.sqrt(m2) / v ** (1.0 / self.n)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _gauge_by_bisection(body: Body, x):
    """inf{lam > 0 : x in lam K} by bisection on membership."""
    x = _as_points(x, body.n)
    flat = x.reshape(-1, body.n)
    norms = np.linalg.norm(flat, axis=1)
    out = np.zeros(len(flat))
    nz = norms > 0
    if not nz.any():
        return out.reshape(x.shape[:-1])
    if not body.contains(np.zeros(body.n)):
        raise MalformedBody("gauge requires the origin in the interior")
    p = flat[nz]
    # lower bound from the bounding radius, upper bound by doubling
    lo = norms[nz] / body.radius()
    hi = lo.copy() * 2.0
    for _ in range(200):
        bad = ~body.contains(p / hi[:, None])
        if not bad.any():
            break
        hi[bad] *= 2.0
    else:
        raise MalformedBody("origin is not an interior point")
    while True:
        mid = 0.5 * (lo + hi)
        inside = body.contains(p / mid[:, None])
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
        if np.all(hi - lo <= GAUGE_RTOL * hi):
            break
    out[nz] = 0.5 * (lo + hi)
    return out.reshape(x.shape[:-1])


def _chord_by_bisection(body: Body, x, d):
    x = np.atleast_2d(x)
    d = np.atleast_2d(d)
    span = 2.0 * body.radius()
    if body.boundary_level(x[:1]) is not None:
        return _chord_by_level(body, x, d, span)

    def edge(sign):
        lo = np.zeros(len(x))
        hi = np.full(len(x), span)
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            inside = body.contains(x + sign * mid[:, None] * d)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return lo

    return -edge(-1.0), edge(1.0)


def _chord_by_level(body, x, d, span, tol=1e-10, max_iter=80):
    """Chord endpoints as roots of the boundary level (Illinois regula falsi).

    Only unconverged rows are refined; the returned endpoint is the inner
    bracket end, so it is always inside the body.
    """

    def edge(sign):
        m = len(x)
        a = np.zeros(m)
        b = np.full(m, span)
        fa = body.boundary_level(x)
        fb = body.boundary_level(x + sign * b[:, None] * d)
        ga = fa.copy()  # level at the inner end (fa is rescaled by the Illinois step)
        side = np.zeros(m, dtype=int)
        act = np.flatnonzero(fb > 0)
        a[fb <= 0] = span
        for _ in range(max_iter):
            if act.size == 0:
                break
            aa, bb, ffa, ffb = a[act], b[act], fa[act], fb[act]
            c = (aa * ffb - bb * ffa) / (ffb - ffa)
            c = np.where(np.isfinite(c) & (c > aa) & (c < bb), c, 0.5 * (aa + bb))
            fc = body.boundary_level(x[act] + sign * c[:, None] * d[act])
            left = fc > 0
            sd = side[act]
            b[act] = np.where(left, c, bb)
            a[act] = np.where(left, aa, c)
            fa[act] = np.where(left, np.where(sd == -1, ffa / 2, ffa), fc)
            fb[act] = np.where(left, fc, np.where(sd == 1, ffb / 2, ffb))
            ga[act] = np.where(left, ga[act], fc)
            side[act] = np.where(left, -1, 1)
            # the level is convex along the line, so a near-zero level at the
            # inner end means it is already on the boundary to within tolerance
            done = (b[act] - a[act] <= tol * span) | (ga[act] >= -tol * span)
            act = act[~done]
        return a

    return -edge(-1.0), edge(1.0)


def _cube_ball_edge(x, e, h, r):
    """Largest t >= 0 with dist(x + t e, [-h, h]^n) <= r.

    Along the ray the squared distance is a convex piecewise quadratic
    ``A t^2 + 2 B t + C``; a coordinate adds or drops its term when it
    crosses +-h.  The events are swept in time order and the root solved
    exactly on the first piece where the value exceeds r^2.
    """
    m, n = x.shape
    # quadratic coefficients of (x_i - h + t e_i)^2 and (x_i + h + t e_i)^2
    plus = np.stack([e * e, (x - h) * e, (x - h) ** 2], axis=-1)
    minus = np.stack([e * e, (x + h) * e, (x + h) ** 2], axis=-1)
    coef = (np.where((x > h)[..., None], plus, 0.0) + np.where((x < -h)[..., None], minus, 0.0)).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = (h - x) / e
        tm = (-h - x) / e
    # crossing +h: entering the + side if e > 0, leaving otherwise; mirrored for -h
    dp = np.where((e > 0)[..., None], plus, -plus)
    dm = np.where((e < 0)[..., None], minus, -minus)
    # trailing sentinel at t = inf so the last (unbounded) piece is always found
    times = np.concatenate([tp, tm, np.full((m, 1), np.inf)], axis=1)
    delta = np.concatenate([dp, dm, np.zeros((m, 1, 3))], axis=1)
    valid = np.isfinite(times) & (times > 0)
    times = np.where(valid, times, np.inf)
    delta = np.where(valid[..., None], delta, 0.0)
    order = np.argsort(times, axis=1)
    times = np.take_along_axis(times, order, axis=1)
    delta = np.take_along_axis(delta, order[..., None], axis=1)
    before = coef[:, None, :] + np.concatenate([np.zeros((m, 1, 3)), np.cumsum(delta, axis=1)[:, :-1]], axis=1)
    with np.errstate(invalid="ignore"):
        g = before[..., 0] * times ** 2 + 2 * before[..., 1] * times + before[..., 2]
    g = np.where(np.isfinite(times), g, np.inf)
    k = np.argmax(g > r * r, axis=1)
    rows = np.arange(m)
    A, B, C = (before[rows, k, j] for j in range(3))
    C = C - r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (-B + np.sqrt(np.maximum(B * B - A * C, 0.0))) / A
    lo = np.where(k > 0, times[rows, np.maximum(k - 1, 0)], 0.0)
    t = np.where(np.isfinite(t), t, lo)
    return np.clip(t, lo, times[rows, k])


def _chord_halfspaces(a, b, x, d):
    """Exact chord of {z : a z <= b} through x along d."""
    slack = b[None, :] - x @ a.T
    rate = d @ a.T
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = slack / rate
    t_plus = np.where(rate > 1e-15, tt, np.inf).min(axis=1)
    t_minus = np.where(rate < -1e-15, tt, -np.inf).max(axis=1)
    return np.maximum(t_minus, -1e300), np.minimum(t_plus, 1e300)


# ----------------------------------------------------------------------
# catalog shapes


@dataclass(frozen=True)
class EuclideanBall(Body):
    n: int
    r: float = 1.0

    origin_symmetric = True
    unconditional = True
    isotropic_by_symmetry = True

    def __post_init__(self):
        if self.n < 1 or self.r <= 0:
            raise MalformedBody("ball needs n >= 1 and positive radius")

    def contains(self, x, tol=1e-12):
        x = _as_points(x, self.n)
        return np.linalg.norm(x, axis=-1) <= self.r * (1 + tol)

    def support_raw(self, y):
        return self.r * np.linalg.norm(_as_points(y, self.n), axis=-1)

    def gauge(self, x):
        return np.linalg.norm(_as_points(x, self.n), axis=-1) / self.r

    def radius(self):
        return self.r

    def volume(self):
        return ball_volume(self.n) * self.r ** self.n

    def nearest_point(self, x):
        x = _as_points(x, self.n)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x * np.minimum(1.0, self.r / np.maximum(r, 1e-300))

    def chord(self, x, d):
        b = np.sum(x * d, axis=1)
        c = np.sum(x * x, axis=1) - self.r ** 2
        disc = np.sqrt(np.maximum(b * b - c, 0.0))
        return -b - disc, -b + disc

    def sample_exact(self, rng, count):
        g = rng.standard_normal((count, self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = rng.random(count) ** (1.0 / self.n)
        return g * (self.r * u)[:, None]

    def scaled(self, lam):
        return EuclideanBall(self.n, self.r * lam)

    def second_moment_exact(self):
        return self.r ** 2 / (self.n + 2)

    def to_dict(self):
        return {"shape": "ball", "n": self.n, "radius": self.r}


@dataclass(frozen=True)
class Cube(Body):
    """The cube [-side/2, side/2]^n."""

    n: int
    side: float = 1.0

    origin_symmetric = True
    unconditional = True
    isotropic_by_symmetry = True

    def __post_init__(self):
        if self.n < 1 or self.side <= 0:
            raise MalformedBody("cube needs n >= 1 and positive side")

    def contains(self, x, tol=1e-12):
        x = _as_points(x, self.n)
        return np.max(np.abs(x), axis=-1) <= 0.5 * self.side * (1 + tol)

    def support_raw(self, y):
        return 0.5 * self.side * np.sum(np.abs(_as_points(y, self.n)), axis=-1)

    def gauge(self, x):
        return 2.0 * np.max(np.abs(_as_points(x, self.n)), axis=-1) / self.side

    def radius(self):
        return 0.5 * self.side * math.sqrt(self.n)

    def volume(self):
        return self.side ** self.n

    def nearest_point(self, x):
        h = 0.5 * self.side
        return np.clip(_as_points(x, self.n), -h, h)

    def chord(self, x, d):
        h = 0.5 * self.side
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (h - x) / d
            t2 = (-h - x) / d
        hi = np.where(d != 0, np.maximum(t1, t2), np.inf).min(axis=1)
        lo = np.where(d != 0, np.minimum(t1, t2), -np.inf).max(axis=1)
        return lo, hi

    def sample_exact(self, rng, count):
        return (rng.random((count, self.n)) - 0.5) * self.side

    def scaled(self, lam):
        return Cube(self.n, self.side * lam)

    def second_moment_exact(self):
        return self.side ** 2 / 12.0

    def to_dict(self):
        return {"shape": "cube", "n": self.n, "side": self.side}


def _project_l1(x, s):
    """Euclidean projection of rows of x onto the l1 ball of radius s."""
    x = np.atleast_2d(x)
    out = x.copy()
    a = np.abs(x)
    outside = a.sum(axis=1) > s
    if outside.any():
        v = a[outside]
        u = -np.sort(-v, axis=1)
        css = np.cumsum(u, axis=1) - s
        idx = np.arange(1, v.shape[1] + 1)
        cond = u - css / idx > 0
        rho = v.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
        theta = css[np.arange(len(v)), rho] / (rho + 1)
        out[outside] = np.sign(x[outside]) * np.maximum(v - theta[:, None], 0.0)
    return out


@dataclass(frozen=True)
class CrossPolytope(Body):
    """The l1 ball {||x||_1 <= scale}."""

    n: int
    scale: float = 1.0

    origin_symmetric = True
    unconditional = True
    isotropic_by_symmetry = True

    def __post_init__(self):
        if self.n < 1 or self.scale <= 0:
            raise MalformedBody("cross-polytope needs n >= 1 and positive scale")

    def contains(self, x, tol=1e-12):
        return np.sum(np.abs(_as_points(x, self.n)), axis=-1) <= self.scale * (1 + tol)

    def support_raw(self, y):
        return self.scale * np.max(np.abs(_as_points(y, self.n)), axis=-1)

    def gauge(self, x):
        return np.sum(np.abs(_as_points(x, self.n)), axis=-1) / self.scale

    def radius(self):
        return self.scale

    def volume(self):
        return math.exp(self.n * math.log(2 * self.scale) - math.lgamma(self.n + 1))

    def nearest_point(self, x):
        x = _as_points(x, self.n)
        return _project_l1(x.reshape(-1, self.n), self.scale).reshape(x.shape)

    def boundary_level(self, x):
        return self.gauge(x) - 1.0

    def sample_exact(self, rng, count):
        return _sample_lp(rng, count, self.n, 1.0) * self.scale

    def scaled(self, lam):
        return CrossPolytope(self.n, self.scale * lam)

    def second_moment_exact(self):
        return 2.0 * self.scale ** 2 / ((self.n + 1) * (self.n + 2))

    def to_dict(self):
        return {"shape": "cross", "n": self.n, "scale": self.scale}


def _sample_lp(rng, count, n, p):
    """Uniform points in the unit l_p ball (generalized-normal scheme).

    With g_i of density proportional to exp(-|t|^p) and an independent
    standard exponential Z, g / (||g||_p^p + Z)^(1/p) is uniform.
    """
    mag = rng.gamma(1.0 / p, 1.0, size=(count, n)) ** (1.0 / p)
    sign = np.where(rng.random((count, n)) < 0.5, -1.0, 1.0)
    g = sign * mag
    z = rng.exponential(1.0, size=count)
    denom = (np.sum(mag ** p, axis=1) + z) ** (1.0 / p)
    return g / denom[:, None]


@dataclass(frozen=True)
class LpBall(Body):
    """The l_p ball {||x||_p <= scale}, 1 <= p < inf."""

    n: int
    p: float = 2.0
    scale: float = 1.0

    origin_symmetric = True
    unconditional = True
    isotropic_by_symmetry = True

    def __post_init__(self):
        if self.n < 1 or self.scale <= 0 or not (1.0 <= self.p < np.inf):
            raise MalformedBody("l_p ball needs n >= 1, 1 <= p < inf, positive scale")

    def _norm(self, x, p):
        return np.sum(np.abs(x) ** p, axis=-1) ** (1.0 / p)

    def contains(self, x, tol=1e-12):
        return self._norm(_as_points(x, self.n), self.p) <= self.scale * (1 + tol)

    def support_raw(self, y):
        y = _as_points(y, self.n)
        if self.p == 1.0:
            return self.scale * np.max(np.abs(y), axis=-1)
        dual = self.p / (self.p - 1.0)
        return self.scale * self._norm(y, dual)

    def gauge(self, x):
        return self._norm(_as_points(x, self.n), self.p) / self.scale

    def radius(self):
        return self.scale * self.n ** max(0.0, 0.5 - 1.0 / self.p)

    def volume(self):
        p, n = self.p, self.n
        return math.exp(n * (math.log(2 * self.scale) + math.lgamma(1 + 1 / p)) - math.lgamma(1 + n / p))

    def boundary_level(self, x):
        return self.gauge(x) - 1.0

    def sample_exact(self, rng, count):
        return _sample_lp(rng, count, self.n, self.p) * self.scale

    def scaled(self, lam):
        return LpBall(self.n, self.p, self.scale * lam)

    def second_moment_exact(self):
        p, n = self.p, self.n
        logm = (math.lgamma(3 / p) + math.lgamma(1 + n / p)
                - math.lgamma(1 / p) - math.lgamma(1 + (n + 2) / p))
        return self.scale ** 2 * math.exp(logm)

    def to_dict(self):
        return {"shape": "lp", "n": self.n, "p": self.p, "scale": self.scale}


def regular_simplex_vertices(n: int) -> np.ndarray:
    """Vertices (rows) of the centered regular simplex with circumradius 1."""
    e = np.eye(n + 1) - 1.0 / (n + 1)
    # orthonormal basis of the hyperplane sum(x) = 0
    q, _ = np.linalg.qr(np.vstack([np.ones(n + 1), np.eye(n + 1)[:n]]).T)
    basis = q[:, 1:n + 1]
    v = e @ basis
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class Simplex(Body):
    """Regular simplex centered at the origin; ``scale`` is the circumradius."""

    n: int
    scale: float = 1.0

    isotropic_by_symmetry = True

    def __post_init__(self):
        if self.n < 1 or self.scale <= 0:
            raise MalformedBody("simplex needs n >= 1 and positive scale")
        object.__setattr__(self, "_vertices", regular_simplex_vertices(self.n) * self.scale)

    @property
    def vertices(self):
        return self._vertices

    @property
    def origin_symmetric(self):
        return self.n == 1

    def _facets(self):
        # facet opposite v_i has outward normal -v_i/|v_i| and offset R/n
        a = -self._vertices / self.scale
        b = np.full(self.n + 1, self.scale / self.n)
        return a, b

    def contains(self, x, tol=1e-12):
        a, b = self._facets()
        return np.all(_as_points(x, self.n) @ a.T <= b * (1 + tol), axis=-1)

    def support_raw(self, y):
        return np.max(_as_points(y, self.n) @ self._vertices.T, axis=-1)

    def gauge(self, x):
        a, b = self._facets()
        return np.maximum(np.max(_as_points(x, self.n) @ a.T / b, axis=-1), 0.0)

    def radius(self):
        return self.scale

    def volume(self):
        n = self.n
        edge = self.scale * math.sqrt(2.0 * (n + 1) / n)
        return math.exp(n * math.log(edge) - math.lgamma(n + 1) + 0.5 * (math.log(n + 1) - n * math.log(2)))

    def chord(self, x, d):
        a, b = self._facets()
        return _chord_halfspaces(a, b, x, d)

    def sample_exact(self, rng, count):
        w = rng.exponential(1.0, size=(count, self.n + 1))
        w /= w.sum(axis=1, keepdims=True)
        return w @ self._vertices

    def scaled(self, lam):
        return Simplex(self.n, self.scale * lam)

    def second_moment_exact(self):
        return self.scale ** 2 / (self.n * (self.n + 2))

    def to_dict(self):
        return {"shape": "simplex", "n": self.n, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class HPolytope(Body):
    """Intersection of half-spaces {x : <a_i, x> <= b_i} with unit a_i."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.normals, dtype=float))
        b = np.array(self.offsets, dtype=float).ravel()
        if a.shape[0] != b.size:
            raise MalformedBody("normals and offsets disagree in count")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise MalformedBody("zero normal")
        a = a / norms[:, None]
        b = b / norms
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)
        box = np.array([self._lp(s * e) for e in np.eye(a.shape[1]) for s in (1.0, -1.0)])
        object.__setattr__(self, "_radius", float(np.linalg.norm(np.maximum(box[0::2], box[1::2]))))

    @property
    def n(self):
        return self.normals.shape[1]

    @property
    def origin_symmetric(self):
        a, b = self.normals, self.offsets
        for ai, bi in zip(a, b):
            match = np.all(np.isclose(a, -ai), axis=1) & np.isclose(b, bi)
            if not match.any():
                return False
        return True

    def _lp(self, y):
        res = linprog(-np.asarray(y, dtype=float), A_ub=self.normals, b_ub=self.offsets,
                      bounds=[(None, None)] * self.n, method="highs")
        if res.status == 3:
            raise MalformedBody("polytope is unbounded in the requested direction")
        if res.status != 0:
            raise MalformedBody(f"support LP failed: {res.message}")
        return -res.fun

    def contains(self, x, tol=1e-12):
        x = _as_points(x, self.n)
        return np.all(x @ self.normals.T <= self.offsets + tol * np.abs(self.offsets), axis=-1)

    def support_raw(self, y):
        y = _as_points(y, self.n)
        flat = y.reshape(-1, self.n)
        return np.array([self._lp(v) for v in flat]).reshape(y.shape[:-1])

    def gauge(self, x):
        if np.any(self.offsets <= 0):
            raise MalformedBody("gauge requires the origin in the interior")
        x = _as_points(x, self.n)
        return np.maximum(np.max(x @ self.normals.T / self.offsets, axis=-1), 0.0)

    def radius(self):
        return self._radius

    def chord(self, x, d):
        return _chord_halfspaces(self.normals, self.offsets, x, d)

    def nearest_point(self, x):
        x = _as_points(x, self.n)
        flat = x.reshape(-1, self.n)
        out = flat.copy()
        inside = self.contains(flat)
        cons = {"type": "ineq", "fun": lambda z: self.offsets - self.normals @ z,
                "jac": lambda z: -self.normals}
        for i in np.flatnonzero(~inside):
            p = flat[i]
            res = minimize(lambda z: 0.5 * np.sum((z - p) ** 2), np.zeros(self.n),
                           jac=lambda z: z - p, constraints=[cons], method="SLSQP",
                           options={"ftol": 1e-14, "maxiter": 500})
            out[i] = res.x
        return out.reshape(x.shape)

    def to_dict(self):
        return {"shape": "hpoly", "n": self.n, "normals": self.normals.tolist(),
                "offsets": self.offsets.tolist()}


@dataclass(frozen=True, eq=False)
class AffineImage(Body):
    """T(K) for an invertible affine map T."""

    inner: Body
    map: AffineMap
    known_volume: Optional[float] = None
    volume_estimate: Optional[object] = None

    def __post_init__(self):
        if self.map.n != self.inner.n:
            raise ValueError("map and body dimensions differ")

    @property
    def n(self):
        return self.inner.n

    @property
    def origin_symmetric(self):
        return self.inner.origin_symmetric and not np.any(self.map.translation)

    @property
    def unconditional(self):
        m = self.map.matrix
        return (self.inner.unconditional and not np.any(self.map.translation)
                and np.allclose(m, np.diag(np.diag(m))))

    @property
    def isotropic_by_symmetry(self):
        s = self.map.similarity_factor()
        return s is not None and self.inner.isotropic_by_symmetry and not np.any(self.map.translation)

    def contains(self, x, tol=1e-12):
        return self.inner.contains(self.map.inverse(_as_points(x, self.n)), tol)

    def support_raw(self, y):
        y = _as_points(y, self.n)
        return self.inner.support_raw(y @ self.map.matrix) + y @ self.map.translation

    def gauge(self, x):
        if not np.any(self.map.translation):
            return self.inner.gauge(_as_points(x, self.n) @ self.map.inverse_matrix.T)
        return _gauge_by_bisection(self, x)

    def radius(self):
        return np.linalg.norm(self.map.matrix, 2) * self.inner.radius() + np.linalg.norm(self.map.translation)

    def volume(self):
        if self.known_volume is not None:
            return self.known_volume
        v = self.inner.volume()
        return None if v is None else v * self.map.det_abs

    def nearest_point(self, x):
        if self.map.similarity_factor() is None:
            raise OracleUnavailable("nearest point of a non-similarity image")
        x = _as_points(x, self.n)
        return self.map(self.inner.nearest_point(self.map.inverse(x)))

    def chord(self, x, d):
        # chord parameters are affine invariant
        return self.inner.chord(self.map.inverse(x), d @ self.map.inverse_matrix.T)

    def sample_exact(self, rng, count):
        pts = self.inner.sample_exact(rng, count)
        return None if pts is None else self.map(pts)

    def interior_point(self):
        return self.map(self.inner.interior_point())

    def second_moment_exact(self):
        s = self.map.similarity_factor()
        m2 = self.inner.second_moment_exact()
        if s is None or m2 is None or np.any(self.map.translation):
            return None
        return s * s * m2

    def scaled(self, lam):
        kv = None if self.known_volume is None else self.known_volume * lam ** self.n
        return AffineImage(self.inner, AffineMap.scaling(lam, self.n).compose(self.map), kv)

    def to_dict(self):
        return {"shape": "affine", "n": self.n, "inner": self.inner.to_dict(), "map": self.map.to_dict()}


def _steiner_cube_ball(n, side, r):
    return sum(math.comb(n, k) * side ** k * ball_volume(n - k) * r ** (n - k) for k in range(n + 1))


@dataclass(frozen=True, eq=False)
class MinkowskiSum(Body):
    """A + B, with membership through nearest-point oracles."""

    first: Body
    second: Body
    feasibility_tol: float = 1e-9

    def __post_init__(self):
        if self.first.n != self.second.n:
            raise ValueError("summands live in different dimensions")

    @property
    def n(self):
        return self.first.n

    @property
    def origin_symmetric(self):
        return self.first.origin_symmetric and self.second.origin_symmetric

    @property
    def unconditional(self):
        return self.first.unconditional and self.second.unconditional

    @property
    def isotropic_by_symmetry(self):
        a, b = self.first, self.second
        return (a.isotropic_by_symmetry and a.origin_symmetric and isinstance(b, EuclideanBall)) or \
               (b.isotropic_by_symmetry and b.origin_symmetric and isinstance(a, EuclideanBall))

    def _ball_and_other(self):
        if isinstance(self.second, EuclideanBall):
            return self.second, self.first
        if isinstance(self.first, EuclideanBall):
            return self.first, self.second
        return None, None

    def contains(self, x, tol=1e-12):
        x = _as_points(x, self.n)
        ball, other = self._ball_and_other()
        if ball is not None:
            if not other.has_nearest_point():
                raise OracleUnavailable(f"nearest point of {type(other).__name__} unavailable")
            dist = np.linalg.norm(x - other.nearest_point(x), axis=-1)
            return dist <= ball.r * (1 + tol) + tol
        if not (self.first.has_nearest_point() and self.second.has_nearest_point()):
            raise OracleUnavailable("Minkowski sum membership needs nearest-point oracles")
        return self._alternating_projections(x)

    def _alternating_projections(self, x, max_iter=2000):
        # x in A + B  iff  A and x - B intersect
        flat = x.reshape(-1, self.n)
        a = self.first.nearest_point(flat)
        gap = np.full(len(flat), np.inf)
        for _ in range(max_iter):
            b = flat - self.second.nearest_point(flat - a)
            a_new = self.first.nearest_point(b)
            gap = np.linalg.norm(a_new - b, axis=1)
            moved = np.linalg.norm(a_new - a, axis=1)
            a = a_new
            if np.all((gap <= self.feasibility_tol) | (moved <= 1e-14)):
                break
        return (gap <= self.feasibility_tol * max(1.0, self.radius())).reshape(x.shape[:-1])

    def chord(self, x, d):
        ball, other = self._ball_and_other()
        if ball is not None and isinstance(other, Cube):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            d = np.atleast_2d(np.asarray(d, dtype=float))
            h = other.side / 2
            return -_cube_ball_edge(x, -d, h, ball.r), _cube_ball_edge(x, d, h, ball.r)
        if self._as_ball() is not None:
            return self._as_ball().chord(x, d)
        return super().chord(x, d)

    def boundary_level(self, x):
        ball, other = self._ball_and_other()
        if ball is None or not other.has_nearest_point():
            return None
        return np.linalg.norm(x - other.nearest_point(x), axis=-1) - ball.r

    def support_raw(self, y):
        return self.first.support_raw(y) + self.second.support_raw(y)

    def radius(self):
        return self.first.radius() + self.second.radius()

    def volume(self):
        ball, other = self._ball_and_other()
        if ball is None:
            return None
        if isinstance(other, EuclideanBall):
            return ball_volume(self.n) * (ball.r + other.r) ** self.n
        if isinstance(other, Cube):
            return _steiner_cube_ball(self.n, other.side, ball.r)
        return None

    def nearest_point(self, x):
        ball, other = self._ball_and_other()
        if ball is None:
            raise OracleUnavailable("nearest point of a general Minkowski sum")
        x = _as_points(x, self.n)
        p = other.nearest_point(x)
        diff = x - p
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        step = np.minimum(dist, ball.r)
        return p + diff * (step / np.maximum(dist, 1e-300))

    def interior_point(self):
        return self.first.interior_point() + self.second.interior_point()

    def _as_ball(self):
        """The sum itself as a ball when both summands are centred balls."""
        a, b = self.first, self.second
        if isinstance(a, EuclideanBall) and isinstance(b, EuclideanBall):
            return EuclideanBall(self.n, a.r + b.r)
        return None

    def sample_exact(self, rng, count):
        ball = self._as_ball()
        return None if ball is None else ball.sample_exact(rng, count)

    def second_moment_exact(self):
        ball = self._as_ball()
        return None if ball is None else ball.second_moment_exact()

    def to_dict(self):
        return {"shape": "minkowski", "n": self.n, "first": self.first.to_dict(),
                "second": self.second.to_dict()}


@dataclass(frozen=True, eq=False)
class OracleBody(Body):
    """A body known only through a (vectorised) membership predicate."""

    n: int
    predicate: Callable
    bounding_radius: float
    sampler: Optional[Callable] = None
    known_volume: Optional[float] = None
    symmetric: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.bounding_radius > 0 and np.isfinite(self.bounding_radius)):
            raise MalformedBody("bounding radius must be finite and positive")

    @property
    def origin_symmetric(self):
        return self.symmetric

    def contains(self, x, tol=1e-12):
        x = _as_points(x, self.n)
        flat = x.reshape(-1, self.n)
        return np.asarray(self.predicate(flat), dtype=bool).reshape(x.shape[:-1])

    def support_raw(self, y):
        raise OracleUnavailable("oracle bodies have no support function")

    def radius(self):
        return self.bounding_radius

    def volume(self):
        return self.known_volume

    def sample_exact(self, rng, count):
        return None if self.sampler is None else self.sampler(rng, count)

    def to_dict(self):
        return {"shape": "oracle", "n": self.n, "derived": True, "provenance": self.provenance}


# ----------------------------------------------------------------------
# module-level oracles


def membership(body: Body, x):
    """True iff x lies in the body."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("membership query must be finite")
    return body.contains(x)


def support(body: Body, direction):
    """h_K(theta) for unit directions theta."""
    d = _as_points(direction, body.n)
    norms = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("support() expects unit directions; normalize first")
    return body.support_raw(d)


def gauge(body: Body, x):
    """Minkowski functional inf{lam > 0 : x in lam K}."""
    return body.gauge(x)


def volume_normalize(body: Body, count: int = 200_000, seed: int = 0) -> Body:
    """Homothet of volume one.

    Closed form for catalog shapes; otherwise the scale comes from a
    Monte-Carlo volume estimate, which is attached to the result.
    """
    v = body.volume()
    if v is not None:
        if v <= 0:
            raise MalformedBody("degenerate body has zero volume")
        lam = v ** (-1.0 / body.n)
        out = body.scaled(lam)
        if isinstance(out, AffineImage) and out.volume() is None:
            out = AffineImage(out.inner, out.map, 1.0)
        return out
    est = estimate_volume(body, count, seed)
    if est.value <= 0:
        raise MalformedBody("degenerate body has zero volume")
    lam = est.value ** (-1.0 / body.n)
    return AffineImage(body, AffineMap.scaling(lam, body.n), 1.0, est)


def apply_affine(body: Body, amap: AffineMap) -> Body:
    if amap.is_identity():
        return body
    return AffineImage(body, amap)


def estimate_volume(body: Body, count: int = 200_000, seed: int = 0):
    """Volume via the radial formula |K| = omega_n E_sigma[rho_K(theta)^n].

    ``rho_K = 1 / gauge`` is the radial function; this works whenever the
    origin is interior, with variance governed by how round the body is.
    """
    from .estimate import Estimate
    from .sampling import substream

    v = body.volume()
    if v is not None:
        return Estimate.exact(v)
    rng = substream(seed, "volume")
    g = rng.standard_normal((count, body.n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rho_n = body.gauge(g) ** (-float(body.n))
    w = ball_volume(body.n)
    return Estimate(float(w * rho_n.mean()), float(w * rho_n.std(ddof=1) / math.sqrt(count)), count, seed)


def radial_function(body: Body, directions):
    return 1.0 / body.gauge(directions)


# ----------------------------------------------------------------------
# JSON config


SHAPES = ("cube", "ball", "cross", "lp", "simplex", "hpoly")


def body_from_config(cfg: dict) -> Body:
    """Build a body from ``{"shape": ..., "n": ..., params...}``.

    ``normalize`` (default true) rescales to volume one.
    """
    shape = cfg.get("shape")
    n = cfg.get("n")
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if not isinstance(n, int) or n < 1:
        raise ValueError("body config needs a positive integer 'n'")
    if shape == "cube":
        body = Cube(n, float(cfg.get("side", 1.0)))
    elif shape == "ball":
        body = EuclideanBall(n, float(cfg.get("radius", 1.0)))
    elif shape == "cross":
        body = CrossPolytope(n, float(cfg.get("scale", 1.0)))
    elif shape == "lp":
        body = LpBall(n, float(cfg["p"]), float(cfg.get("scale", 1.0)))
    elif shape == "simplex":
        body = Simplex(n, float(cfg.get("scale", 1.0)))
    else:
        body = HPolytope(np.asarray(cfg["normals"], float), np.asarray(cfg["offsets"], float))
        if body.n != n:
            raise ValueError("hpoly normals do not match n")
    if cfg.get("normalize", True):
        body = volume_normalize(body, seed=int(cfg.get("volume_seed", 0)))
    return body


def body_label(body: Body) -> str:
    d = body.to_dict()
    shape = d["shape"]
    if shape == "lp":
        return f"lp{d['p']:g}"
    if shape == "affine":
        return body_label(body.inner)
    return shape


def hpolytope_cube(n: int, side: float = 1.0) -> HPolytope:
    """The cube as an explicit H-polytope (for cross-checks)."""
    a = np.vstack([np.eye(n), -np.eye(n)])
    return HPolytope(a, np.full(2 * n, side / 2.0))
