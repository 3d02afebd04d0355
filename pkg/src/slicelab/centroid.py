"""L_q-centroid bodies through their support functions.

For a volume-one body K and q >= 1,

    h_{Z_q(K)}(y) = ( int_K |<x, y>|^q dx )^{1/q},

which is also the norm of y in the polar body Z_q(K)°.  All directions of
a given evaluator share one uniform sample of K, so comparisons across
directions and exponents are common-random-number contrasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .bodies import Body
from .estimate import Estimate, power_mean
from .sampling import PointSample, derive_seed, sample_sphere, sample_uniform, substream

# entries of the (samples x directions) block evaluated at once
_BLOCK_ENTRIES = 1 << 19
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def sphere_moment_constant(n: int, q: float) -> float:
    """``c_{n,q} = ( int_{S^{n-1}} |theta_1|^q dsigma )^{1/q}``.

    Closed form ``Gamma((q+1)/2) Gamma(n/2) / (sqrt(pi) Gamma((n+q)/2))`` for
    the q-th power, evaluated through log-gamma.
    """
    if q == 0 or q <= -1:
        raise ValueError("need q > -1, q != 0")
    logm = gammaln((q + 1) / 2) + gammaln(n / 2) - 0.5 * math.log(math.pi) - gammaln((n + q) / 2)
    return math.exp(logm / q)


def _unit_rows(y, n):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[-1] != n:
        raise ValueError(f"expected {n}-vectors")
    norms = np.linalg.norm(y, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return y / safe[:, None], norms


def _ipow(w, q):
    """``w ** q`` in place; integer q up to 64 by left-to-right binary powering."""
    k = int(q)
    if k != q or k < 1 or k > 64:
        return np.power(w, q, out=w)
    base = w.copy() if k & (k - 1) else None  # only needed for non-powers of two
    for bit in bin(k)[3:]:
        np.multiply(w, w, out=w)
        if bit == "1":
            np.multiply(w, base, out=w)
    return w


# above this exponent the powers are rescaled by the row maximum first
_RESCALE_Q = 32


def _support_block(points, dirs, q, with_se=True):
    """Values and standard errors of h_{Z_q} on unit directions ``dirs``."""
    m = len(points)
    # rows are directions so that every reduction runs over contiguous memory
    w = dirs @ points.T
    np.abs(w, out=w)
    if q > _RESCALE_Q:
        top = w.max(axis=1)
        top_safe = np.where(top > 0, top, 1.0)
        w /= top_safe[:, None]
    else:
        top = np.ones(len(w))
    _ipow(w, q)
    mean = w.sum(axis=1) / m
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(mean > 0, top * mean ** (1.0 / q), 0.0)
    if not with_se:
        return val, None
    msq = np.einsum("ij,ij->i", w, w) / m
    sd = np.sqrt(np.maximum(msq - mean * mean, 0.0) * m / max(m - 1, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(mean > 0, val * sd / (mean * math.sqrt(m) * q), 0.0)
    return val, se


@dataclass
class ZqEvaluator:
    """Support function of Z_q(K) on a frozen uniform sample of K.

    Parameters
    ----------
    points : ndarray or PointSample
        Uniform sample of a volume-one body.
    q : float
        Exponent, at least 1.
    """

    points: np.ndarray
    q: float
    body_id: str = ""
    seed: Optional[int] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if isinstance(self.points, PointSample):
            self.seed = self.points.seed if self.seed is None else self.seed
            self.points = self.points.points
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not self.q >= 1:
            raise ValueError(f"q must be >= 1, got {self.q}")

    @classmethod
    def for_body(cls, body: Body, q: float, budget: int = 200_000, seed: int = 0) -> "ZqEvaluator":
        v = body.volume()
        if v is not None and abs(v - 1.0) > 1e-6:
            raise ValueError("L_q-centroid bodies are defined here for volume-one bodies; normalize first")
        sample = sample_uniform(body, budget, seed)
        from .bodies import body_label
        return cls(sample.points, q, body_label(body), seed)

    @property
    def n(self):
        return self.points.shape[1]

    @property
    def sample_count(self):
        return len(self.points)

    def with_q(self, q: float) -> "ZqEvaluator":
        """Same sample, another exponent."""
        return ZqEvaluator(self.points, q, self.body_id, self.seed)

    def support_many(self, y, with_se=True):
        """``(values, std_errors)`` of h_{Z_q}(y) for the rows of ``y``.

        Directions need not be unit; the estimator is evaluated on
        ``y / |y|`` and rescaled, so it is exactly positively homogeneous.
        With ``with_se=False`` the errors are skipped and returned as None.
        """
        u, norms = _unit_rows(y, self.n)
        step = max(1, _BLOCK_ENTRIES // max(1, self.sample_count))
        vals = np.empty(len(u))
        ses = np.empty(len(u)) if with_se else None
        for s in range(0, len(u), step):
            v, e = _support_block(self.points, u[s:s + step], self.q, with_se)
            vals[s:s + step] = v
            if with_se:
                ses[s:s + step] = e
        return vals * norms, (ses * norms if with_se else None)

    def support(self, y) -> Estimate:
        y = np.asarray(y, dtype=float)
        key = y.tobytes()
        if key not in self._cache:
            v, s = self.support_many(y[None, :])
            self._cache[key] = Estimate(float(v[0]), float(s[0]), self.sample_count, self.seed)
        return self._cache[key]

    polar_norm = support

    def __call__(self, y):
        return self.support_many(y, with_se=False)[0]

    def ascent(self, theta):
        """Value at ``theta`` and the fixed-point step ``grad / |grad|``.

        ``E|<x, theta>|^q`` is convex, so the step never decreases h_{Z_q};
        ``sphere_argmax`` uses it in place of derivative-free search.
        One pass over the sample gives both.
        """
        w = self.points @ theta
        a = np.abs(w)
        p = a ** (self.q - 1) if self.q != 1 else np.ones_like(a)
        value = float(np.mean(p * a)) ** (1.0 / self.q)
        g = (np.sign(w) * p) @ self.points
        ng = np.linalg.norm(g)
        return value, (theta if ng == 0 else g / ng)


def zq_support(body: Body, q: float, y, budget: int = 200_000, seed: int = 0) -> Estimate:
    """h_{Z_q(K)}(y) for a single vector ``y``."""
    return ZqEvaluator.for_body(body, q, budget, seed).support(y)


def zq_polar_norm(body: Body, q: float, x, budget: int = 200_000, seed: int = 0) -> Estimate:
    """``||x||_{Z_q(K)°}``, equal to h_{Z_q(K)}(x) by duality."""
    return zq_support(body, q, x, budget, seed)


def sphere_argmax(f: Callable, n: int, count: int = 2000, seed: int = 0, iterations: int = 50,
                  probes: int = 9):
    """Maximise a function on S^{n-1}.

    A random grid of ``count`` directions locates a starting point, then
    ``iterations`` rounds search along great circles through the current
    best point, shrinking the angular window by the golden ratio each round.
    A derivative-free Powell polish of ``f(x / |x|)`` finishes the search;
    random great circles alone stall in higher dimensions.

    If ``f`` has an ``ascent(theta) -> (value, next_theta)`` method (as
    ``ZqEvaluator`` does), the best few grid points are instead refined by
    iterating it until the value stops improving.

    Parameters
    ----------
    f : callable
        Maps an ``(m, n)`` array of unit vectors to ``m`` values.

    Returns
    -------
    best_value : float
    best_direction : ndarray
    """
    grid = sample_sphere(n, count, seed).directions
    vals = f(grid)
    i = int(np.argmax(vals))
    best, theta = float(vals[i]), grid[i]
    if n == 1:
        return best, theta
    ascent = getattr(f, "ascent", None)
    if ascent is not None:
        for start in grid[np.argsort(vals)[-4:]]:
            th, prev = start, -np.inf
            for _ in range(2 * iterations):
                v, nxt = ascent(th)
                if v > best:
                    best, theta = v, th
                # well below the Monte Carlo noise of the values themselves
                if v <= prev * (1 + 1e-6):
                    break
                prev, th = v, nxt
        return best, theta
    rng = substream(seed, "argmax_refine")
    width = math.pi / 4
    angles = np.linspace(-1.0, 1.0, probes)
    for _ in range(iterations):
        u = rng.standard_normal(n)
        u -= (u @ theta) * theta
        nu = np.linalg.norm(u)
        if nu < 1e-12:
            continue
        u /= nu
        phi = width * angles
        cand = np.cos(phi)[:, None] * theta + np.sin(phi)[:, None] * u
        cv = f(cand)
        j = int(np.argmax(cv))
        if cv[j] > best:
            best, theta = float(cv[j]), cand[j] / np.linalg.norm(cand[j])
        width *= GOLDEN
        if width < 1e-6:
            width = math.pi / 16  # restart the window in a fresh great circle

    def neg(x):
        nx = np.linalg.norm(x)
        return -float(f((x / nx)[None, :])[0]) if nx > 0 else 0.0

    res = minimize(neg, theta, method="Powell", options={"maxfev": 200 * n, "xtol": 1e-6, "ftol": 1e-12})
    if -res.fun > best:
        best, theta = float(-res.fun), res.x / np.linalg.norm(res.x)
    return best, theta


def zq_radius(body: Body, q: float, direction_count: int = 2000, budget: int = 200_000, seed: int = 0,
              evaluator: Optional[ZqEvaluator] = None):
    """R(Z_q(K)) as a maximum of the support function over the sphere.

    The value is a lower estimate of the true radius (a maximum over finitely
    many directions), although the maximum of noisy estimates is biased
    upwards by a few standard errors.

    Returns
    -------
    radius : Estimate
        Support estimate at the maximising direction.
    direction : ndarray
    """
    ev = evaluator if evaluator is not None else ZqEvaluator.for_body(body, q, budget, seed)
    n = ev.n
    _, theta = sphere_argmax(ev, n, direction_count, derive_seed(seed, "radius"))
    return ev.support(theta), theta


@dataclass(frozen=True)
class WidthResult:
    """q-mean width at the full and at half the inner sample."""

    estimate: Estimate
    half_budget: Estimate

    @property
    def inner_bias(self) -> float:
        return self.estimate.value - self.half_budget.value


def _width_from(ev: ZqEvaluator, r: float, dirs, seed) -> Estimate:
    h, _ = ev.support_many(dirs)
    est = power_mean(h, r, seed)
    return Estimate(est.value, est.std_error, ev.sample_count, seed, est.effective_sample_size)


def zq_width(body: Body, q: float, r: float, direction_count: int = 2000, budget: int = 200_000,
             seed: int = 0, evaluator: Optional[ZqEvaluator] = None) -> WidthResult:
    """``w_r(Z_q(K)) = ( int_{S^{n-1}} h_{Z_q}^r dsigma )^{1/r}``.

    Nested Monte Carlo: sphere directions outside, the shared K-sample
    inside.  The inner noise biases the result; the half-budget value is
    returned alongside so that bias can be read off.
    """
    ev = evaluator if evaluator is not None else ZqEvaluator.for_body(body, q, budget, seed)
    n = ev.n
    if r == 0 or r <= -n:
        raise ValueError("need r in (-n, inf), r != 0")
    dirs = sample_sphere(n, direction_count, derive_seed(seed, "width")).directions
    full = _width_from(ev, r, dirs, seed)
    half = ZqEvaluator(ev.points[: max(2, ev.sample_count // 2)], ev.q, ev.body_id, ev.seed)
    return WidthResult(full, _width_from(half, r, dirs, seed))


def inclusion_ratio(body: Body, p: float, q: float, direction_count: int = 2000, budget: int = 200_000,
                    seed: int = 0, points=None):
    """Largest ``h_{Z_q}/h_{Z_p}`` over directions, for ``1 <= p <= q``.

    Returns
    -------
    ratio : float
    direction : ndarray
    """
    if not 1 <= p <= q:
        raise ValueError("need 1 <= p <= q")
    if points is None:
        points = sample_uniform(body, budget, seed).points
    n = points.shape[1]
    if p == q:
        return 1.0, np.eye(n)[0]
    evq, evp = ZqEvaluator(points, q), ZqEvaluator(points, p)
    return sphere_argmax(lambda d: evq(d) / evp(d), n, direction_count, derive_seed(seed, "inclusion"))
