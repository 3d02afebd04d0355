"""Moment functionals I_q(K, C), the slicing parameter I_1(K, Z_q°(M)),
radial moments and the critical parameters k_*(C), q_*(K)."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bodies import Body, EuclideanBall, ball_volume
from .centroid import ZqEvaluator, sphere_argmax, sphere_moment_constant
from .estimate import Estimate, power_mean
from .sampling import derive_seed, sample_sphere, sample_uniform

__all__ = [
    "FunctionalValue",
    "KStar",
    "QStar",
    "default_q_grid",
    "iq_norm_moment",
    "kstar",
    "polar_volume_radius",
    "qstar",
    "radial_moment",
    "slicing_from_samples",
    "slicing_parameter",
    "sphere_moment_constant",
]


@dataclass(frozen=True)
class FunctionalValue:
    kind: str
    value: Estimate
    q: float
    bodies: tuple = ()
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value.value < 0:
            raise ValueError("functional values are nonnegative")


def _check_q(q, n):
    if q == 0:
        raise ValueError("q = 0 is not allowed")
    if q <= -n:
        raise ValueError(f"q must exceed -n = {-n}")


def _radial_moment_power(K: Body, C: Body, q: float, count: int, seed: int):
    """Terms whose mean is ``int_K ||x||_C^q dx`` (polar coordinates).

    ``int_K ||x||_C^q dx = n omega_n / (n + q) * E_theta ||theta||_C^q rho_K(theta)^{n+q}``,
    finite-variance for every q > -n, unlike point sampling near the origin.
    """
    n = K.n
    dirs = sample_sphere(n, count, derive_seed(seed, "radial")).directions
    rho = 1.0 / K.gauge(dirs)
    g = C.gauge(dirs)
    return n * ball_volume(n) / (n + q) * g ** q * rho ** (n + q)


def iq_norm_moment(K: Body, C: Body, q: float, budget: int = 200_000, seed: int = 0,
                   method: str = "auto", points=None) -> Estimate:
    """``I_q(K, C) = ( int_K ||x||_C^q dx )^{1/q}`` for a volume-one K.

    Parameters
    ----------
    method : {"auto", "sample", "radial"}
        ``sample`` averages gauges over uniform points of K; ``radial``
        integrates in polar coordinates over sphere directions.  ``auto``
        uses points for q > 0 and the radial form for q < 0, where point
        sampling has heavy (for q <= -n/2 infinite-variance) tails.
    """
    n = K.n
    _check_q(q, n)
    if method == "auto":
        method = "sample" if q > 0 else "radial"
    if method == "sample":
        if points is None:
            points = sample_uniform(K, budget, seed).points
        est = power_mean(C.gauge(points), q, seed)
        return Estimate(est.value, est.std_error, est.sample_count, seed, est.effective_sample_size)
    if method != "radial":
        raise ValueError(f"unknown method {method!r}")
    vol = K.volume() or 1.0
    f = _radial_moment_power(K, C, q, budget, seed) / vol
    m = f.mean()
    rel = f.std(ddof=1) / m / math.sqrt(len(f))
    value = m ** (1.0 / q)
    ess = float(f.sum() ** 2 / np.sum(f * f))
    return Estimate(float(value), float(value * rel / abs(q)), len(f), seed, ess)


def radial_moment(K: Body, q: float, budget: int = 200_000, seed: int = 0, method: str = "auto",
                  points=None) -> Estimate:
    """``I_q(K) = ( int_K ||x||_2^q dx )^{1/q}``, q in (-n, inf), q != 0."""
    return iq_norm_moment(K, EuclideanBall(K.n, 1.0), q, budget, seed, method, points)


def _one_replication(K, M, q, outer, inner, seed, r, rotation):
    y = sample_uniform(M, inner, derive_seed(seed, "inner", r)).points
    if rotation is not None:
        y = y @ np.asarray(rotation).T
    x = sample_uniform(K, outer, derive_seed(seed, "outer", r)).points
    h, _ = ZqEvaluator(y, q).support_many(x)
    return float(h.mean()), float(h.var(ddof=1))


def _replication_estimate(means, variances, outer, seed, count):
    """Mean of replication means with a floored standard error.

    The spread of a handful of replication means is itself noisy; the
    pooled within-replication variance over outer points (divided by the
    outer size) is a stable lower bound for the variance of one
    replication mean, so the larger of the two is used.
    """
    means = np.asarray(means)
    reps = len(means)
    between = means.var(ddof=1)
    within = float(np.mean(variances)) / outer
    se = math.sqrt(max(between, within) / reps)
    return Estimate(float(means.mean()), se, count, seed, float(reps))


def slicing_parameter(K: Body, M: Body, q: float, outer: int = 2048, inner: int = 16384, reps: int = 8,
                      seed: int = 0, rotation=None, threads: int = 1) -> Estimate:
    """``I_1(K, Z_q°(M)) = int_K h_{Z_q(M)}(x) dx``.

    Each replication draws a fresh inner sample of M (common to all outer
    points) and a fresh outer sample of K; the standard error is the spread
    of the replication means, floored by the outer-point variance.

    Parameters
    ----------
    rotation : ndarray, optional
        Orthogonal U; the inner body becomes U(M).
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if reps < 2:
        raise ValueError("need at least two replications for a standard error")

    def run(r):
        return _one_replication(K, M, q, outer, inner, seed, r, rotation)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(run, range(reps)))
    else:
        vals = [run(r) for r in range(reps)]
    return _replication_estimate([v[0] for v in vals], [v[1] for v in vals], outer, seed, outer * reps)


def slicing_from_samples(outer_sets, inner_sets, q: float) -> Estimate:
    """The slicing-parameter estimator on pre-drawn replications.

    ``outer_sets[r]`` (points of K) and ``inner_sets[r]`` (points of M) form
    replication r.  Useful when sampling is expensive and several q share
    the same draws.
    """
    if len(outer_sets) != len(inner_sets) or len(outer_sets) < 2:
        raise ValueError("need at least two paired replications")
    hs = [ZqEvaluator(y, q)(x) for x, y in zip(outer_sets, inner_sets)]
    return _replication_estimate([h.mean() for h in hs], [h.var(ddof=1) for h in hs],
                                 min(len(x) for x in outer_sets), None, sum(len(x) for x in outer_sets))


def polar_volume_radius(h: Callable, n: int, direction_count: int = 20_000, seed: int = 0) -> Estimate:
    """``|C°|^{-1/n}`` for a symmetric body C given by its support function.

    Uses ``|C°| = omega_n E_theta h_C(theta)^{-n}``.
    """
    dirs = sample_sphere(n, direction_count, derive_seed(seed, "polar")).directions
    vals = np.asarray(h(dirs), dtype=float)
    pm = power_mean(vals, -float(n), seed)  # (E h^{-n})^{-1/n}
    return pm.scale(ball_volume(n) ** (-1.0 / n))


@dataclass(frozen=True)
class KStar:
    value: int
    width: Estimate
    radius: float
    direction: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def ratio(self) -> float:
        return self.width.value / self.radius


def kstar(h: Callable, n: int, direction_count: int = 2000, seed: int = 0) -> KStar:
    """Critical dimension proxy ``round(n (w(C)/R(C))^2)`` clamped to [1, n].

    ``h`` is the support function of a symmetric body C, evaluated on an
    ``(m, n)`` array of unit vectors.  w is the mean width (sphere Monte
    Carlo) and R the maximum of h over the sphere.
    """
    dirs = sample_sphere(n, direction_count, derive_seed(seed, "width")).directions
    vals = np.asarray(h(dirs), dtype=float)
    w = Estimate.from_mean(vals, seed)
    radius, theta = sphere_argmax(h, n, direction_count, derive_seed(seed, "radius"))
    radius = max(radius, float(vals.max()))
    k = int(round(n * (w.value / radius) ** 2))
    return KStar(min(max(k, 1), n), w, radius, theta)


def default_q_grid(n: int) -> list:
    """Geometric grid 1, 2, 4, ... capped by n, with n itself appended."""
    grid, q = [], 1
    while q < n:
        grid.append(q)
        q *= 2
    grid.append(n)
    return grid


@dataclass(frozen=True)
class QStar:
    value: float
    table: tuple  # (q, k_star, width/radius)


def qstar(K: Body, q_grid: Optional[Sequence[float]] = None, budget: int = 100_000, seed: int = 0,
          direction_count: int = 1000, points=None) -> QStar:
    """Largest grid q with ``k_*(Z_q(K)) >= q``.

    All Z_q share one uniform sample of K.
    """
    n = K.n
    grid = sorted(set(default_q_grid(n) if q_grid is None else q_grid))
    if points is None:
        points = sample_uniform(K, budget, seed).points
    best = grid[0]
    rows = []
    for q in grid:
        ev = ZqEvaluator(points, q)
        ks = kstar(ev, n, direction_count, derive_seed(seed, "kstar", int(q * 1000)))
        rows.append((q, ks.value, ks.ratio))
        if ks.value >= q:
            best = q
    return QStar(best, tuple(rows))
