"""Centre of mass, inertia matrix, isotropic position and L_K.

A body K of volume one is isotropic when its barycentre is the origin and
``E <x, theta>^2 = L_K^2`` for every unit theta.  Any body is brought to
this position by ``T x = lam * Sigma^{-1/2} (x - c)``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bodies import AffineImage, AffineMap, Body, estimate_volume
from .estimate import Estimate
from .sampling import PointSample, derive_seed, sample_uniform

__all__ = [
    "DEFECT_TOL",
    "Estimate",
    "InsufficientSamples",
    "IsotropyReport",
    "MomentStats",
    "center_of_mass",
    "covariance",
    "default_budget",
    "isotropic_constant",
    "isotropic_transform",
    "moment_stats",
]

DEFECT_TOL = 1.05
MIN_CHUNKS = 16
MAX_CHUNK = 1 << 16


class InsufficientSamples(RuntimeError):
    """The covariance estimate is not positive definite."""

    def __init__(self, eigenvalue):
        super().__init__(f"insufficient samples: covariance eigenvalue {eigenvalue:.3e} is not positive")
        self.eigenvalue = eigenvalue


def default_budget(n: int) -> int:
    return 1_000_000 if n <= 8 else 4_000_000


def _points(sample) -> np.ndarray:
    pts = sample.points if isinstance(sample, PointSample) else np.atleast_2d(np.asarray(sample, float))
    if len(pts) == 0:
        raise ValueError("empty sample")
    return pts


def center_of_mass(sample):
    """Empirical barycentre and its per-coordinate standard errors.

    Returns
    -------
    mean, std_error : ndarray
    """
    pts = _points(sample)
    m = len(pts)
    se = pts.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros(pts.shape[1])
    return pts.mean(axis=0), se


def covariance(sample, center=None) -> np.ndarray:
    """Second-moment matrix ``E (x - c)(x - c)^T``.

    ``center`` defaults to the empirical mean of the sample.
    """
    pts = _points(sample)
    c = pts.mean(axis=0) if center is None else np.asarray(center, float)
    y = pts - c
    s = y.T @ y / len(y)
    return 0.5 * (s + s.T)


@dataclass
class MomentStats:
    """First and second moments accumulated over independent chunks."""

    count: int
    mean: np.ndarray
    covariance: np.ndarray
    chunk_sizes: np.ndarray
    chunk_traces: np.ndarray  # tr(Sigma_j)/n about the global mean, per chunk
    seed: int

    @property
    def n(self):
        return len(self.mean)

    def defect(self) -> float:
        ev = np.linalg.eigvalsh(self.covariance)
        if ev[0] <= 0:
            raise InsufficientSamples(float(ev[0]))
        return float(ev[-1] / ev[0])

    def mean_square(self) -> Estimate:
        """``tr(Sigma)/n`` with a batch-means standard error."""
        w = self.chunk_sizes / self.chunk_sizes.sum()
        v = float(np.trace(self.covariance) / self.n)
        k = len(self.chunk_traces)
        if k > 1:
            var = np.sum(w * (self.chunk_traces - v) ** 2) / (k - 1) * k * np.sum(w * w)
            se = math.sqrt(max(var, 0.0))
        else:
            se = 0.0
        return Estimate(v, se, self.count, self.seed)


def moment_stats(body: Body, count: int, seed: int = 0, threads: int = 1,
                 transform: Optional[AffineMap] = None) -> MomentStats:
    """Stream ``count`` uniform points of ``body`` (optionally pushed through
    ``transform``) and accumulate mean and covariance chunk by chunk."""
    if count < 2:
        raise ValueError("need at least two samples")
    chunks = max(MIN_CHUNKS, -(-count // MAX_CHUNK))
    chunks = min(chunks, count // 2)
    sizes = np.full(chunks, count // chunks)
    sizes[: count % chunks] += 1

    def one(j):
        pts = sample_uniform(body, int(sizes[j]), derive_seed(seed, "chunk", j)).points
        if transform is not None:
            pts = transform(pts)
        return pts.sum(axis=0), pts.T @ pts

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(chunks)))
    else:
        parts = [one(j) for j in range(chunks)]
    total = sum(p[0] for p in parts)
    mean = total / count
    second = sum(p[1] for p in parts) / count
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    n = len(mean)
    traces = np.array([(np.trace(p[1]) / s - 2 * p[0] @ mean / s + mean @ mean) / n
                       for p, s in zip(parts, sizes)])
    return MomentStats(count, mean, cov, sizes.astype(float), traces, seed)


@dataclass
class IsotropyReport:
    center: np.ndarray
    covariance: np.ndarray
    L_K: Estimate
    defect: float
    transform: AffineMap
    seed: int = 0
    budget: int = 0

    def __post_init__(self):
        if np.max(np.abs(self.covariance - self.covariance.T)) > 1e-10:
            raise ValueError("covariance must be symmetric")
        if self.defect < 1 or self.L_K.value <= 0:
            raise ValueError("inconsistent isotropy report")

    @property
    def isotropic(self) -> bool:
        return self.defect <= DEFECT_TOL

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "covariance": self.covariance.tolist(),
            "L_K": self.L_K.to_dict(),
            "defect": self.defect,
            "transform": self.transform.to_dict(),
            "seed": self.seed,
            "budget": self.budget,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _inverse_sqrt(cov):
    ev, vec = np.linalg.eigh(cov)
    if ev[0] <= 0:
        raise InsufficientSamples(float(ev[0]))
    return (vec / np.sqrt(ev)) @ vec.T


def _volume(body: Body, seed: int) -> float:
    v = body.volume()
    if v is not None:
        return v
    return estimate_volume(body, seed=derive_seed(seed, "volume")).value


def _l_from_stats(stats: MomentStats, volume: float) -> Estimate:
    m2 = stats.mean_square().scale(volume ** (-2.0 / stats.n))
    return m2.power(0.5)


def isotropic_transform(body: Body, budget: Optional[int] = None, seed: int = 0, threads: int = 1):
    """Affine map to isotropic position.

    Parameters
    ----------
    body : Body
        Bounded body with nonempty interior.
    budget : int, optional
        Number of uniform samples for each of the two covariance estimates.
    seed : int

    Returns
    -------
    transform : AffineMap
        ``T x = lam Sigma^{-1/2}(x - c)`` with ``|T K| = 1``.
    image : Body
        ``T K`` (volume one).
    report : IsotropyReport
        Re-estimated on a fresh sample of ``T K``.
    """
    budget = default_budget(body.n) if budget is None else int(budget)
    stats = moment_stats(body, budget, derive_seed(seed, "fit"), threads)
    a = _inverse_sqrt(stats.covariance)
    vol = _volume(body, seed)
    n = body.n
    lam = (vol * abs(np.linalg.det(a))) ** (-1.0 / n)
    lin = lam * a
    amap = AffineMap(lin, -lin @ stats.mean)
    image = AffineImage(body, amap, known_volume=1.0)
    # fresh sample of K pushed through T is a uniform sample of T K
    check = moment_stats(body, budget, derive_seed(seed, "check"), threads, transform=amap)
    report = IsotropyReport(check.mean, check.covariance, _l_from_stats(check, 1.0),
                            check.defect(), amap, seed, budget)
    return amap, image, report


def isotropic_constant(body: Body, budget: Optional[int] = None, seed: int = 0, threads: int = 1,
                       auto: bool = True) -> Estimate:
    """Estimate L_K.

    Bodies whose inertia matrix is already a multiple of the identity
    (defect at most ``DEFECT_TOL``) are measured directly as
    ``sqrt(tr Sigma / n) / |K|^{1/n}``; otherwise, with ``auto``, the body is
    first moved to isotropic position.
    """
    budget = default_budget(body.n) if budget is None else int(budget)
    stats = moment_stats(body, budget, seed, threads)
    if stats.defect() <= DEFECT_TOL:
        return _l_from_stats(stats, _volume(body, seed))
    if not auto:
        raise ValueError(f"body is not isotropic (defect {stats.defect():.3f}); pass auto=True")
    return isotropic_transform(body, budget, seed, threads)[2].L_K
