"""Covering numbers N(K, t B_2^n) on a uniform sample, and (kappa, tau)-regularity profiles.

All counts refer to the sampled point set, with centres restricted to
the sample; they estimate the covering numbers of the body only up to the
sampling caveat ``SAMPLING_CAVEAT``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .bodies import Body, body_label
from .sampling import PointSample, sample_uniform

SAMPLING_CAVEAT = ("covering numbers are computed on a finite uniform sample with centres in the sample; "
                   "they estimate N(K, tB) up to sampling error")
REFINE_MAX_CENTERS = 64
MIN_SAMPLE = 10_000


def _points(sample):
    pts = sample.points if isinstance(sample, PointSample) else np.asarray(sample, dtype=float)
    return np.atleast_2d(pts)


def nearest_neighbor_distances(pts, block: int = 2048) -> np.ndarray:
    """Distance from each sample point to its nearest other sample point.

    Brute force in row blocks; KD-trees lose to this beyond a few dimensions.
    """
    pts = _points(pts)
    sq = np.sum(pts * pts, axis=1)
    out = np.empty(len(pts))
    for s in range(0, len(pts), block):
        d2 = sq[s:s + block, None] - 2 * pts[s:s + block] @ pts.T + sq[None, :]
        d2[np.arange(len(d2)), np.arange(s, s + len(d2))] = np.inf
        out[s:s + block] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


def _greedy_count(pts, radius, start, nn=None):
    """Greedy farthest-point cover size, with isolated points split off.

    A point with no other sample point within ``radius`` is its own centre
    in any centre-restricted cover and covers nothing else, so greedy on
    the rest plus the isolated count reproduces the full greedy count.
    """
    nn = nearest_neighbor_distances(pts) if nn is None else nn
    # a small relative margin keeps borderline pairs in the greedy part
    rest = np.flatnonzero(nn <= radius * (1 + 1e-9))
    lonely = len(pts) - len(rest)
    if len(rest) == 0:
        return lonely
    sub = pts[rest]
    pos = np.searchsorted(rest, start)
    s = int(pos) if pos < len(rest) and rest[pos] == start else start_index(sub)
    return lonely + len(_farthest_point(sub, radius, s))


def start_index(pts):
    """Sample point nearest to the sample mean."""
    return int(np.argmin(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)))


def _farthest_point(pts, radius, start, limit=None):
    """Greedy farthest-point centres until every point is within ``radius``.

    Each new centre is farther than ``radius`` from all previous ones.
    Covered points can never become the farthest again, so they are
    dropped from the working set.
    """
    centres = [start]
    active = np.arange(len(pts))
    d = np.linalg.norm(pts - pts[start], axis=1)
    while limit is None or len(centres) < limit:
        keep = d > radius
        if not keep.any():
            break
        active, d = active[keep], d[keep]
        j = int(np.argmax(d))
        i = int(active[j])
        centres.append(i)
        np.minimum(d, np.linalg.norm(pts[active] - pts[i], axis=1), out=d)
    return centres


def _assign(pts, centres):
    d2 = (np.sum(pts * pts, axis=1)[:, None] - 2 * pts @ centres.T + np.sum(centres * centres, axis=1)[None, :])
    lab = d2.argmin(axis=1)
    # exact distances to the chosen centre, for the cover test
    return lab, np.linalg.norm(pts - centres[lab], axis=1)


def _relocate(pts, t, idx, tree, iterations=60, inner=30):
    """Try to turn ``idx`` into a t-cover of ``pts`` by moving centres.

    Each cluster centre moves to an approximate minimax centre of its
    cluster (Badoiu-Clarkson steps), snapped back to the nearest sample
    point so that centres stay in the sample.
    """
    c = pts[idx].copy()
    for _ in range(iterations):
        lab, r = _assign(pts, c)
        if r.max() <= t:
            return True
        for j in range(len(c)):
            q = pts[lab == j]
            if len(q) == 0:
                continue
            x = c[j].copy()
            for s in range(1, inner):
                far = q[np.argmax(np.sum((q - x) ** 2, axis=1))]
                x += (far - x) / (s + 1)
            c[j] = pts[tree.query(x)[1]]
    return bool(_assign(pts, c)[1].max() <= t)


def covering_upper(body: Optional[Body], t: float, sample, refine: bool = True, nn=None) -> int:
    """Size of a t-cover of the sample by balls centred at sample points.

    Greedy farthest-point first; when that uses at most
    ``REFINE_MAX_CENTERS`` balls, fewer centres are tried by k-centre
    relocation, keeping the smallest count that still covers every point.
    Any count returned is that of a verified cover, hence an upper estimate.
    ``nn`` optionally passes precomputed ``nearest_neighbor_distances``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    pts = _points(sample)
    start = start_index(pts)
    best = _greedy_count(pts, t, start, nn)
    if not refine or best <= 1 or best > REFINE_MAX_CENTERS:
        return best
    tree = cKDTree(pts)
    k = best - 1
    while k >= 1:
        ok = False
        for rep in range(3):
            seed_idx = start if rep == 0 else (start + rep * len(pts) // 3) % len(pts)
            idx = _farthest_point(pts, 0.0, seed_idx, limit=k)
            if _relocate(pts, t, idx, tree):
                ok = True
                break
        if not ok:
            break
        best = k
        k -= 1
    return best


def packing_lower(body: Optional[Body], t: float, sample, nn=None) -> int:
    """Size of a greedy 2t-separated subset of the sample.

    A ball of radius t holds at most one point of such a set, so its size
    bounds any t-cover of the sample from below.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    pts = _points(sample)
    return _greedy_count(pts, 2 * t, start_index(pts), nn)


def default_t_grid(radius: float, count: int = 16) -> np.ndarray:
    return np.geomspace(0.05 * radius, 1.2 * radius, count)


@dataclass
class CoveringProfile:
    body_id: str
    n: int
    kappa: float
    tau: float
    t_grid: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    regularity_rhs: np.ndarray
    admissible: np.ndarray
    kappa_fit: Optional[float]
    caveat: str = SAMPLING_CAVEAT
    sample_size: int = 0
    seed: Optional[int] = None

    @property
    def range_empty(self) -> bool:
        return not bool(self.admissible.any())

    def verdicts(self):
        out = []
        for u, rhs, adm in zip(self.upper, self.regularity_rhs, self.admissible):
            if not adm:
                out.append("inadmissible")
            else:
                out.append("ok" if math.log(u) <= rhs else "violated")
        return out

    @property
    def regular(self) -> bool:
        """``log N <= kappa n^2 log^2 n / t^2`` on every admissible t (vacuous if none)."""
        return all(v != "violated" for v in self.verdicts())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "lower", "upper", "rhs", "verdict"])
        for t, lo, up, rhs, v in zip(self.t_grid, self.lower, self.upper, self.regularity_rhs, self.verdicts()):
            w.writerow([repr(float(t)), int(lo), int(up), repr(float(rhs)), v])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "body_id": self.body_id, "n": self.n, "kappa": self.kappa, "tau": self.tau,
            "t_grid": [float(t) for t in self.t_grid], "upper": [int(u) for u in self.upper],
            "lower": [int(v) for v in self.lower], "rhs": [float(r) for r in self.regularity_rhs],
            "verdicts": self.verdicts(), "kappa_fit": self.kappa_fit, "range_empty": self.range_empty,
            "regular": self.regular, "caveat": self.caveat, "sample_size": self.sample_size, "seed": self.seed,
        }


def regularity_profile(body: Body, kappa: float = 1.0, tau: float = 1.0, t_grid: Optional[Sequence[float]] = None,
                       sample=None, sample_size: int = MIN_SAMPLE, seed: int = 0, threads: int = 1,
                       refine: bool = False) -> CoveringProfile:
    """Compare ``log N(K, tB)`` with ``kappa n^2 log^2 n / t^2`` over a t grid.

    Admissible radii are ``t >= tau sqrt(n log n)``.  The reported upper
    count is the running minimum over smaller radii (a cover at a smaller
    radius also covers at a larger one), so it is nonincreasing in t.
    ``kappa_fit`` is the smallest kappa making the inequality hold on the
    admissible grid points, or ``None`` when that range is empty.
    Plain greedy counts are used unless ``refine`` is set.
    """
    n = body.n
    if sample is None:
        sample = sample_uniform(body, sample_size, seed)
    pts = _points(sample)
    grid = np.sort(np.asarray(default_t_grid(body.radius()) if t_grid is None else t_grid, dtype=float))

    nn = nearest_neighbor_distances(pts)

    def one(t):
        return covering_upper(body, t, pts, refine, nn), packing_lower(body, t, pts, nn)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(one, grid))
    else:
        res = [one(t) for t in grid]
    upper = np.minimum.accumulate(np.array([r[0] for r in res]))
    lower = np.array([r[1] for r in res])
    scale = n ** 2 * math.log(n) ** 2 if n > 1 else 0.0
    rhs = kappa * scale / grid ** 2
    admissible = grid >= tau * math.sqrt(n * math.log(n)) if n > 1 else np.ones(len(grid), dtype=bool)
    fit = None
    if admissible.any() and scale > 0:
        fit = float(np.max(np.log(upper[admissible]) * grid[admissible] ** 2 / scale))
    return CoveringProfile(body_label(body), n, kappa, tau, grid, upper, lower, rhs, admissible, fit,
                           sample_size=len(pts), seed=seed)
