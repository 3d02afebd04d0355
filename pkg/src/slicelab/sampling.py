"""Uniform samples from convex bodies, sphere directions, Haar rotations.

Randomness is drawn from counter-based Philox substreams keyed by
``(seed, label, block)`` so that a sample is bit-identical no matter how
its blocks are distributed over worker threads.
"""

from __future__ import annotations

import csv
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bodies import Body

EXACT_BLOCK = 1 << 16
CHAINS_PER_BLOCK = 1024
POINTS_PER_CHAIN = 32


class ChordError(RuntimeError):
    """Hit-and-run could not locate a chord (inconsistent oracle)."""

    def __init__(self, message, point):
        super().__init__(f"{message}; offending point {np.asarray(point).tolist()}")
        self.point = point


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *labels)``."""
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(_key(p) for p in labels))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PointSample:
    points: np.ndarray
    body: Optional[Body] = field(default=None, repr=False)
    seed: int = 0
    sampler_kind: str = "exact"
    burn_in: int = 0
    thinning: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.points) == 0:
            raise ValueError("empty point sample")

    def __len__(self):
        return len(self.points)

    @property
    def n(self):
        return self.points.shape[1]

    def split(self, parts: int):
        return [PointSample(p, self.body, self.seed, self.sampler_kind, self.burn_in, self.thinning)
                for p in np.array_split(self.points, parts)]

    def transformed(self, amap) -> "PointSample":
        return PointSample(amap(self.points), None, self.seed, self.sampler_kind, self.burn_in, self.thinning)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.n)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @staticmethod
    def merge(samples):
        first = samples[0]
        return PointSample(np.vstack([s.points for s in samples]), first.body, first.seed,
                           first.sampler_kind, first.burn_in, first.thinning)


@dataclass
class DirectionSet:
    directions: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if np.any(np.abs(np.linalg.norm(self.directions, axis=1) - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")

    @property
    def count(self):
        return len(self.directions)

    def __len__(self):
        return self.count


def _run_blocks(fn, nblocks, threads):
    if threads <= 1 or nblocks <= 1:
        return [fn(b) for b in range(nblocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(nblocks)))


def sample_uniform(body: Body, count: int, seed: int = 0, *, burn_in: Optional[int] = None,
                   thinning: Optional[int] = None, threads: int = 1, check: bool = False) -> PointSample:
    """``count`` uniform points from ``body``.

    Exact samplers are used for the catalog shapes and their affine images;
    anything else goes through hit-and-run chains started at the body's
    interior point (defaults: burn-in ``50 n``, thinning ``2 n``).
    """
    if count < 1:
        raise ValueError("count must be positive")
    n = body.n
    probe = body.sample_exact(substream(seed, "probe"), 1)
    if probe is not None:
        nblocks = -(-count // EXACT_BLOCK)

        def block(b):
            m = min(EXACT_BLOCK, count - b * EXACT_BLOCK)
            return body.sample_exact(substream(seed, "exact", b), m)

        pts = np.vstack(_run_blocks(block, nblocks, threads))
        sample = PointSample(pts, body, seed, "exact")
    else:
        burn_in = 50 * n if burn_in is None else burn_in
        thinning = 2 * n if thinning is None else thinning
        per_block = CHAINS_PER_BLOCK * POINTS_PER_CHAIN
        nblocks = -(-count // per_block)

        def block(b):
            # wide blocks keep every chord call vectorised over many chains
            m = min(per_block, count - b * per_block)
            chains = min(CHAINS_PER_BLOCK, m)
            rng = substream(seed, "hit_and_run", b)
            out = _hit_and_run_chains(body, chains, -(-m // chains), burn_in, thinning, rng)
            return out[:m]

        pts = np.vstack(_run_blocks(block, nblocks, threads))
        sample = PointSample(pts, body, seed, "hit_and_run", burn_in, thinning)
    if check and not np.all(body.contains(sample.points, tol=1e-9)):
        bad = sample.points[~body.contains(sample.points, tol=1e-9)][0]
        raise ChordError("sampler emitted a point outside the body", bad)
    return sample


def _random_directions(rng, m, n):
    d = rng.standard_normal((m, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _hit_and_run_moves(body, x, rng):
    d = _random_directions(rng, len(x), body.n)
    lo, hi = body.chord(x, d)
    if np.any(~np.isfinite(lo) | ~np.isfinite(hi) | (hi < lo)):
        i = int(np.flatnonzero(~np.isfinite(lo) | ~np.isfinite(hi) | (hi < lo))[0])
        raise ChordError("chord endpoints not found", x[i])
    t = lo + (hi - lo) * rng.random(len(x))
    return x + t[:, None] * d


def _hit_and_run_chains(body, chains, per_chain, burn_in, thinning, rng):
    x = np.tile(body.interior_point(), (chains, 1))
    if not np.all(body.contains(x[:1])):
        raise ChordError("hit-and-run start is outside the body", x[0])
    for _ in range(burn_in):
        x = _hit_and_run_moves(body, x, rng)
    out = np.empty((chains, per_chain, body.n))
    for k in range(per_chain):
        for _ in range(max(thinning, 1)):
            x = _hit_and_run_moves(body, x, rng)
        out[:, k] = x
    return out.reshape(-1, body.n)


def hit_and_run_step(body: Body, x, rng: np.random.Generator):
    """One hit-and-run move from an interior point ``x``."""
    x = np.asarray(x, dtype=float)
    if not body.contains(x, tol=1e-9):
        raise ChordError("hit-and-run step from a point outside the body", x)
    return _hit_and_run_moves(body, x[None, :], rng)[0]


def sample_sphere(n: int, count: int, seed: int = 0) -> DirectionSet:
    """Uniform directions on S^{n-1} (normalised Gaussians)."""
    if n < 1 or count < 1:
        raise ValueError("need n >= 1 and count >= 1")
    rng = substream(seed, "sphere", n)
    return DirectionSet(_random_directions(rng, count, n), seed)


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    # QR of a Gaussian matrix; fixing the signs of diag(R) makes Q Haar
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def sample_rotation(n: int, seed: int = 0, index: int = 0) -> np.ndarray:
    """Haar-distributed orthogonal ``n x n`` matrix."""
    if n < 1:
        raise ValueError("n must be positive")
    return haar_orthogonal(n, substream(seed, "rotation", n, index))


def sample_rotations(n: int, count: int, seed: int = 0):
    return [sample_rotation(n, seed, i) for i in range(count)]


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit child seed, stable under the same ``(seed, labels)``."""
    return int(substream(seed, "derive", *labels).integers(0, 1 << 63))
