"""Monte-Carlo scalar estimates."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """A Monte-Carlo scalar with its standard error and provenance."""

    value: float
    std_error: float
    sample_count: int
    seed: Optional[int] = None
    effective_sample_size: Optional[float] = None

    def __post_init__(self):
        if self.std_error < 0 or not np.isfinite(self.std_error):
            raise ValueError(f"std_error must be finite and nonnegative, got {self.std_error}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 1, None)

    @classmethod
    def from_mean(cls, values, seed=None) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(values)), se, int(n), seed)

    def scale(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.std_error * abs(factor),
                        self.sample_count, self.seed, self.effective_sample_size)

    def power(self, p: float) -> "Estimate":
        """Delta-method image under ``v -> v**p`` (requires positive value)."""
        v = self.value ** p
        se = abs(p) * self.value ** (p - 1) * self.std_error if self.value > 0 else 0.0
        return Estimate(v, float(se), self.sample_count, self.seed, self.effective_sample_size)

    def relative_error(self) -> float:
        return self.std_error / abs(self.value) if self.value else float("inf")

    def to_dict(self) -> dict:
        return asdict(self)

    def __float__(self):
        return float(self.value)


def ratio(num: Estimate, den: Estimate) -> Estimate:
    """Ratio of independent estimates, first-order error propagation."""
    r = num.value / den.value
    rel = np.hypot(num.relative_error() if num.value else 0.0,
                   den.relative_error())
    return Estimate(r, float(abs(r) * rel), min(num.sample_count, den.sample_count))


def power_mean(values, q: float, seed=None) -> Estimate:
    """``(mean(values**q))**(1/q)`` for nonnegative values, computed stably.

    The q-th powers are rescaled by the largest value so that large ``q``
    does not overflow; negative ``q`` is handled through the same scaling
    and carries an effective sample size for the implied weights.
    """
    v = np.asarray(values, dtype=float).ravel()
    if q == 0:
        raise ValueError("q = 0 is not allowed")
    n = v.size
    if q > 0:
        scale = v.max()
        if scale == 0:
            return Estimate(0.0, 0.0, n, seed)
        w = (v / scale) ** q
    else:
        if np.any(v <= 0):
            raise ValueError("negative moments need strictly positive values")
        scale = v.min()
        w = (scale / v) ** (-q)
    m = w.mean()
    rel_m = (w.std(ddof=1) / m / np.sqrt(n)) if n > 1 else 0.0
    value = scale * m ** (1.0 / q)
    se = value * rel_m / abs(q)
    ess = float(w.sum() ** 2 / np.sum(w * w))
    return Estimate(float(value), float(se), n, seed, ess)
