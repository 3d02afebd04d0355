"""Derived bodies and the audits built on them.

* ``WBody``: the truncation ``W = {x in K : h_{Z_q(K)}(x) <= C_1 I_1(K, Z_q°(K))}``
  and its volume-one homothet K_1.
* ``ConvolutionBody``: ``K / L_K + D_n``, normalised.
* Ball's bodies ``B_q(K, F)`` through their gauge (a sectional moment).
* Rotation averages of the slicing parameter, the maximal-inequality and
  subset-inclusion audits, and the t_0 / p_0 bookkeeping table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bodies import (AffineMap, Body, CrossPolytope, Cube, EuclideanBall, MinkowskiSum, OracleBody,
                     OracleUnavailable, ball_volume, body_label, unit_volume_radius, volume_normalize)
from .centroid import ZqEvaluator, sphere_moment_constant
from .estimate import Estimate, power_mean
from .functionals import radial_moment, slicing_parameter
from .isotropy import isotropic_constant, isotropic_transform
from .sampling import derive_seed, sample_rotation, sample_sphere, sample_uniform

E2 = math.e ** 2
BETA1_BAR = 3 * math.e ** 3


class InsufficientBudget(RuntimeError):
    pass


def _l_of(body: Body, seed: int = 0, budget: int = 200_000) -> float:
    exact = body.isotropic_constant_exact()
    if exact is not None:
        return exact
    return isotropic_constant(body, budget, seed).value


# ----------------------------------------------------------------------
# W and K_1


@dataclass(frozen=True, eq=False)
class WBody(Body):
    """``{x in K : h(x) <= threshold}`` with h frozen to one inner sample.

    Freezing the inner sample makes membership a deterministic set, which
    hit-and-run and rejection sampling both need.
    """

    parent: Body
    q: float
    C1: float
    threshold: float
    inner_points: np.ndarray = field(repr=False)
    slicing: Estimate
    measured_fraction: Optional[Estimate] = None
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    @property
    def n(self):
        return self.parent.n

    @property
    def origin_symmetric(self):
        return self.parent.origin_symmetric

    def _h(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        flat = x.reshape(-1, self.n)
        return ZqEvaluator(self.inner_points, self.q)(flat).reshape(x.shape[:-1])

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.parent.contains(x, tol)) & (self._h(x) <= self.threshold * (1 + tol))

    def support_raw(self, y):
        raise OracleUnavailable("W has no closed-form support function")

    def boundary_level(self, x):
        return np.maximum(self.parent.gauge(x) - 1.0, self._h(x) / self.threshold - 1.0)

    def radius(self):
        return self.parent.radius()

    def sample_exact(self, rng, count):
        """Rejection from exact samples of the parent."""
        probe = self.parent.sample_exact(rng, 1)
        if probe is None:
            return None
        out, have = [], 0
        while have < count:
            need = count - have
            frac = self.measured_fraction.value if self.measured_fraction else 0.5
            pts = self.parent.sample_exact(rng, int(need / max(frac, 0.05) * 1.1) + 16)
            pts = pts[self.contains(pts)]
            out.append(pts[:need])
            have += len(out[-1])
        return np.vstack(out)

    @property
    def markov_bound(self) -> float:
        return 1.0 / self.C1

    def markov_holds(self) -> bool:
        f = self.measured_fraction
        return 1.0 - f.value <= self.markov_bound + 3 * f.std_error

    def to_dict(self):
        return {"shape": "w_body", "n": self.n, "derived": True,
                "provenance": {"parent": self.parent.to_dict(), "q": self.q, "C1": self.C1,
                               "threshold": self.threshold, "seed": self.seed,
                               "inner_sample": len(self.inner_points)}}


def build_w_body(K: Body, q: float, C1: float = E2, *, outer: int = 2048, inner: int = 16384, reps: int = 8,
                 frozen_inner: int = 20_000, fraction_budget: int = 20_000, seed: int = 0,
                 slicing: Optional[Estimate] = None) -> WBody:
    """Truncate K at ``C1`` times its slicing parameter.

    ``slicing`` passes a precomputed I_1(K, Z_q°(K)); otherwise it is
    estimated here with the outer/inner/reps budgets.

    Raises
    ------
    InsufficientBudget
        If the slicing estimate has relative standard error above 5%.
    """
    if C1 <= 1:
        raise ValueError("C1 must exceed 1")
    if not 2 <= q <= K.n:
        raise ValueError("need 2 <= q <= n")
    sl = slicing if slicing is not None else slicing_parameter(K, K, q, outer, inner, reps,
                                                               derive_seed(seed, "w_slicing"))
    if sl.relative_error() > 0.05:
        raise InsufficientBudget(f"slicing estimate relative error {sl.relative_error():.3f} > 5%")
    ys = sample_uniform(K, frozen_inner, derive_seed(seed, "w_inner")).points
    w = WBody(K, q, C1, C1 * sl.value, ys, sl, None, seed)
    xs = sample_uniform(K, fraction_budget, derive_seed(seed, "w_fraction")).points
    frac = Estimate.from_mean(w.contains(xs).astype(float), seed)
    return WBody(K, q, C1, C1 * sl.value, ys, sl, frac, seed)


@dataclass(frozen=True)
class K1Checks:
    z2_ratio_min: float
    z2_ratio_max: float
    z2_tol: float
    z2_pass: bool
    inside_2k_fraction: float
    inside_2k_pass: bool
    second_moment: Estimate
    second_moment_bounds: tuple
    second_moment_pass: bool

    @property
    def all_pass(self):
        return self.z2_pass and self.inside_2k_pass and self.second_moment_pass


def normalize_k1(w: WBody) -> OracleBody:
    """``K_1 = |W|^{-1/n} W`` as an oracle body with an exact sampler."""
    f = w.measured_fraction.value
    lam = f ** (-1.0 / w.n)

    def sampler(rng, count):
        pts = w.sample_exact(rng, count)
        return None if pts is None else lam * pts

    return OracleBody(w.n, lambda x: w.contains(x / lam), lam * w.radius(),
                      sampler if w.parent.sample_exact(np.random.default_rng(0), 1) is not None else None,
                      None, w.origin_symmetric,
                      {"construction": "K1", "scale": lam, "fraction": f, "out_of_regime": f < 0.5,
                       "w": w.to_dict()})


def k1_checks(K: Body, K1: Body, L_K: float, budget: int = 50_000, direction_count: int = 500,
              seed: int = 0) -> K1Checks:
    """Z_2 sandwich, K_1 within 2K, and the second-moment sandwich."""
    n = K.n
    xk = sample_uniform(K, budget, derive_seed(seed, "k1_K")).points
    x1 = sample_uniform(K1, budget, derive_seed(seed, "k1_K1")).points
    dirs = sample_sphere(n, direction_count, derive_seed(seed, "k1_dirs")).directions
    hk, sk = ZqEvaluator(xk, 2)(dirs), ZqEvaluator(xk, 2).support_many(dirs)[1]
    h1, s1 = ZqEvaluator(x1, 2).support_many(dirs)
    ratio = h1 / hk
    se = ratio * np.hypot(s1 / h1, sk / hk)
    tol = 3 * float(se.max())
    z2_pass = bool(np.all(ratio >= 0.5 - 3 * se) and np.all(ratio <= 2 + 3 * se))
    inside = K.contains(x1 / 2.0)
    m2 = Estimate.from_mean(np.sum(x1 * x1, axis=1), seed)
    lo, hi = n * L_K ** 2 / 4, 4 * n * L_K ** 2
    m2_pass = lo - 3 * m2.std_error <= m2.value <= hi + 3 * m2.std_error
    return K1Checks(float(ratio.min()), float(ratio.max()), tol, z2_pass, float(inside.mean()),
                    bool(inside.all()), m2, (lo, hi), bool(m2_pass))


# ----------------------------------------------------------------------
# convolution body


GAMMA_SMALL = 2.0


@dataclass(frozen=True)
class ConvolutionBody:
    parent: Body
    gamma: float
    L_K: float
    r_n: float
    sum_spec: MinkowskiSum
    body: Body  # volume-one, isotropic

    @property
    def small_diameter(self) -> bool:
        return self.gamma <= GAMMA_SMALL

    def support_additivity_error(self, directions) -> float:
        """``max |h_C - (h_K / L_K + r_n)|`` over the given unit directions."""
        lhs = self.sum_spec.support_raw(directions)
        rhs = self.parent.support_raw(directions) / self.L_K + self.r_n
        return float(np.max(np.abs(lhs - rhs)))

    def containment(self, directions):
        """``(min, max)`` of ``h_C / h_{D_n}`` over the directions."""
        r = self.body.support_raw(directions) / self.r_n
        return float(r.min()), float(r.max())

    def containment_audit(self, directions, c7: float = 0.5, c8: float = 4.0):
        """``c7 D_n <= C <= c8 gamma D_n`` through support ratios.

        Returns
        -------
        (min_ratio, max_ratio, passes)
        """
        lo, hi = self.containment(directions)
        return lo, hi, bool(lo >= c7 and hi <= c8 * self.gamma)

    def to_dict(self):
        return {"shape": "convolution", "n": self.parent.n, "derived": True,
                "provenance": {"parent": self.parent.to_dict(), "gamma": self.gamma, "L_K": self.L_K}}


def build_convolution_body(K: Body, L_K: Optional[float] = None, budget: int = 200_000,
                           seed: int = 0) -> ConvolutionBody:
    """``C = K / L_K + D_n``, then volume-normalised and isotropic.

    ``gamma = R(K) / (sqrt(n) L_K)`` is recorded.
    """
    if not K.origin_symmetric:
        raise ValueError("the convolution body needs an origin-symmetric parent")
    n = K.n
    L = _l_of(K, seed) if L_K is None else L_K
    scaled = K.scaled(1.0 / L)
    if not scaled.has_nearest_point():
        raise OracleUnavailable(f"nearest point of {body_label(K)} is unavailable")
    r_n = unit_volume_radius(n)
    s = MinkowskiSum(scaled, EuclideanBall(n, r_n))
    body = volume_normalize(s, budget, derive_seed(seed, "conv_volume"))
    if not body.isotropic_by_symmetry:
        body = isotropic_transform(body, budget, derive_seed(seed, "conv_iso"))[1]
    gamma = K.radius() / (math.sqrt(n) * L)
    return ConvolutionBody(K, float(gamma), float(L), r_n, s, body)


# ----------------------------------------------------------------------
# Ball's bodies B_q(K, F)


def orthonormal_complement(basis) -> np.ndarray:
    """Rows spanning the orthogonal complement of the row space of ``basis``."""
    basis = np.atleast_2d(basis)
    k, n = basis.shape
    _, _, vt = np.linalg.svd(basis, full_matrices=True)
    return vt[k:]


@dataclass
class BallBodyEvaluator:
    """Gauge of ``B_q(K, F)`` for the k-dimensional subspace F.

    Parameters
    ----------
    basis : ndarray, shape (k, n)
        Orthonormal rows spanning F.
    """

    parent: Body
    basis: np.ndarray
    q: float

    def __post_init__(self):
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        k, n = self.basis.shape
        if n != self.parent.n or not 1 <= k < n:
            raise ValueError("need 1 <= dim F < n")
        if np.max(np.abs(self.basis @ self.basis.T - np.eye(k))) > 1e-10:
            raise ValueError("basis of F must be orthonormal")
        self.complement = orthonormal_complement(self.basis)

    @property
    def k(self):
        return self.basis.shape[0]

    @property
    def n(self):
        return self.basis.shape[1]

    def _halfsection_moment(self, phis, count, seed):
        """``int_{K cap E^+(phi)} <x, phi>^q dx`` for each row of ``phis``.

        Polar coordinates inside ``span{E, phi}`` (dimension m = n - k + 1):
        the integral is ``m omega_m / (m + q) E_u[<u, phi>_+^q rho_K(u)^{m+q}]``.
        One sphere sample is shared by all phis.
        """
        m = self.n - self.k + 1
        u = sample_sphere(m, count, derive_seed(seed, "ball_body")).directions
        e_part = u[:, :-1] @ self.complement  # (count, n)
        out = np.empty(len(phis))
        se = np.empty(len(phis))
        for i, phi in enumerate(phis):
            norm = np.linalg.norm(phi)
            amb = e_part + np.outer(u[:, -1], phi / norm)
            t = np.maximum(u[:, -1] * norm, 0.0)
            pos = t > 0
            f = np.zeros(count)
            f[pos] = t[pos] ** self.q * self.parent.gauge(amb[pos]) ** (-(m + self.q))
            c = m * ball_volume(m) / (m + self.q)
            out[i] = c * f.mean()
            se[i] = c * f.std(ddof=1) / math.sqrt(count)
        return out, se

    def gauge(self, phi, budget: int = 20_000, seed: int = 0, method: str = "polar") -> Estimate:
        """``||phi|| = |phi|^{1 + q/(q+1)} ( int_{K cap E^+(phi)} <x,phi>^q dx )^{-1/(q+1)}``.

        ``method="sample"`` integrates over uniform points of K, which is the
        same integral only when k = 1 (then span{E, phi} is the whole space).
        """
        phi = np.asarray(phi, dtype=float)
        norm = np.linalg.norm(phi)
        if norm == 0:
            raise ValueError("phi must be nonzero")
        if np.linalg.norm(phi - (phi @ self.basis.T) @ self.basis) > 1e-10 * norm:
            raise ValueError("phi must lie in F")
        if method == "sample":
            if self.k != 1:
                raise ValueError("full-body sampling computes the sectional integral only for k = 1")
            x = sample_uniform(self.parent, budget, seed).points
            t = x @ phi
            pos = t > 0
            if pos.sum() < 1000:
                raise InsufficientBudget("fewer than 1000 samples in the halfspace")
            f = np.where(pos, np.abs(t), 0.0) ** self.q
            moment, mse = f.mean(), f.std(ddof=1) / math.sqrt(budget)
        elif method == "polar":
            mo, ms = self._halfsection_moment(phi[None, :], budget, seed)
            moment, mse = mo[0], ms[0]
        else:
            raise ValueError(f"unknown method {method!r}")
        value = norm ** (1 + self.q / (self.q + 1)) * moment ** (-1.0 / (self.q + 1))
        return Estimate(float(value), float(value * mse / moment / (self.q + 1)), budget, seed)

    def radial_profile(self, direction_count: int = 256, budget: int = 4096, seed: int = 0):
        """Directions u of S_F (in F-coordinates) and the radial function 1/||u||."""
        if self.k == 1:
            u = np.array([[1.0], [-1.0]])
        else:
            u = sample_sphere(self.k, direction_count, derive_seed(seed, "ball_dirs")).directions
        mom, _ = self._halfsection_moment(u @ self.basis, budget, seed)
        g = mom ** (-1.0 / (self.q + 1))  # unit |phi|
        return u, 1.0 / g


def ball_body_gauge(ev: BallBodyEvaluator, phi, budget: int = 20_000, seed: int = 0,
                    method: str = "polar") -> Estimate:
    return ev.gauge(phi, budget, seed, method)


def _ball_body_moments(u, rho, k, p=None, theta=None):
    w = ball_volume(k)
    vol = w * np.mean(rho ** k)
    if theta is None:
        m = k * w / (k + 2) * np.einsum("j,ja,jb->ab", rho ** (k + 2), u, u) / len(u)
        return vol, m
    s = k * w / (k + p) * np.mean(rho[:, None] ** (k + p) * np.abs(u @ theta.T) ** p, axis=0)
    return vol, s


def section_volume(K: Body, section_basis, count: int = 20_000, seed: int = 0):
    """``|K cap S|`` for the subspace S spanned by the orthonormal rows.

    Closed form for cube, ball and cross-polytope on coordinate subspaces;
    otherwise radial Monte Carlo inside S.

    Returns
    -------
    volume : float
    exact : bool
    """
    b = np.atleast_2d(section_basis)
    d = b.shape[0]
    axis = np.all(np.isclose(np.abs(b), 0) | np.isclose(np.abs(b), 1)) and np.allclose(np.abs(b).sum(axis=1), 1)
    if axis:
        if isinstance(K, Cube):
            return K.side ** d, True
        if isinstance(K, EuclideanBall):
            return ball_volume(d) * K.r ** d, True
        if isinstance(K, CrossPolytope):
            return (2 * K.scale) ** d / math.factorial(d), True
    u = sample_sphere(d, count, derive_seed(seed, "section")).directions
    rho = 1.0 / K.gauge(u @ b)
    return float(ball_volume(d) * np.mean(rho ** d)), False


@dataclass(frozen=True)
class KBReport:
    k: int
    section_volume: float
    section_exact: bool
    L_B: float
    L_K: float
    kb1_ratio: float  # |K cap F^perp|^{1/k} / (L_B / L_K)
    kb2_ratios: dict  # p -> (min, max) over directions in F


def kb_ratio_report(K: Body, basis, L_K: Optional[float] = None, p_values=(1,), direction_count: int = 256,
                    budget: int = 4096, sample_budget: int = 100_000, seed: int = 0) -> KBReport:
    """Ratios comparing B_{k+1}(K, F) with the section ``K cap F^perp``.

    KB1: ``|K cap F^perp|^{1/k}`` against ``L_B / L_K``.
    KB2: ``h_{Z_p(bar B)}(theta)`` against ``|K cap F^perp|^{1/k} h_{Z_p(K)}(theta)``.
    """
    basis = np.atleast_2d(basis)
    k = basis.shape[0]
    L = _l_of(K, seed) if L_K is None else L_K
    ev = BallBodyEvaluator(K, basis, k + 1)
    u, rho = ev.radial_profile(direction_count, budget, seed)
    vol, m = _ball_body_moments(u, rho, k)
    L_B = float(np.linalg.det(m) ** (1.0 / k) / vol ** (1 + 2.0 / k)) ** 0.5
    sec, exact = section_volume(K, ev.complement, seed=seed)
    kb1 = sec ** (1.0 / k) / (L_B / L)
    thetas = u if k > 1 else np.array([[1.0]])
    xs = sample_uniform(K, sample_budget, derive_seed(seed, "kb_points")).points
    kb2 = {}
    for p in p_values:
        _, s = _ball_body_moments(u, rho, k, p, thetas)
        hb = (vol ** (-1.0 - p / k) * s) ** (1.0 / p)
        hk = ZqEvaluator(xs, p)(thetas @ basis)
        r = hb / (sec ** (1.0 / k) * hk)
        kb2[p] = (float(r.min()), float(r.max()))
    return KBReport(k, float(sec), exact, L_B, float(L), float(kb1), kb2)


# ----------------------------------------------------------------------
# rotation averages


@dataclass(frozen=True)
class RotationAverage:
    q: float
    rotation_count: int
    values: np.ndarray = field(repr=False)
    lhs: Estimate  # (E_U I_1^q)^{1/q}
    c_nq: float
    I_q: Estimate
    rhs: float  # c_{n,q} I_q(K)^2
    rhs_se: float
    fraction_below: float
    C2: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs.value

    @property
    def passes(self) -> bool:
        return self.lhs.value <= self.rhs + 3 * math.hypot(self.lhs.std_error, self.rhs_se)


def rotation_average(K: Body, q: float, rotation_count: int = 64, *, outer: int = 1024, inner: int = 4096,
                     reps: int = 2, seed: int = 0, C2: float = 1.0, L_K: Optional[float] = None,
                     radial_budget: int = 200_000) -> RotationAverage:
    """``(int_{O(n)} I_1^q(K, Z_q°(U K)) dnu)^{1/q}`` against ``c_{n,q} I_q(K)^2``."""
    if rotation_count < 32:
        raise ValueError("rotation_count must be at least 32")
    n = K.n
    vals, ses = [], []
    for i in range(rotation_count):
        u = sample_rotation(n, seed, i)
        est = slicing_parameter(K, K, q, outer, inner, reps, derive_seed(seed, "rot", i), rotation=u)
        vals.append(est.value)
        ses.append(est.std_error)
    vals, ses = np.asarray(vals), np.asarray(ses)
    pq = vals ** q
    m = pq.mean()
    # spread over rotations plus the per-rotation estimation noise
    var = pq.var(ddof=1) / rotation_count + np.mean((q * vals ** (q - 1) * ses) ** 2) / rotation_count
    lhs = m ** (1.0 / q)
    lhs_se = lhs * math.sqrt(var) / (q * m)
    iq = radial_moment(K, q, radial_budget, derive_seed(seed, "rot_iq"), method="radial")
    c = sphere_moment_constant(n, q)
    rhs = c * iq.value ** 2
    L = _l_of(K, seed) if L_K is None else L_K
    below = float(np.mean(vals <= C2 * math.sqrt(q * n) * L ** 2))
    return RotationAverage(q, rotation_count, vals, Estimate(lhs, lhs_se, rotation_count, seed), c, iq, rhs,
                           2 * c * iq.value * iq.std_error, below, C2)


# ----------------------------------------------------------------------
# maximal-inequality and subset-inclusion audits


@dataclass(frozen=True)
class MaxInequalityAudit:
    q: float
    p: float
    N: int
    lhs: Estimate  # (E max_i |<x, z_i>|^q)^{1/q}
    max_h_p: float
    bound: float  # 3 e^3 max_i h_{Z_p}(z_i)
    max_h_q: float
    max_h_1: float

    @property
    def passes(self) -> bool:
        return self.lhs.value - 3 * self.lhs.std_error <= self.bound

    @property
    def crossover_ratio(self) -> float:
        """lhs / max_i h_{Z_q}(z_i), against ``log N / q`` when q <= log N."""
        return self.lhs.value / self.max_h_q


def max_inequality_audit(K: Body, q: float, vectors=None, budget: int = 200_000, seed: int = 0,
                         points=None) -> MaxInequalityAudit:
    """``(int_K max_i |<x, z_i>|^q)^{1/q} <= 3 e^3 max_i h_{Z_p(K)}(z_i)``, p = max(log N, q)."""
    n = K.n
    z = np.eye(n) if vectors is None else np.atleast_2d(vectors)
    N = len(z)
    p = max(math.log(N), q)
    if points is None:
        points = sample_uniform(K, budget, seed).points
    mx = np.max(np.abs(points @ z.T), axis=1)
    lhs = power_mean(mx, q, seed)
    hp = float(ZqEvaluator(points, p)(z).max())
    hq = float(ZqEvaluator(points, q)(z).max())
    h1 = float(ZqEvaluator(points, 1)(z).max())
    return MaxInequalityAudit(q, p, N, lhs, hp, BETA1_BAR * hp, hq, h1)


@dataclass(frozen=True)
class InclusionAudit:
    fraction: float
    p: float
    direction: str  # "K<=2A" or "A<=2K"
    applicable: bool
    worst_ratio: float
    passes: bool


def subset_inclusion_audit(K: Body, w: WBody, q: float, beta2_bar: float = 1.0, budget: int = 20_000,
                           direction_count: int = 200, seed: int = 0, p_values=None):
    """Support comparisons between K and the volume-one homothet of A = W.

    ``h_{Z_p(K)} <= 2 h_{Z_p(bar A)}`` for p <= q needs ``|A| >= 1 - e^{-beta2_bar q}``;
    ``h_{Z_p(bar A)} <= 2 h_{Z_p(K)}`` for r <= p <= n needs ``|A| >= 2^{-r/2}``.
    Both are checked with 3 combined standard errors of slack.
    """
    n = K.n
    xs = sample_uniform(K, budget, derive_seed(seed, "lemma_points")).points
    inside = w.contains(xs)
    frac = float(inside.mean())
    a = xs[inside]
    lam = frac ** (-1.0 / n)
    dirs = sample_sphere(n, direction_count, derive_seed(seed, "lemma_dirs")).directions
    r = max(1, math.ceil(-2 * math.log2(frac))) if frac < 1 else 1
    ps = sorted(set([1.0, 2.0, float(q), float(n)] if p_values is None else p_values))
    out = []
    for p in ps:
        hk, sk = ZqEvaluator(xs, p).support_many(dirs)
        ha, sa = ZqEvaluator(a, p).support_many(dirs)
        ha, sa = lam * ha, lam * sa
        if p <= q:
            ok_region = frac >= 1 - math.exp(-beta2_bar * q)
            slack = 3 * np.hypot(sk, 2 * sa)
            worst = float(np.max(hk / (2 * ha)))
            out.append(InclusionAudit(frac, p, "K<=2A", ok_region, worst, bool(np.all(hk <= 2 * ha + slack))))
        if r <= p <= n:
            slack = 3 * np.hypot(sa, 2 * sk)
            worst = float(np.max(ha / (2 * hk)))
            out.append(InclusionAudit(frac, p, "A<=2K", frac >= 2 ** (-r / 2), worst,
                                      bool(np.all(ha <= 2 * hk + slack))))
    return out


def truncation_diagnostics(n: int, q: float, I1: float, L_K: float, kappa: float = 1.0, C1: float = E2,
                          beta2: float = 1.0, rho: float = 0.1) -> dict:
    """The t_0 / p_0 bookkeeping of the W-body argument (report only).

    ``C2 = 16 C1 beta2 bar-beta1``, ``t0^2 = 16 C2 kappa max{1, I1/(sqrt(qn) L^2)} n^{3/2} log^2 n / sqrt(q)``
    and ``p0 = 4 kappa n^2 log^2 n / t0^2``.
    """
    C2 = 16 * C1 * beta2 * BETA1_BAR
    ratio = I1 / (math.sqrt(q * n) * L_K ** 2)
    log2n = math.log(n) ** 2 if n > 1 else 0.0
    t0sq = 16 * C2 * kappa * max(1.0, ratio) * n ** 1.5 / math.sqrt(q) * log2n
    p0 = 4 * kappa * n ** 2 * log2n / t0sq if t0sq > 0 else float("inf")
    return {"n": n, "q": q, "C2": C2, "ratio": ratio, "t0_sq": t0sq, "p0": p0, "p0_ge_q": p0 >= q,
            "rho": rho, "q_le_rho2n": q <= rho ** 2 * n, "I1_le_rho_n_L2": I1 <= rho * n * L_K ** 2,
            "rho_lt_1_over_4C2": rho < 1 / (4 * C2)}
