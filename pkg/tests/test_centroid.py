import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.special import gamma

from slicelab.bodies import Cube, EuclideanBall, volume_normalize
from slicelab.centroid import (ZqEvaluator, inclusion_ratio, sphere_argmax, sphere_moment_constant, zq_polar_norm,
                               zq_radius, zq_support, zq_width)
from slicelab.estimate import Estimate, power_mean
from slicelab.sampling import sample_uniform

DIAG = np.array([1.0, 1.0]) / math.sqrt(2)

# Closed forms for the unit-volume square [-1/2, 1/2]^2.  On the diagonal,
# <x, u> = s / sqrt 2 with s triangular on [-1, 1] (density 1 - |s|).
CUBE_E1 = {1: 0.25, 2: 12 ** -0.5, 4: (1 / 80) ** 0.25}
CUBE_DIAG = {1: (1 / 3) / math.sqrt(2), 2: 12 ** -0.5, 4: (1 / 60) ** 0.25}


def square_moment_grid(u, q, m=600):
    """Midpoint rule for (E|<x,u>|^q)^{1/q} on the unit square."""
    g = (np.arange(m) + 0.5) / m - 0.5
    x, y = np.meshgrid(g, g)
    return float(np.mean(np.abs(u[0] * x + u[1] * y) ** q) ** (1 / q))


def test_frozen_cube_oracles():
    e1 = np.array([1.0, 0.0])
    for q in (1, 2, 4):
        assert square_moment_grid(e1, q) == pytest.approx(CUBE_E1[q], rel=1e-4)
        assert square_moment_grid(DIAG, q) == pytest.approx(CUBE_DIAG[q], rel=1e-4)


@pytest.fixture(scope="module")
def cube_points():
    return sample_uniform(Cube(2), 400_000, seed=11).points


@pytest.mark.parametrize("q", [1, 2, 4])
def test_cube_support_values(cube_points, q):
    ev = ZqEvaluator(cube_points, q)
    for u, table in ((np.array([1.0, 0.0]), CUBE_E1), (DIAG, CUBE_DIAG)):
        est = ev.support(u)
        assert abs(est.value - table[q]) <= 4 * est.std_error + 1e-4


def test_zq_support_and_polar_norm_agree():
    a = zq_support(Cube(2), 2, [1.0, 0.0], 100_000, seed=1)
    b = zq_polar_norm(Cube(2), 2, [1.0, 0.0], 100_000, seed=1)
    assert a == b
    assert a.value == pytest.approx(12 ** -0.5, rel=0.01)


def test_non_normalized_body_rejected():
    with pytest.raises(ValueError):
        ZqEvaluator.for_body(Cube(2, side=2.0), 2)
    with pytest.raises(ValueError):
        ZqEvaluator(np.zeros((4, 2)), 0.5)


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2).filter(lambda v: np.hypot(*v) > 1e-3),
       st.floats(0.1, 10.0), st.sampled_from([1.0, 2.0, 3.5, 8.0]))
def test_homogeneity_and_symmetry(cube_points, y, lam, q):
    ev = ZqEvaluator(cube_points[:5000], q)
    y = np.array(y)
    h = ev(y[None, :])[0]
    assert ev((lam * y)[None, :])[0] == pytest.approx(lam * h, rel=1e-10)
    assert ev((-y)[None, :])[0] == pytest.approx(h, rel=1e-10)


@settings(max_examples=30)
@given(st.floats(0, 2 * math.pi), st.floats(1.0, 6.0), st.floats(0.0, 6.0))
def test_moment_monotone_in_q(cube_points, angle, p, dq):
    # Holder on the frozen sample: q -> h_{Z_q} is nondecreasing
    u = np.array([[math.cos(angle), math.sin(angle)]])
    pts = cube_points[:5000]
    assert ZqEvaluator(pts, p)(u)[0] <= ZqEvaluator(pts, p + dq)(u)[0] * (1 + 1e-12)


def test_moment_growth_is_at_most_linear(cube_points):
    # reverse Holder for log-concave measures: h_q / h_p <= C q / p
    u = np.array([[1.0, 0.3]])
    for p, q in ((1, 2), (2, 8), (1, 16)):
        r = ZqEvaluator(cube_points, q)(u)[0] / ZqEvaluator(cube_points, p)(u)[0]
        assert 1.0 <= r <= 2.0 * q / p


def sphere_moment_quadrature(n, q):
    """(int_{S^{n-1}} |theta_1|^q dsigma)^{1/q} from the density of theta_1."""
    norm = gamma(n / 2) / (math.sqrt(math.pi) * gamma((n - 1) / 2))
    val = integrate.quad(lambda t: abs(t) ** q * (1 - t * t) ** ((n - 3) / 2), -1, 1)[0]
    return (norm * val) ** (1 / q)


@pytest.mark.parametrize("n,q", [(2, 1), (2, 2), (3, 1), (3, 4), (8, 2), (16, 3.5), (64, 16)])
def test_sphere_moment_constant(n, q):
    assert sphere_moment_constant(n, q) == pytest.approx(sphere_moment_quadrature(n, q), rel=1e-8)


def test_sphere_moment_constant_special_values():
    assert sphere_moment_constant(2, 2) == pytest.approx(math.sqrt(0.5))
    assert sphere_moment_constant(5, 2) == pytest.approx(math.sqrt(1 / 5))
    # large n stays finite through log-gamma
    assert sphere_moment_constant(10_000, 2) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        sphere_moment_constant(3, 0)


def test_sphere_argmax_finds_known_maximum():
    target = np.array([0.6, -0.8, 0.0])
    best, theta = sphere_argmax(lambda d: d @ target, 3, 200, seed=0)
    assert best == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(theta, target, atol=1e-3)


def test_radius_matches_brute_force():
    # Z_4 of the square: brute-force maximum over a fine angle grid
    angles = np.linspace(0, math.pi, 361)
    brute = max(square_moment_grid(np.array([math.cos(a), math.sin(a)]), 4, 300) for a in angles)
    assert brute == pytest.approx(CUBE_DIAG[4], rel=1e-3)
    est, theta = zq_radius(Cube(2), 4, direction_count=400, budget=400_000, seed=3)
    assert abs(est.value - brute) <= 4 * est.std_error + 1e-3
    assert abs(abs(theta[0]) - abs(theta[1])) < 0.1


def test_width_of_isotropic_z2():
    # h_{Z_2} of an isotropic body is the constant L_K
    for r in (1.0, 2.0, -1.0):
        res = zq_width(Cube(2), 2, r, direction_count=500, budget=400_000, seed=4)
        assert res.estimate.value == pytest.approx(12 ** -0.5, rel=0.01)
        assert abs(res.inner_bias) < 0.01


def test_width_order_in_r(cube_points):
    ev = ZqEvaluator(cube_points, 4)
    w = [zq_width(None, 4, r, 500, seed=5, evaluator=ev).estimate.value for r in (-1.0, 1.0, 2.0, 8.0)]
    assert w == sorted(w)
    with pytest.raises(ValueError):
        zq_width(None, 4, 0, evaluator=ev)


def test_inclusion_ratio_cube():
    # h_{Z_2}/h_{Z_1} is largest on the diagonal: sqrt(1/12) / (sqrt 2 / 6) = sqrt(3/2)
    assert CUBE_DIAG[2] / CUBE_DIAG[1] == pytest.approx(math.sqrt(1.5))
    r, d = inclusion_ratio(Cube(2), 1, 2, direction_count=500, budget=400_000, seed=6)
    assert r == pytest.approx(math.sqrt(1.5), rel=0.01)
    assert abs(abs(d[0]) - abs(d[1])) < 0.1
    assert inclusion_ratio(Cube(2), 2, 2, budget=10)[0] == 1.0
    with pytest.raises(ValueError):
        inclusion_ratio(Cube(2), 3, 2)


def test_ball_z2_is_round():
    ball = volume_normalize(EuclideanBall(3))
    ev = ZqEvaluator.for_body(ball, 2, 200_000, seed=7)
    dirs = np.eye(3)
    vals = ev(dirs)
    L = ball.isotropic_constant_exact()
    assert np.allclose(vals, L, rtol=0.01)


def test_power_mean_against_numpy():
    v = np.random.default_rng(0).uniform(0.5, 2.0, 1000)
    for q in (1.0, 3.0, -2.0):
        assert power_mean(v, q).value == pytest.approx(np.mean(v ** q) ** (1 / q), rel=1e-12)
    assert Estimate.exact(2.0).power(0.5).value == pytest.approx(math.sqrt(2))
