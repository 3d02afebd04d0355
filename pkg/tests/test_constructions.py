import math

import numpy as np
import pytest
from scipy import integrate

from slicelab.bodies import (Cube, CrossPolytope, EuclideanBall, LpBall, OracleUnavailable, Simplex,
                             volume_normalize)
from slicelab.centroid import sphere_moment_constant
from slicelab.constructions import (BETA1_BAR, E2, BallBodyEvaluator, InsufficientBudget, build_convolution_body,
                                    build_w_body, k1_checks, kb_ratio_report, max_inequality_audit,
                                    normalize_k1, orthonormal_complement, rotation_average, section_volume,
                                    subset_inclusion_audit, truncation_diagnostics)
from slicelab.sampling import sample_sphere, sample_uniform


def halfsection_gauge_quadrature(q):
    """Gauge of e_1 in B_3(cube_3, span{e1, e2}): the section is span{e1, e3}."""
    moment = integrate.dblquad(lambda x3, x1: x1 ** q, 0, 0.5, -0.5, 0.5)[0]
    return moment ** (-1 / (q + 1))


# frozen: (int_0^{1/2} x^3 dx)^{-1/4} = 64^{1/4}
CUBE3_BALL_GAUGE = math.sqrt(8)
SQUARE_BALL_GAUGE = 24 ** (1 / 3)


def test_frozen_gauge_oracles():
    assert halfsection_gauge_quadrature(3) == pytest.approx(CUBE3_BALL_GAUGE, rel=1e-10)
    moment = integrate.dblquad(lambda x2, x1: x1 ** 2, 0, 0.5, -0.5, 0.5)[0]
    assert moment ** (-1 / 3) == pytest.approx(SQUARE_BALL_GAUGE, rel=1e-10)


def test_ball_body_gauge_k2():
    K = Cube(3)
    ev = BallBodyEvaluator(K, np.array([[1.0, 0, 0], [0, 1.0, 0]]), 3)
    est = ev.gauge([1.0, 0, 0], 100_000, seed=0)
    assert abs(est.value - CUBE3_BALL_GAUGE) <= 4 * est.std_error
    with pytest.raises(ValueError):
        ev.gauge([1.0, 0, 0], method="sample")


def test_ball_body_gauge_k1_methods_agree():
    ev = BallBodyEvaluator(Cube(2), np.array([[1.0, 0.0]]), 2)
    a = ev.gauge([1.0, 0.0], 100_000, seed=1)
    b = ev.gauge([1.0, 0.0], 100_000, seed=1, method="sample")
    for est in (a, b):
        assert abs(est.value - SQUARE_BALL_GAUGE) <= 4 * est.std_error


@pytest.mark.parametrize("lam", [0.25, 1.0, 3.0])
def test_ball_body_gauge_homogeneous(lam):
    ev = BallBodyEvaluator(Cube(3), np.array([[1.0, 0, 0], [0, 1.0, 0]]), 3)
    phi = np.array([0.6, 0.8, 0.0])
    a = ev.gauge(phi, 20_000, seed=2)
    b = ev.gauge(lam * phi, 20_000, seed=2)
    assert b.value == pytest.approx(lam * a.value, rel=1e-10)


def test_ball_body_argument_checks():
    K = Cube(3)
    with pytest.raises(ValueError):
        BallBodyEvaluator(K, np.array([[1.0, 1.0, 0]]), 2)
    with pytest.raises(ValueError):
        BallBodyEvaluator(K, np.eye(3), 2)
    ev = BallBodyEvaluator(K, np.array([[1.0, 0, 0]]), 2)
    with pytest.raises(ValueError):
        ev.gauge([0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        ev.gauge([0.0, 0.0, 0.0])


def test_orthonormal_complement():
    b = np.array([[1.0, 1.0, 0.0, 0.0]]) / math.sqrt(2)
    c = orthonormal_complement(b)
    assert c.shape == (3, 4)
    assert np.allclose(c @ c.T, np.eye(3))
    assert np.allclose(c @ b.T, 0)


def test_section_volume():
    assert section_volume(Cube(4), np.eye(4)[:2]) == (1.0, True)
    vol, exact = section_volume(CrossPolytope(3, 1.0), np.eye(3)[:2])
    assert exact and vol == pytest.approx(2.0)
    # plane orthogonal to (1, 1, 0): a sqrt 2 by 1 rectangle
    plane = np.array([[1.0, -1.0, 0.0], [0.0, 0.0, math.sqrt(2)]]) / math.sqrt(2)
    vol, exact = section_volume(Cube(3), plane, count=200_000, seed=0)
    assert not exact and vol == pytest.approx(math.sqrt(2), rel=0.01)


def test_kb_ratios():
    # every symmetric 1-d body is a segment, so L_B = 12^{-1/2} for k = 1
    rep = kb_ratio_report(Cube(3), np.eye(3)[:1], 12 ** -0.5, (1, 2), seed=0)
    assert rep.L_B == pytest.approx(12 ** -0.5)
    assert rep.kb1_ratio == pytest.approx(1.0)
    rep = kb_ratio_report(Cube(4), np.eye(4)[:2], 12 ** -0.5, (1, 2), seed=0)
    assert rep.section_exact
    assert 0.9 <= rep.kb1_ratio <= 1.1
    for lo, hi in rep.kb2_ratios.values():
        assert 0.9 <= lo <= hi <= 1.1


@pytest.fixture(scope="module")
def w_square():
    return build_w_body(Cube(2), 2, outer=1024, inner=4096, reps=8, frozen_inner=10_000,
                        fraction_budget=20_000, seed=3)


def test_w_body_markov(w_square):
    w = w_square
    assert w.threshold == pytest.approx(E2 * w.slicing.value)
    assert w.markov_bound == pytest.approx(1 / E2)
    assert w.markov_holds()
    assert w.measured_fraction.value >= 1 - 1 / E2


def test_w_body_membership_and_sampling(w_square):
    w = w_square
    pts = w.sample_exact(np.random.default_rng(0), 500)
    assert pts.shape == (500, 2)
    assert np.all(w.contains(pts))
    assert np.all(Cube(2).contains(pts))
    assert not w.contains(np.array([[2.0, 0.0]]))[0]
    assert w.to_dict()["shape"] == "w_body"
    with pytest.raises(OracleUnavailable):
        w.support_raw(np.array([[1.0, 0.0]]))


def test_w_body_argument_checks():
    with pytest.raises(ValueError):
        build_w_body(Cube(3), 2, C1=1.0)
    with pytest.raises(ValueError):
        build_w_body(Cube(3), 4)
    with pytest.raises(ValueError):
        build_w_body(Cube(3), 1)
    with pytest.raises(InsufficientBudget):
        build_w_body(Cube(2), 2, outer=4, inner=8, reps=2, seed=0)


def test_k1(w_square):
    K1 = normalize_k1(w_square)
    assert K1.provenance["construction"] == "K1"
    assert not K1.provenance["out_of_regime"]
    chk = k1_checks(Cube(2), K1, 12 ** -0.5, budget=20_000, direction_count=200, seed=4)
    assert chk.all_pass
    assert chk.inside_2k_fraction == 1.0
    lo, hi = chk.second_moment_bounds
    assert lo == pytest.approx(2 / 48) and hi == pytest.approx(8 / 12)


def test_convolution_body_cube():
    conv = build_convolution_body(Cube(4), 12 ** -0.5, budget=100_000, seed=5)
    assert conv.gamma == pytest.approx(math.sqrt(3))
    assert conv.small_diameter
    dirs = sample_sphere(4, 500, 0).directions
    assert conv.support_additivity_error(dirs) < 1e-9
    lo, hi, ok = conv.containment_audit(dirs)
    assert ok and lo >= 0.5 and hi <= 4 * conv.gamma
    assert conv.body.volume() == pytest.approx(1.0, rel=1e-6)
    assert conv.to_dict()["shape"] == "convolution"


def test_convolution_body_of_ball_is_ball():
    ball = volume_normalize(EuclideanBall(3))
    conv = build_convolution_body(ball, seed=6)
    assert conv.gamma == pytest.approx(math.sqrt(5 / 3))
    dirs = sample_sphere(3, 200, 0).directions
    lo, hi = conv.containment(dirs)
    assert lo == pytest.approx(hi, rel=1e-9)
    assert lo == pytest.approx(1.0, rel=1e-9)


def test_convolution_body_rejections():
    with pytest.raises(ValueError):
        build_convolution_body(volume_normalize(Simplex(3)))
    with pytest.raises(OracleUnavailable):
        build_convolution_body(volume_normalize(LpBall(3, 4.0)), L_K=0.28)


def test_rotation_average_disc():
    # for the disc every rotation gives the same slicing parameter, 2/(3 sqrt pi) L
    disc = volume_normalize(EuclideanBall(2))
    L = disc.isotropic_constant_exact()
    res = rotation_average(disc, 2, 32, outer=256, inner=2048, reps=2, seed=7, L_K=L)
    exact_lhs = 2 / (3 * math.sqrt(math.pi)) * L
    exact_rhs = sphere_moment_constant(2, 2) * 2 * L ** 2
    assert abs(res.lhs.value - exact_lhs) <= 4 * res.lhs.std_error + 2e-3
    assert res.rhs == pytest.approx(exact_rhs, rel=0.01)
    assert res.passes
    assert res.fraction_below == 1.0
    with pytest.raises(ValueError):
        rotation_average(disc, 2, 16)


def test_max_inequality_cube():
    K = Cube(4)
    pts = sample_uniform(K, 100_000, 8).points
    for q in (1, 2, 4):
        a = max_inequality_audit(K, q, points=pts)
        assert a.N == 4 and a.p == max(math.log(4), q)
        assert a.passes
        assert a.bound == pytest.approx(BETA1_BAR * a.max_h_p)
        # a maximum dominates each term
        assert a.crossover_ratio >= 1.0
        assert a.max_h_1 <= a.max_h_q * (1 + 1e-12)
    # E max |x_i| over the cube: N/(2(N+1)) for N coordinates
    a = max_inequality_audit(K, 1, points=pts)
    assert abs(a.lhs.value - 0.4) <= 4 * a.lhs.std_error


def test_subset_inclusion(w_square):
    rows = subset_inclusion_audit(Cube(2), w_square, 2, budget=20_000, direction_count=100, seed=9)
    assert {r.direction for r in rows} == {"K<=2A", "A<=2K"}
    assert all(r.passes for r in rows if r.applicable)
    assert all(0 < r.fraction <= 1 for r in rows)


def test_diagnostics_formulae():
    d = truncation_diagnostics(64, 4, I1=1.0, L_K=0.25, kappa=1.0)
    C2 = 16 * E2 * BETA1_BAR
    assert d["C2"] == pytest.approx(C2)
    ratio = 1.0 / (math.sqrt(4 * 64) * 0.0625)
    assert d["ratio"] == pytest.approx(ratio)
    t0 = 16 * C2 * max(1, ratio) * 64 ** 1.5 / 2 * math.log(64) ** 2
    assert d["t0_sq"] == pytest.approx(t0)
    assert d["p0"] == pytest.approx(4 * 64 ** 2 * math.log(64) ** 2 / t0)
    assert d["p0_ge_q"] is False
    assert d["rho_lt_1_over_4C2"] is False
