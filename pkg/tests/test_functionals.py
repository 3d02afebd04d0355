import math

import numpy as np
import pytest
from scipy import integrate

from slicelab.bodies import Cube, EuclideanBall, volume_normalize
from slicelab.centroid import ZqEvaluator
from slicelab.functionals import (default_q_grid, iq_norm_moment, kstar, polar_volume_radius, qstar,
                                  radial_moment, slicing_from_samples, slicing_parameter)
from slicelab.sampling import derive_seed, sample_uniform

# frozen oracles (closed forms cross-checked by quadrature below)
CUBE2_I2 = math.sqrt(1 / 6)                        # (int |x|^2)^{1/2} over the unit square
CUBE2_I_NEG1 = 1 / (4 * math.log(1 + math.sqrt(2)))  # (int |x|^{-1})^{-1}
SEG_SLICING = 0.25 / math.sqrt(12)                 # 1-d: int |x| dx * 12^{-1/2}
DISC_SLICING = 2 / (3 * math.sqrt(math.pi)) / (2 * math.sqrt(math.pi))


def test_frozen_oracles_by_quadrature():
    i2 = integrate.dblquad(lambda y, x: x * x + y * y, -0.5, 0.5, -0.5, 0.5)[0]
    assert math.sqrt(i2) == pytest.approx(CUBE2_I2, rel=1e-10)
    # 1/|x| over the square, in polar coordinates on one eighth
    eighth = integrate.quad(lambda a: 0.5 / math.cos(a), 0, math.pi / 4)[0]
    assert 1 / (8 * eighth) == pytest.approx(CUBE2_I_NEG1, rel=1e-10)
    seg = integrate.quad(lambda x: abs(x), -0.5, 0.5)[0] * 12 ** -0.5
    assert seg == pytest.approx(SEG_SLICING, rel=1e-12)
    r = 1 / math.sqrt(math.pi)
    disc = integrate.quad(lambda t: 2 * math.pi * t * t, 0, r)[0] * volume_normalize(
        EuclideanBall(2)).isotropic_constant_exact()
    assert disc == pytest.approx(DISC_SLICING, rel=1e-10)
    assert DISC_SLICING == pytest.approx(0.106103, abs=1e-6)
    assert SEG_SLICING == pytest.approx(0.072169, abs=1e-6)


def test_radial_moment_cube():
    est = radial_moment(Cube(2), 2, 400_000, seed=1)
    assert abs(est.value - CUBE2_I2) <= 4 * est.std_error + 1e-4
    assert est.value == pytest.approx(0.40825, abs=2e-3)


def test_radial_method_agrees_with_sampling():
    a = radial_moment(Cube(3), 2, 200_000, seed=2, method="sample")
    b = radial_moment(Cube(3), 2, 200_000, seed=2, method="radial")
    assert abs(a.value - b.value) <= 4 * math.hypot(a.std_error, b.std_error)
    assert a.value == pytest.approx(math.sqrt(3 / 12), rel=0.01)


def test_negative_moment():
    est = radial_moment(Cube(2), -1, 200_000, seed=3)
    assert abs(est.value - CUBE2_I_NEG1) <= 4 * est.std_error + 1e-4
    # close to the forbidden endpoint the radial form stays finite
    est = radial_moment(Cube(2), -1.9, 200_000, seed=3)
    assert np.isfinite(est.value) and est.value > 0


def test_ball_radial_moment_closed_form():
    # unit-volume ball: int |x|^q = n omega_n r^{n+q}/(n+q)
    n, q = 4, 3.0
    ball = volume_normalize(EuclideanBall(n))
    r = ball.radius()
    omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    exact = (n * omega * r ** (n + q) / (n + q)) ** (1 / q)
    for method in ("sample", "radial"):
        est = radial_moment(ball, q, 200_000, seed=4, method=method)
        assert est.value == pytest.approx(exact, rel=0.01)


def test_norm_moment_homogeneity():
    C1 = EuclideanBall(2, 1.0)
    C2 = EuclideanBall(2, 2.0)
    a = iq_norm_moment(Cube(2), C1, 2, 50_000, seed=5)
    b = iq_norm_moment(Cube(2), C2, 2, 50_000, seed=5)
    assert b.value == pytest.approx(a.value / 2, rel=1e-12)


@pytest.mark.parametrize("q", [0, -2, -3])
def test_invalid_q(q):
    with pytest.raises(ValueError):
        radial_moment(Cube(2), q, 100)


def test_unknown_method():
    with pytest.raises(ValueError):
        radial_moment(Cube(2), 2, 100, method="bogus")


def test_slicing_segment():
    est = slicing_parameter(Cube(1), Cube(1), 2, outer=4096, inner=16384, reps=8, seed=6)
    assert abs(est.value - SEG_SLICING) <= 4 * est.std_error + 2e-4


def test_slicing_disc():
    disc = volume_normalize(EuclideanBall(2))
    est = slicing_parameter(disc, disc, 2, outer=4096, inner=16384, reps=8, seed=7)
    assert abs(est.value - DISC_SLICING) <= 4 * est.std_error + 2e-4


def test_slicing_rotation_invariance_for_ball():
    disc = volume_normalize(EuclideanBall(2))
    a = slicing_parameter(disc, disc, 2, outer=2048, inner=8192, reps=4, seed=8)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    b = slicing_parameter(disc, disc, 2, outer=2048, inner=8192, reps=4, seed=8, rotation=rot)
    assert abs(a.value - b.value) <= 4 * math.hypot(a.std_error, b.std_error)


def test_slicing_threads_deterministic():
    a = slicing_parameter(Cube(3), Cube(3), 2, outer=512, inner=2048, reps=4, seed=9, threads=1)
    b = slicing_parameter(Cube(3), Cube(3), 2, outer=512, inner=2048, reps=4, seed=9, threads=4)
    assert a == b


def test_slicing_from_samples_matches():
    K, seed, q = Cube(2), 10, 3
    a = slicing_parameter(K, K, q, outer=256, inner=1024, reps=3, seed=seed)
    outer = [sample_uniform(K, 256, derive_seed(seed, "outer", r)).points for r in range(3)]
    inner = [sample_uniform(K, 1024, derive_seed(seed, "inner", r)).points for r in range(3)]
    b = slicing_from_samples(outer, inner, q)
    assert b.value == pytest.approx(a.value, rel=1e-12)
    assert b.std_error == pytest.approx(a.std_error, rel=1e-9)
    with pytest.raises(ValueError):
        slicing_from_samples(outer[:1], inner[:1], q)


def test_slicing_argument_checks():
    with pytest.raises(ValueError):
        slicing_parameter(Cube(2), Cube(2), 0.5)
    with pytest.raises(ValueError):
        slicing_parameter(Cube(2), Cube(2), 2, reps=1)


def test_polar_volume_radius():
    # ball of radius r: |C°|^{-1/n} = r omega_n^{-1/n}
    n, r = 3, 1.7
    est = polar_volume_radius(lambda d: np.full(len(d), r), n, 1000, seed=0)
    omega = math.pi ** 1.5 / math.gamma(2.5)
    assert est.value == pytest.approx(r * omega ** (-1 / 3), rel=1e-12)
    # support of the unit-volume square; its polar is 2 B_1^2 of area 8
    est = polar_volume_radius(lambda d: 0.5 * np.abs(d).sum(axis=1), 2, 100_000, seed=1)
    assert abs(est.value - 8 ** -0.5) <= 4 * est.std_error + 1e-3


def test_kstar_extremes():
    n = 16
    ball = kstar(lambda d: np.ones(len(d)), n, 500, seed=0)
    assert ball.value == n and ball.ratio == pytest.approx(1.0)
    seg = kstar(lambda d: np.abs(d[:, 0]), n, 2000, seed=0)
    assert seg.value == 1
    assert seg.radius == pytest.approx(1.0, abs=1e-4)


def test_default_q_grid():
    assert default_q_grid(1) == [1]
    assert default_q_grid(8) == [1, 2, 4, 8]
    assert default_q_grid(12) == [1, 2, 4, 8, 12]


def test_qstar_table_is_consistent():
    res = qstar(Cube(4), budget=50_000, seed=2, direction_count=300)
    qs = [row[0] for row in res.table]
    assert qs == [1, 2, 4]
    assert res.value in qs
    assert res.value == max(q for q, k, _ in res.table if k >= q)
    # Z_2 of the isotropic cube is a ball, so k_*(Z_2) = n
    assert res.table[1][1] == 4


def test_kstar_on_zq_evaluator():
    ev = ZqEvaluator.for_body(Cube(3), 2, 50_000, seed=3)
    assert kstar(ev, 3, 300, seed=3).value == 3
