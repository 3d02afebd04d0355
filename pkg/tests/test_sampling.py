import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicelab.bodies import Cube, EuclideanBall, MinkowskiSum, OracleBody, Simplex, hpolytope_cube
from slicelab.sampling import (ChordError, DirectionSet, PointSample, derive_seed, hit_and_run_step,
                               sample_rotation, sample_sphere, sample_uniform, substream)


def test_exact_sample_inside_and_deterministic():
    K = Cube(3, 1.0)
    a = sample_uniform(K, 70_000, seed=5)
    b = sample_uniform(K, 70_000, seed=5, threads=4)
    assert np.array_equal(a.points, b.points)
    assert K.contains(a.points).all()
    assert not np.array_equal(a.points, sample_uniform(K, 70_000, seed=6).points)


def test_hit_and_run_deterministic_across_threads():
    K = hpolytope_cube(2)
    a = sample_uniform(K, 5000, seed=1, threads=1)
    b = sample_uniform(K, 5000, seed=1, threads=3)
    assert np.array_equal(a.points, b.points)
    assert a.sampler_kind != "exact"


def test_hit_and_run_moments_match_cube():
    # second moments of the unit cube are 1/12 per coordinate, off-diagonals 0
    pts = sample_uniform(hpolytope_cube(3), 60_000, seed=2).points
    cov = pts.T @ pts / len(pts)
    assert np.allclose(np.diag(cov), 1 / 12, rtol=0.04)
    assert np.max(np.abs(cov - np.diag(np.diag(cov)))) < 0.004
    assert np.allclose(pts.mean(axis=0), 0, atol=0.01)


def test_hit_and_run_on_minkowski_sum_stays_inside():
    s = MinkowskiSum(Cube(3, 1.0), EuclideanBall(3, 0.2))
    pts = sample_uniform(s, 4000, seed=3).points
    assert s.contains(pts, tol=1e-9).all()


def test_hit_and_run_oracle_body_uniform_disc():
    disc = OracleBody(2, lambda x: np.sum(x * x, axis=1) <= 1.0, 1.0)
    pts = sample_uniform(disc, 20_000, seed=4).points
    r2 = np.sum(pts * pts, axis=1)
    # |x|^2 is uniform on [0, 1] for the uniform disc
    assert abs(r2.mean() - 0.5) < 0.02
    assert abs(np.mean(r2 < 0.25) - 0.25) < 0.02


def test_simplex_exact_sampler_centered():
    pts = sample_uniform(Simplex(3), 100_000, seed=1).points
    se = pts.std(axis=0) / np.sqrt(len(pts))
    assert np.all(np.abs(pts.mean(axis=0)) <= 4 * se)


def test_step_from_outside_raises():
    with pytest.raises(ChordError):
        hit_and_run_step(Cube(2), np.array([3.0, 0.0]), np.random.default_rng(0))


@given(st.integers(1, 12), st.integers(0, 2 ** 32))
def test_sphere_directions_are_unit(n, seed):
    d = sample_sphere(n, 50, seed)
    assert np.allclose(np.linalg.norm(d.directions, axis=1), 1.0)


def test_direction_set_validates():
    with pytest.raises(ValueError):
        DirectionSet(np.array([[2.0, 0.0]]))


def test_sphere_first_coordinate_second_moment():
    d = sample_sphere(5, 200_000, 1).directions
    assert d[:, 0].var() == pytest.approx(1 / 5, rel=0.01)


@given(st.integers(1, 10), st.integers(0, 1000))
def test_rotation_orthogonal(n, idx):
    q = sample_rotation(n, seed=3, index=idx)
    assert np.allclose(q @ q.T, np.eye(n), atol=1e-12)


def test_rotation_haar_moments():
    # Haar: E Q_11^2 = 1/n and determinant takes both signs
    qs = [sample_rotation(4, 0, i) for i in range(4000)]
    e11 = np.array([q[0, 0] for q in qs])
    assert e11.mean() == pytest.approx(0, abs=0.02)
    assert (e11 ** 2).mean() == pytest.approx(0.25, abs=0.015)
    dets = np.array([np.linalg.det(q) for q in qs])
    assert 0.45 < np.mean(dets > 0) < 0.55


def test_substreams_and_derived_seeds():
    a = substream(1, "x").standard_normal(4)
    assert np.array_equal(a, substream(1, "x").standard_normal(4))
    assert not np.array_equal(a, substream(1, "y").standard_normal(4))
    assert derive_seed(7, "a", 1) == derive_seed(7, "a", 1)
    assert derive_seed(7, "a", 1) != derive_seed(7, "a", 2)
    assert 0 <= derive_seed(2 ** 64 - 1, "z") < 2 ** 63


def test_point_sample_split_merge():
    s = sample_uniform(Cube(2), 100, seed=0)
    parts = s.split(3)
    assert sum(len(p) for p in parts) == 100
    assert np.array_equal(PointSample.merge(parts).points, s.points)
    with pytest.raises(ValueError):
        PointSample(np.empty((0, 2)))
    with pytest.raises(ValueError):
        sample_uniform(Cube(2), 0)
