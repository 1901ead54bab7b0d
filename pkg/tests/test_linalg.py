import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stackda.linalg import (DegenerateInput, as_matrix, covariance, median_sq_dist, nuclear_norm,
                            rbf_kernel_matrix, svd)


def test_svd_identity_and_diagonal():
    np.testing.assert_allclose(svd(np.eye(2)).singular_values, [1, 1])
    np.testing.assert_allclose(svd(np.diag([3.0, 1.0])).singular_values, [3, 1])
    np.testing.assert_allclose(svd(np.diag([1.0, 3.0])).singular_values, [3, 1])


def test_svd_random_reconstruction_and_eigen_crosscheck():
    a = np.random.default_rng(0).standard_normal((5, 3))
    res = svd(a)
    assert np.linalg.norm(res.reconstruct() - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
    # singular values squared are the eigenvalues of A^T A
    eig = np.sort(np.linalg.eigvalsh(a.T @ a))[::-1]
    np.testing.assert_allclose(res.singular_values ** 2, eig, rtol=1e-10)


@pytest.mark.parametrize("seed", range(100))
def test_svd_reconstruction_up_to_64(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 65, size=2)
    a = rng.standard_normal((m, n)) * rng.uniform(0.1, 10)
    res = svd(a)
    assert np.linalg.norm(res.reconstruct() - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
    s = res.singular_values
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd(np.array([[np.nan, 1.0]]))


def test_nuclear_norm_cases():
    assert nuclear_norm(np.eye(2)) == pytest.approx(2.0)
    assert nuclear_norm(np.zeros((3, 4))) == 0.0
    rng = np.random.default_rng(1)
    u = rng.standard_normal(4)
    v = rng.standard_normal(6)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    assert nuclear_norm(np.outer(u, v)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_nuclear_norm_bounds_and_homogeneity(seed, c):
    a = np.random.default_rng(seed).standard_normal((4, 3))
    assert nuclear_norm(a) >= np.linalg.norm(a) - 1e-12
    assert nuclear_norm(c * a) == pytest.approx(abs(c) * nuclear_norm(a), abs=1e-8)


def test_covariance_cases():
    np.testing.assert_array_equal(covariance([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 2)))
    np.testing.assert_allclose(covariance([[0.0], [2.0]]), [[2.0]])
    with pytest.raises(DegenerateInput):
        covariance([[1.0, 2.0]])


@pytest.mark.parametrize("seed", range(10))
def test_covariance_symmetric_psd(seed):
    x = np.random.default_rng(seed).standard_normal((50, 3))
    c = covariance(x)
    assert np.max(np.abs(c - c.T)) <= 1e-12
    assert np.linalg.eigvalsh(c).min() >= -1e-10
    np.testing.assert_allclose(c, np.cov(x, rowvar=False), atol=1e-12)


def test_rbf_kernel_cases():
    np.testing.assert_array_equal(rbf_kernel_matrix([[1.0, 2.0]], [[1.0, 2.0]], 0.7), [[1.0]])
    # squared distance 2 * bandwidth gives e^-1
    b = 0.8
    k = rbf_kernel_matrix([[0.0, 0.0]], [[np.sqrt(2 * b), 0.0]], b)
    assert k[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-14)
    with pytest.raises(ValueError):
        rbf_kernel_matrix([[0.0]], [[1.0]], 0.0)
    with pytest.raises(ValueError):
        rbf_kernel_matrix([[0.0]], [[1.0, 2.0]], 1.0)


def test_rbf_kernel_matches_pairwise_loop():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 2))
    y = rng.standard_normal((3, 2))
    k = rbf_kernel_matrix(x, y, 1.3)
    expect = np.array([[np.exp(-np.sum((a - c) ** 2) / 2.6) for c in y] for a in x])
    assert k.shape == (4, 3)
    np.testing.assert_allclose(k, expect, rtol=1e-12)
    assert np.all((k > 0) & (k <= 1))


@pytest.mark.parametrize("seed", range(5))
def test_rbf_self_kernel_symmetric_unit_diagonal(seed):
    x = np.random.default_rng(seed).standard_normal((7, 3))
    k = rbf_kernel_matrix(x, x, 0.5)
    assert np.max(np.abs(k - k.T)) <= 1e-12
    assert np.max(np.abs(np.diag(k) - 1)) <= 1e-12


def test_median_sq_dist_cases():
    assert median_sq_dist([[0.0, 0.0]], [[2.0, 0.0]]) == pytest.approx(4.0)
    assert median_sq_dist([[1.0, 1.0], [1.0, 1.0]], [[1.0, 1.0]]) == 1.0
    with pytest.raises(DegenerateInput):
        median_sq_dist(np.zeros((1, 2)), np.zeros((0, 2)))


def test_median_sq_dist_matches_sorted_pairs():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 2))
    y = rng.standard_normal((4, 2))
    z = np.vstack([x, y])
    d = sorted(float(np.sum((z[i] - z[j]) ** 2)) for i in range(10) for j in range(i + 1, 10))
    mid = len(d) // 2
    expect = d[mid] if len(d) % 2 else 0.5 * (d[mid - 1] + d[mid])
    assert median_sq_dist(x, y) == pytest.approx(expect, rel=1e-12)


def test_as_matrix_promotes_vectors():
    assert as_matrix([1.0, 2.0]).shape == (1, 2)
