import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradlink.errors import DegenerateInputError, UsageError
from gradlink.numerics import (
    cosine_similarity,
    euclidean_distance,
    l2_norm,
    normalize,
    symmetric_eigen,
)

finite_vecs = arrays(
    np.float64,
    st.integers(1, 30),
    elements=st.floats(-1e6, 1e6, allow_nan=False),
)


def test_l2_norm_pythagorean():
    assert l2_norm([3.0, 4.0]) == pytest.approx(5.0)


def test_l2_norm_zero_vector():
    assert l2_norm([0.0, 0.0, 0.0]) == 0.0


def test_l2_norm_matches_summation_oracle():
    rng = np.random.default_rng(0)
    v = rng.normal(size=100)
    oracle = sum(x * x for x in v) ** 0.5
    assert l2_norm(v) == pytest.approx(oracle, rel=1e-12)


def test_l2_norm_empty_vector_is_usage_error():
    with pytest.raises(UsageError):
        l2_norm([])


def test_normalize_examples():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_allclose(normalize([5.0, 0.0]), [1.0, 0.0], atol=1e-15)


def test_normalize_zero_vector_is_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize([0.0, 0.0])


@given(finite_vecs)
def test_normalize_unit_norm_and_idempotent(v):
    if l2_norm(v) == 0.0:
        return
    u = normalize(v)
    assert abs(l2_norm(u) - 1.0) <= 1e-12
    np.testing.assert_allclose(normalize(u), u, atol=1e-12)


def test_cosine_examples():
    assert cosine_similarity([1, 0], [1, 0]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0)
    assert cosine_similarity([1, 1], [-1, -1]) == pytest.approx(-1.0)


def test_cosine_zero_vector_and_mismatch_are_usage_errors():
    with pytest.raises(UsageError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(UsageError):
        cosine_similarity([1, 0], [1, 0, 0])


@given(finite_vecs, st.floats(0.1, 100.0), st.floats(0.1, 100.0))
def test_cosine_symmetric_and_scale_invariant(v, a, b):
    rng = np.random.default_rng(1)
    u = rng.normal(size=v.shape[0])
    if l2_norm(v) == 0.0:
        return
    c = cosine_similarity(u, v)
    assert cosine_similarity(v, u) == pytest.approx(c, abs=1e-12)
    assert cosine_similarity(a * u, b * v) == pytest.approx(c, abs=1e-12)


def test_euclidean_examples():
    assert euclidean_distance([0, 0], [3, 4]) == pytest.approx(5.0)
    assert euclidean_distance([1.5, -2.0], [1.5, -2.0]) == 0.0
    with pytest.raises(UsageError):
        euclidean_distance([1], [1, 2])


def test_euclidean_cosine_identity_on_unit_vectors():
    rng = np.random.default_rng(2)
    for _ in range(100):
        u = normalize(rng.normal(size=8))
        v = normalize(rng.normal(size=8))
        lhs = euclidean_distance(u, v) ** 2
        rhs = 2.0 - 2.0 * cosine_similarity(u, v)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_eigen_identity():
    vals, vecs = symmetric_eigen(np.eye(3), 3)
    np.testing.assert_allclose(vals, [1, 1, 1], atol=1e-12)


def test_eigen_diagonal():
    vals, vecs = symmetric_eigen(np.diag([1.0, 2.0, 3.0]), 2)
    np.testing.assert_allclose(vals, [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(vecs), np.eye(3)[:, :2], atol=1e-12)


def test_eigen_rejects_nonsymmetric_and_bad_k():
    with pytest.raises(UsageError):
        symmetric_eigen([[0.0, 1.0], [0.0, 0.0]], 1)
    with pytest.raises(UsageError):
        symmetric_eigen(np.eye(2), 3)


def _charpoly_roots(a):
    """Characteristic polynomial coefficients via the Faddeev-LeVerrier
    recurrence, then companion-matrix roots. Independent of the Jacobi path."""
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.sort(np.roots(coeffs).real)


def test_eigen_matches_characteristic_polynomial_oracle():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6))
    a = (a + a.T) / 2.0
    vals, _ = symmetric_eigen(a, 6)
    np.testing.assert_allclose(vals, _charpoly_roots(a), atol=1e-6)


def test_eigen_residual_and_orthonormality_bounds():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 33))
        a = rng.normal(size=(n, n))
        a = (a + a.T) / 2.0
        k = int(rng.integers(1, n + 1))
        vals, vecs = symmetric_eigen(a, k)
        fro = np.linalg.norm(a)
        resid = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
        assert np.all(resid <= 1e-8 * fro)
        gram = vecs.T @ vecs
        assert np.max(np.abs(gram - np.eye(k))) <= 1e-8
        assert np.all(np.diff(vals) >= -1e-12)
