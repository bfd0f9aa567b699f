import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupsparse.errors import NumericalError
from groupsparse.linalg import (
    as_matrix,
    gram_inverse_norm,
    matvec,
    orthonormalize_rows,
    spectral_norm,
    transpose_matvec,
)


def test_spectral_norm_diagonal():
    assert spectral_norm(np.diag([3.0, 1.0, 2.0])) == pytest.approx(3.0, rel=1e-9)


def test_spectral_norm_worked_example():
    # A A^T = [[14, 10], [10, 14]] has top eigenvalue 24
    A = np.array([[2.0, 3, 1], [2, 1, 3]])
    assert spectral_norm(A) ** 2 == pytest.approx(24.0, rel=1e-9)


def test_spectral_norm_is_deterministic():
    A = np.random.default_rng(3).standard_normal((7, 11))
    assert spectral_norm(A) == spectral_norm(A)


def test_spectral_norm_start_orthogonal_to_top_vector():
    # the all-ones start has no component along (1, -1)
    A = np.array([[2.0, -2.0], [0.1, 0.1]])
    assert spectral_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-9)


def test_spectral_norm_rejects_zero_and_nan():
    with pytest.raises(ValueError):
        spectral_norm(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        spectral_norm(np.array([[1.0, np.nan]]))


def test_spectral_norm_nonconvergence():
    A = np.diag([1.0, 0.999999])
    with pytest.raises(NumericalError):
        spectral_norm(A, tol=1e-16, max_iter=3)


@given(st.integers(0, 10_000))
def test_spectral_norm_bounds_random_rayleigh_quotients(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 12, size=2)
    A = rng.standard_normal((m, n))
    s2 = spectral_norm(A) ** 2
    for _ in range(100):
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        assert np.sum((A @ x) ** 2) <= s2 * (1 + 1e-8)


def test_matvec_dimension_checks():
    A = np.ones((2, 3))
    with pytest.raises(ValueError):
        matvec(A, np.ones(2))
    with pytest.raises(ValueError):
        transpose_matvec(A, np.ones(3))


@given(st.integers(0, 10_000))
def test_transpose_matvec_matches_explicit_transpose(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 8))
    y = rng.standard_normal(5)
    np.testing.assert_allclose(transpose_matvec(A, y), matvec(A.T.copy(), y), rtol=0, atol=1e-14)


def test_orthonormalize_rows_square_diagonal():
    Q = orthonormalize_rows(np.array([[3.0, 0], [0, 4]]))
    np.testing.assert_allclose(Q, np.eye(2), atol=1e-15)


def test_orthonormalize_rows_already_orthonormal():
    A = np.array([[0.6, 0.8, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(orthonormalize_rows(A), A, atol=1e-12)


def test_orthonormalize_rows_dependent():
    with pytest.raises(NumericalError):
        orthonormalize_rows(np.array([[1.0, 2, 3], [1.0, 2, 3]]))


def test_orthonormalize_rows_too_many_rows():
    with pytest.raises(ValueError):
        orthonormalize_rows(np.ones((3, 2)))


@given(st.integers(0, 10_000))
def test_orthonormalize_rows_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 65))
    m = int(rng.integers(1, n + 1))
    Q = orthonormalize_rows(rng.standard_normal((m, n)))
    assert np.max(np.abs(Q @ Q.T - np.eye(m))) <= 1e-10


def test_gram_inverse_norm_values():
    assert gram_inverse_norm(np.eye(3)[:, :2]) == pytest.approx(1.0)
    # B^T B = diag(4, 1), inverse norm 1
    assert gram_inverse_norm(np.diag([2.0, 1.0])) == pytest.approx(1.0)
    assert gram_inverse_norm(np.array([[2.0], [0.0]])) == pytest.approx(0.25)


def test_gram_inverse_norm_rank_deficient():
    with pytest.raises(NumericalError):
        gram_inverse_norm(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))


def test_as_matrix_shape():
    with pytest.raises(ValueError):
        as_matrix(np.ones(3))
