import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from datadiss.numerics import (NumericsError, as_matrix, is_psd, lambda_max, lambda_min,
                               rank_with_tol, right_pinv, row_space_basis, smat, svec,
                               sym_basis, sym_eig)


@pytest.mark.parametrize("M, want", [
    (np.eye(2), [1, 1]),
    (np.diag([3.0, -1.0]), [-1, 3]),
    ([[2.0, 1.0], [1.0, 2.0]], [1, 3]),
])
def test_sym_eig_examples(M, want):
    e = sym_eig(M)
    np.testing.assert_allclose(e.eigenvalues, want, atol=1e-12)
    np.testing.assert_allclose(e.eigenvectors @ np.diag(e.eigenvalues) @ e.eigenvectors.T, M, atol=1e-12)


def test_lambda_extremes():
    M = [[2.0, 1.0], [1.0, 2.0]]
    assert lambda_min(M) == pytest.approx(1.0)
    assert lambda_max(M) == pytest.approx(3.0)


@pytest.mark.parametrize("M, want", [
    (np.zeros((3, 3)), 0),
    (np.eye(3), 3),
    ([[1.0, 2.0], [2.0, 4.0]], 1),
])
def test_rank_examples(M, want):
    assert rank_with_tol(M, 1e-10) == want


def test_right_pinv_examples():
    np.testing.assert_allclose(right_pinv(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(right_pinv([[1.0, 1.0]]), [[0.5], [0.5]])
    with pytest.raises(ValueError):
        right_pinv([[1.0, 1.0], [1.0, 1.0]])


def test_as_matrix_rejects_bad_input():
    with pytest.raises(NumericsError):
        as_matrix(np.ones((2, 2, 2)))
    with pytest.raises(NumericsError):
        as_matrix([[np.nan]])


def test_row_space_basis_is_orthonormal():
    M = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    V = row_space_basis(M)
    assert V.shape[0] == 3 and V.shape[1] == 1
    np.testing.assert_allclose(V.T @ V, np.eye(1), atol=1e-12)


def test_psd_check_with_tolerance():
    assert is_psd(np.diag([1.0, 0.0]))
    assert is_psd(np.diag([1.0, -1e-14]))
    assert not is_psd(np.diag([1.0, -1e-3]))


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-10, 10)))
def test_eigen_decomposition_property(M):
    M = M + M.T
    e = sym_eig(M)
    assert np.all(np.diff(e.eigenvalues) >= -1e-12)
    np.testing.assert_allclose(e.eigenvectors @ np.diag(e.eigenvalues) @ e.eigenvectors.T, M, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31))
def test_svec_smat_round_trip(n, seed):
    G = np.random.default_rng(seed).standard_normal((n, n))
    P = G + G.T
    np.testing.assert_allclose(smat(svec(P), n), P)
    assert len(sym_basis(n)) == n * (n + 1) // 2
