import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secpriv.exceptions import EmptyPencilError, InvalidInputError, NotPositiveDefiniteError
from secpriv.linalg import (
    block_diag,
    cholesky_inverse_factor,
    covariance_factor,
    exp_and_integral,
    generalized_eigh,
    matrix_exponential,
    null_space_basis,
    numerical_rank,
    orthonormal_image_basis,
    pinv,
    psd_geq,
)

seeds = st.integers(0, 2**32 - 1)


def same_span(A, B, tol=1e-10):
    PA = A @ np.linalg.pinv(A)
    PB = B @ np.linalg.pinv(B)
    return np.linalg.norm(PA - PB) < tol


def taylor_expm(A, terms=60):
    # squaring keeps the series short and accurate
    k = max(0, int(np.ceil(np.log2(max(np.linalg.norm(A, 1), 1e-300)))) + 1)
    B = A / 2**k
    out = np.eye(len(A))
    term = np.eye(len(A))
    for j in range(1, terms):
        term = term @ B / j
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


class TestPinv:
    def test_identity(self):
        np.testing.assert_array_equal(pinv(np.eye(3)), np.eye(3))

    def test_zero(self):
        P = pinv(np.zeros((2, 3)))
        assert P.shape == (3, 2)
        assert not P.any()

    def test_empty(self):
        assert pinv(np.zeros((0, 4))).shape == (4, 0)

    def test_rank_deficient_penrose(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 3))
        P = pinv(A)
        assert np.linalg.norm(A @ P @ A - A) < 1e-10
        assert np.linalg.norm(P @ A @ P - P) < 1e-10
        assert np.linalg.norm((A @ P).T - A @ P) < 1e-10
        assert np.linalg.norm((P @ A).T - P @ A) < 1e-10

    def test_non_finite(self):
        with pytest.raises(InvalidInputError):
            pinv(np.array([[np.nan, 1.0]]))

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(1, 6), st.integers(1, 6), st.integers(0, 6))
    def test_matches_normal_equations_least_squares(self, seed, m, n, r):
        rng = np.random.default_rng(seed)
        r = min(r, m, n)
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        b = rng.standard_normal(m)
        x = pinv(A) @ b
        # the minimum-norm solution satisfies the normal equations and lies in the row space
        assert np.linalg.norm(A.T @ (A @ x - b)) < 1e-9 * (1 + np.linalg.norm(A) ** 2 * np.linalg.norm(b))
        assert np.linalg.norm(x - pinv(A) @ A @ x) < 1e-9 * (1 + np.linalg.norm(x))


class TestSubspaces:
    def test_null_trivial(self):
        assert null_space_basis(np.eye(2)).shape == (2, 0)

    def test_null_row(self):
        N = null_space_basis(np.array([[1.0, 0.0]]))
        assert N.shape == (2, 1)
        assert abs(abs(N[0, 0]) - 0.0) < 1e-15 and abs(abs(N[1, 0]) - 1.0) < 1e-15

    def test_null_of_no_rows_is_everything(self):
        np.testing.assert_array_equal(null_space_basis(np.zeros((0, 3))), np.eye(3))

    def test_image_column(self):
        U = orthonormal_image_basis(np.array([[2.0], [0.0]]))
        np.testing.assert_allclose(np.abs(U), [[1.0], [0.0]])

    def test_image_rank_one(self):
        U = orthonormal_image_basis(np.ones((2, 2)))
        assert U.shape == (2, 1)
        np.testing.assert_allclose(np.abs(U[:, 0]), [1 / math.sqrt(2)] * 2)

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.integers(1, 7), st.integers(1, 7))
    def test_null_and_image_are_complementary(self, seed, m, n):
        rng = np.random.default_rng(seed)
        r = int(rng.integers(0, min(m, n) + 1))
        A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        N = null_space_basis(A)
        V = orthonormal_image_basis(A.T)
        assert N.shape[1] + V.shape[1] == n
        assert numerical_rank(A) == r
        assert np.linalg.norm(A @ N) < 1e-10 * (1 + np.linalg.norm(A))
        assert np.linalg.norm(N.T @ V) < 1e-10
        np.testing.assert_allclose(N.T @ N, np.eye(N.shape[1]), atol=1e-12)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_allclose(cholesky_inverse_factor(np.eye(3)), np.eye(3))

    def test_scalar(self):
        np.testing.assert_allclose(cholesky_inverse_factor([[4.0]]), [[0.5]])

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            cholesky_inverse_factor(np.diag([1.0, 0.0]))

    def test_whitening(self):
        rng = np.random.default_rng(3)
        G = rng.standard_normal((4, 4))
        S = G @ G.T + np.eye(4)
        R = cholesky_inverse_factor(S)
        np.testing.assert_allclose(R @ S @ R.T, np.eye(4), atol=1e-12)
        assert np.allclose(np.triu(R, 1), 0.0)

    def test_covariance_factor_semidefinite(self):
        S = np.array([[1.0, 1.0], [1.0, 1.0]])
        L = covariance_factor(S)
        np.testing.assert_allclose(L @ L.T, S, atol=1e-12)
        with pytest.raises(NotPositiveDefiniteError):
            covariance_factor(np.diag([1.0, -1.0]))


class TestPencil:
    def test_scaled_identity(self):
        sp = generalized_eigh(2 * np.eye(3), np.eye(3))
        assert sp.mu_min == pytest.approx(2.0)
        assert sp.mu_max == pytest.approx(2.0)

    def test_diag(self):
        np.testing.assert_allclose(generalized_eigh(np.diag([1.0, 3.0]), np.eye(2)).values, [1.0, 3.0])

    def test_zero_second(self):
        with pytest.raises(EmptyPencilError):
            generalized_eigh(np.eye(2), np.zeros((2, 2)))

    def test_infinite_and_common_null(self):
        sp = generalized_eigh(np.diag([2.0, 1.0, 0.0]), np.diag([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(sp.values, [2.0])
        assert sp.n_infinite == 1
        assert sp.mu_max == math.inf and sp.mu_max_finite == pytest.approx(2.0)

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(1, 6))
    def test_eigenpairs(self, seed, n):
        rng = np.random.default_rng(seed)
        G1, G2 = rng.standard_normal((2, n, n))
        M2 = G2 @ G2.T + 0.1 * np.eye(n)
        M1 = G1 @ G1.T
        sp = generalized_eigh(M1, M2)
        V = sp.vectors
        scale = np.linalg.norm(M1) + np.linalg.norm(M2)
        assert np.linalg.norm(M1 @ V - M2 @ V * sp.values) < 1e-8 * scale * (1 + sp.values.max())
        np.testing.assert_allclose(np.sort(sp.values), np.sort(np.linalg.eigvals(np.linalg.solve(M2, M1)).real), rtol=1e-7, atol=1e-9)


class TestExponential:
    def test_zero(self):
        E, I = exp_and_integral(np.zeros((2, 2)), 0.3)
        np.testing.assert_allclose(E, np.eye(2))
        np.testing.assert_allclose(I, 0.3 * np.eye(2))

    @settings(max_examples=40, deadline=None)
    @given(seeds, st.integers(1, 5), st.floats(0.01, 3.0))
    def test_matches_taylor_series(self, seed, n, scale):
        A = scale * np.random.default_rng(seed).standard_normal((n, n))
        np.testing.assert_allclose(matrix_exponential(A), taylor_expm(A), rtol=1e-10, atol=1e-12)

    def test_integral_by_quadrature(self):
        from scipy.integrate import quad_vec

        A = np.array([[0.0, 1.0], [-4.0, -0.3]])
        _, I = exp_and_integral(A, 0.7)
        ref, _ = quad_vec(lambda t: taylor_expm(A * t), 0.0, 0.7, epsabs=1e-13)
        np.testing.assert_allclose(I, ref, atol=1e-11)

    def test_bad_step(self):
        with pytest.raises(InvalidInputError):
            exp_and_integral(np.eye(2), 0.0)


class TestPsdGeq:
    def test_basic(self):
        assert psd_geq(np.eye(2), np.zeros((2, 2)))
        assert not psd_geq(np.zeros((2, 2)), np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            psd_geq(np.eye(2), np.eye(3))


def test_block_diag_with_empty_blocks():
    B = block_diag(np.ones((1, 2)), np.zeros((0, 3)), 2 * np.eye(1))
    assert B.shape == (2, 6)
    assert B[1, 5] == 2.0 and B[0, :2].tolist() == [1.0, 1.0]
