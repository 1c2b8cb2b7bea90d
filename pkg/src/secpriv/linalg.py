"""Dense small-matrix kernels.

Rank decisions everywhere use the same rule: a singular value counts as zero
when it is at most ``max(rows, cols) * eps * sigma_max``. Callers that know a
better absolute scale (for example the norm of an operand before a projection
removed most of it) pass ``tol`` explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._validation import as_covariance, as_matrix, as_square, as_symmetric
from .exceptions import EmptyPencilError, InvalidInputError, NotPositiveDefiniteError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RankDecision:
    tolerance: float
    numerical_rank: int


def default_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    return max(shape) * EPS * sigma_max if shape[0] and shape[1] else 0.0


def _svd(A: np.ndarray, tol: float | None):
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    sigma_max = float(s[0]) if s.size else 0.0
    if tol is None:
        tol = default_tolerance(A.shape, sigma_max)
    rank = int(np.sum(s > tol))
    return U, s, Vt, RankDecision(float(tol), rank)


def rank_decision(A, tol: float | None = None) -> RankDecision:
    A = as_matrix(A, "A")
    if A.size == 0:
        return RankDecision(0.0, 0)
    return _svd(A, tol)[3]


def numerical_rank(A, tol: float | None = None) -> int:
    return rank_decision(A, tol).numerical_rank


def pinv(A, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values at or below the rank tolerance are treated as zero.
    """
    A = as_matrix(A, "A")
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    U, s, Vt, dec = _svd(A, tol)
    r = dec.numerical_rank
    return (Vt[:r].T / s[:r]) @ U[:, :r].T


def null_space_basis(A, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of Null(A), one vector per column.

    Returns an ``(cols, 0)`` array when the null space is trivial. A matrix
    with no rows constrains nothing, so its null space is the whole domain.
    """
    A = as_matrix(A, "A")
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n)
    _, _, Vt, dec = _svd(A, tol)
    return Vt[dec.numerical_rank:].T.copy()


def orthonormal_image_basis(A, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of Im(A); the column count is the numerical rank."""
    A = as_matrix(A, "A")
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    U, _, _, dec = _svd(A, tol)
    return U[:, : dec.numerical_rank].copy()


def cholesky_inverse_factor(S) -> np.ndarray:
    """Return R with ``R.T @ R == inv(S)`` (so ``R @ S @ R.T == I``).

    R is the inverse of the lower Cholesky factor of S.
    """
    S = as_symmetric(S, "S")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    return sla.solve_triangular(L, np.eye(S.shape[0]), lower=True)


def covariance_factor(S, clip: float = 1e-12) -> np.ndarray:
    """A factor L with ``L @ L.T == S`` for sampling ``N(0, S)``.

    Uses Cholesky when possible; semidefinite input falls back to a
    symmetric square root with eigenvalues above ``-clip * scale`` clipped.
    """
    S = as_symmetric(S, "covariance")
    if S.size == 0:
        return S.copy()
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(S)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -clip * scale:
        raise NotPositiveDefiniteError(f"covariance has negative eigenvalue {w[0]:.3g}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def psd_geq(A, B, tol: float | None = None) -> bool:
    """True iff ``A - B`` is positive semidefinite up to `tol`.

    Default tolerance: ``1e-9 * (1 + ||A|| + ||B||)`` (spectral norms).
    """
    A = as_symmetric(A, "A")
    B = as_symmetric(B, "B")
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.size == 0:
        return True
    if tol is None:
        tol = 1e-9 * (1.0 + np.linalg.norm(A, 2) + np.linalg.norm(B, 2))
    return bool(np.linalg.eigvalsh(A - B)[0] >= -tol)


@dataclass(frozen=True)
class PencilSpectrum:
    """Finite generalized eigenpairs of a symmetric semidefinite pencil.

    ``vectors[:, k]`` satisfies ``M1 v = values[k] * M2 v``. ``n_infinite``
    counts directions with ``M2 v = 0`` but ``M1 v != 0``; directions in the
    common null space are discarded.
    """

    values: np.ndarray
    vectors: np.ndarray
    n_infinite: int

    @property
    def mu_min(self) -> float:
        return float(self.values[0])

    @property
    def mu_max(self) -> float:
        """Largest generalized eigenvalue, ``inf`` if any is infinite."""
        return float("inf") if self.n_infinite else float(self.values[-1])

    @property
    def mu_max_finite(self) -> float:
        return float(self.values[-1])


def generalized_eigh(M1, M2) -> PencilSpectrum:
    """Generalized eigen-decomposition of the PSD pencil ``(M1, M2)``.

    The common null space of the two matrices is deflated first. On its
    complement ``M1 + M2`` is definite, so the symmetric-definite problem
    ``M1 w = nu (M1 + M2) w`` is well posed; its eigenvalues map to
    ``mu = nu / (1 - nu)``, with ``nu = 1`` giving the infinite eigenvalues.
    """
    M1 = as_covariance(M1, "M1")
    M2 = as_covariance(M2, "M2")
    if M1.shape != M2.shape:
        raise InvalidInputError(f"pencil shape mismatch {M1.shape} vs {M2.shape}")
    scale = max(np.linalg.norm(M1, 2), np.linalg.norm(M2, 2)) if M1.size else 0.0
    if M2.size == 0 or np.linalg.norm(M2, 2) <= max(M2.shape) * EPS * scale:
        raise EmptyPencilError("second pencil matrix is zero")

    V = orthonormal_image_basis(M1 + M2)
    A = V.T @ M1 @ V
    B = V.T @ M2 @ V
    A, B = 0.5 * (A + A.T), 0.5 * (B + B.T)
    nu, W = sla.eigh(A, A + B)
    n_finite = numerical_rank(B)
    nu = np.clip(nu[:n_finite], 0.0, None)
    W = W[:, :n_finite]
    mu = nu / (1.0 - nu)
    return PencilSpectrum(values=mu, vectors=V @ W, n_infinite=A.shape[0] - n_finite)


def generalized_eigenvalues(M1, M2) -> np.ndarray:
    """Finite generalized eigenvalues of ``(M1, M2)``, ascending."""
    return generalized_eigh(M1, M2).values


def matrix_exponential(A) -> np.ndarray:
    """``exp(A)`` by scaling and squaring with a Pade approximant."""
    return sla.expm(as_square(A, "A"))


def exp_and_integral(A, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``exp(A Ts)`` and ``int_0^Ts exp(A t) dt``.

    Both come from one exponential of the augmented matrix
    ``[[A, I], [0, 0]] * Ts``, so A may be singular.
    """
    A = as_square(A, "A")
    Ts = float(Ts)
    if not Ts > 0:
        raise InvalidInputError(f"Ts must be positive, got {Ts}")
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    E = sla.expm(aug * Ts)
    return E[:n, :n], E[:n, n:]


def exp_integral(A, Ts: float) -> np.ndarray:
    return exp_and_integral(A, Ts)[1]


def block_diag(*blocks) -> np.ndarray:
    """Block-diagonal matrix; empty (0-row) blocks are allowed."""
    mats = [as_matrix(b, "block") for b in blocks]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r : r + m.shape[0], c : c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out
