"""Input validation helpers shared by every module."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError


def as_matrix(A, name: str = "matrix", *, allow_empty: bool = True) -> np.ndarray:
    """Return `A` as a finite 2-D float array.

    Scalars become 1x1 matrices and 1-D input becomes a column.
    """
    arr = np.asarray(A, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_square(A, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(A, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


def as_symmetric(A, name: str = "matrix", rtol: float = 1e-8) -> np.ndarray:
    """Square, symmetric to `rtol` (relative to the largest entry), symmetrized."""
    arr = as_square(A, name)
    scale = max(1.0, float(np.max(np.abs(arr)))) if arr.size else 1.0
    if arr.size and np.max(np.abs(arr - arr.T)) > rtol * scale:
        raise InvalidInputError(f"{name} must be symmetric")
    return 0.5 * (arr + arr.T)


def as_covariance(A, name: str = "covariance", *, definite: bool = False, dim: int | None = None) -> np.ndarray:
    """Validate a covariance matrix (PSD, or PD when `definite`)."""
    arr = as_symmetric(A, name)
    if dim is not None and arr.shape[0] != dim:
        raise InvalidInputError(f"{name} must be {dim}x{dim}, got {arr.shape}")
    if arr.size == 0:
        return arr
    eig = np.linalg.eigvalsh(arr)
    scale = max(1.0, float(np.max(np.abs(eig))))
    if definite and eig[0] <= 0:
        raise InvalidInputError(f"{name} must be positive definite (min eigenvalue {eig[0]:.3g})")
    if eig[0] < -1e-10 * scale:
        raise InvalidInputError(f"{name} must be positive semidefinite (min eigenvalue {eig[0]:.3g})")
    return arr


def check_probability(p: float, name: str = "probability") -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"{name} must lie in (0, 1), got {p}")
    return p


def check_positive_int(k, name: str) -> int:
    if isinstance(k, bool) or int(k) != k or int(k) < 1:
        raise InvalidInputError(f"{name} must be a positive integer, got {k!r}")
    return int(k)
