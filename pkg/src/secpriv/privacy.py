"""Privacy mechanisms that limit shared measurements, and their ordering.

A mechanism shares ``S y(k) + r(k)``: the selection `S` keeps a subspace of
the outputs and `r ~ N(0, Sigma_r)` blurs what is kept. Privacy is measured
by how well the receiver can estimate the state from the shared stream: the
estimable subspace (through `S`) and the error covariance of the maximum
likelihood estimate on that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_covariance, as_matrix, check_positive_int
from .exceptions import InvalidInputError
from .linalg import numerical_rank, pinv, psd_geq


@dataclass
class PrivacyMechanism:
    """Selection matrix `S` (m x p, full row rank) and added-noise covariance."""

    S: np.ndarray
    Sigma_r: np.ndarray | None = None

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        self.S = S.reshape(0, S.shape[-1] if S.ndim else 0) if S.size == 0 else as_matrix(S, "S")
        m = self.S.shape[0]
        if self.Sigma_r is None:
            self.Sigma_r = np.zeros((m, m))
        self.Sigma_r = as_covariance(self.Sigma_r, "Sigma_r", dim=m) if m else np.zeros((0, 0))
        if m and numerical_rank(self.S) < m:
            raise InvalidInputError("selection matrix S must have full row rank")

    @property
    def m(self) -> int:
        return self.S.shape[0]

    @property
    def p(self) -> int:
        return self.S.shape[1]

    @classmethod
    def full(cls, p: int) -> "PrivacyMechanism":
        """Share every output, add no noise."""
        return cls(np.eye(p), np.zeros((p, p)))

    @classmethod
    def select(cls, p: int, components, noise_var: float = 0.0) -> "PrivacyMechanism":
        """Share the listed output components with i.i.d. noise of variance `noise_var`."""
        components = list(components)
        S = np.eye(p)[components] if components else np.zeros((0, p))
        return cls(S, noise_var * np.eye(len(components)))

    def post_process(self, S, Sigma_n=None) -> "PrivacyMechanism":
        """Mechanism sharing ``S (S_self y + r_self) + n``."""
        S = as_matrix(S, "S")
        if Sigma_n is None:
            Sigma_n = np.zeros((S.shape[0], S.shape[0]))
        return PrivacyMechanism(S @ self.S, S @ self.Sigma_r @ S.T + as_covariance(Sigma_n, "Sigma_n"))


@dataclass(frozen=True)
class PrivacyAssessment:
    """What a receiver of T shared samples can learn about the state.

    ``Sigma_e`` is the error covariance of the estimate on the estimable
    subspace, ``projector`` the orthogonal projector onto that subspace.
    """

    H: np.ndarray
    Sigma_r: np.ndarray
    H_tilde: np.ndarray
    projector: np.ndarray
    Sigma_e: np.ndarray
    rank_S: int
    horizon: int


def assess(mechanism: PrivacyMechanism, C, Sigma_v, T: int) -> PrivacyAssessment:
    T = check_positive_int(T, "T")
    C = as_matrix(C, "C")
    Sigma_v = as_covariance(Sigma_v, "Sigma_v", definite=True, dim=C.shape[0])
    if mechanism.p != C.shape[0]:
        raise InvalidInputError(f"S has {mechanism.p} columns but C has {C.shape[0]} rows")
    n = C.shape[1]
    S = mechanism.S
    H = np.kron(np.eye(T), S @ C)
    if mechanism.m == 0:
        zero = np.zeros((T * n, T * n))
        return PrivacyAssessment(H, np.zeros((0, 0)), zero, zero.copy(), zero.copy(), 0, T)
    block = S @ Sigma_v @ S.T + mechanism.Sigma_r
    if numerical_rank(block) < block.shape[0]:
        raise InvalidInputError("shared-noise covariance S Sigma_v S^T + Sigma_r is singular")
    Sigma_r = np.kron(np.eye(T), block)
    H_tilde = H.T @ np.kron(np.eye(T), np.linalg.inv(block)) @ H
    H_tilde = 0.5 * (H_tilde + H_tilde.T)
    Sigma_e = pinv(H_tilde)
    Sigma_e = 0.5 * (Sigma_e + Sigma_e.T)
    P = Sigma_e @ H_tilde
    P = 0.5 * (P + P.T)
    return PrivacyAssessment(H, Sigma_r, H_tilde, P, Sigma_e, numerical_rank(S), T)


def ml_state_estimate(shared, assessment: PrivacyAssessment) -> np.ndarray:
    """Minimum-norm maximum likelihood estimate of the stacked state.

    `shared` is the stacked stream (length ``T*m``, or ``(T, m)``; extra
    leading axes are treated as independent batches). Projecting the result
    with ``assessment.projector`` gives the minimum-variance unbiased
    estimate of the estimable component.
    """
    y = np.asarray(shared, dtype=float)
    Tm = assessment.H.shape[0]
    T = assessment.horizon
    if y.ndim >= 2 and y.shape[-1] != Tm and y.shape[-2:] == (T, Tm // T):
        y = y.reshape(*y.shape[:-2], Tm)
    if y.shape[-1] != Tm:
        raise InvalidInputError(f"shared stream must have {Tm} entries, got shape {y.shape}")
    if Tm == 0:
        return np.zeros((*y.shape[:-1], assessment.H.shape[1]))
    gain = assessment.Sigma_e @ assessment.H.T @ np.linalg.inv(assessment.Sigma_r)
    return y @ gain.T


def subspace_contained(S_inner, S_outer) -> bool:
    """True iff ``Im(S_inner^T)`` is contained in ``Im(S_outer^T)``."""
    S_inner = np.asarray(S_inner, dtype=float)
    S_outer = np.asarray(S_outer, dtype=float)
    if S_inner.shape[0] == 0:
        return True
    if S_outer.shape[0] == 0:
        return False
    return numerical_rank(np.vstack([S_outer, S_inner])) == numerical_rank(S_outer)


@dataclass(frozen=True)
class OrderingResult:
    """Outcome of a privacy comparison, truthy iff the ordering holds.

    `reason` is one of ``"ordered"``, ``"incomparable"`` (neither shared
    subspace contains the other), ``"subspace"`` (the candidate shares a
    strictly larger subspace) or ``"covariance"`` (nested subspaces, but the
    candidate's error covariance is not large enough).
    """

    holds: bool
    subspace_nested: bool
    covariance_dominated: bool | None
    reason: str
    min_eigenvalue: float | None = None

    def __bool__(self) -> bool:
        return self.holds


def is_more_private(
    candidate: PrivacyMechanism,
    reference: PrivacyMechanism,
    C,
    Sigma_v,
    T: int = 1,
    tol: float | None = None,
) -> OrderingResult:
    """Whether `candidate` is at least as private as `reference`.

    Requires the candidate's shared subspace to lie inside the reference's,
    and the candidate's error covariance to dominate the reference's error
    covariance projected onto the candidate's estimable subspace.
    """
    if not subspace_contained(candidate.S, reference.S):
        reverse = subspace_contained(reference.S, candidate.S)
        return OrderingResult(False, False, None, "subspace" if reverse else "incomparable")
    a2 = assess(candidate, C, Sigma_v, T)
    a1 = assess(reference, C, Sigma_v, T)
    P2 = a2.projector
    rhs = P2 @ a1.Sigma_e @ P2
    diff = a2.Sigma_e - rhs
    min_eig = float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0]) if diff.size else 0.0
    if tol is None:
        tol = 1e-9 * (1.0 + np.linalg.norm(a2.Sigma_e, 2) + np.linalg.norm(rhs, 2)) if diff.size else 0.0
    ok = psd_geq(a2.Sigma_e, rhs, tol)
    return OrderingResult(ok, True, ok, "ordered" if ok else "covariance", min_eig)


def noise_map(candidate: PrivacyMechanism, reference: PrivacyMechanism) -> np.ndarray | None:
    """Minimum-norm P with ``candidate.S == P @ reference.S``, or None."""
    if not subspace_contained(candidate.S, reference.S):
        return None
    if candidate.m == 0:
        return np.zeros((0, reference.m))
    return candidate.S @ pinv(reference.S)


def check_sufficient_condition(candidate: PrivacyMechanism, reference: PrivacyMechanism, tol: float | None = None) -> bool:
    """Noise-dominance test that guarantees `candidate` is more private.

    With ``P = S_c S_r^+`` (so ``S_c = P S_r``), checks
    ``Sigma_r(candidate) >= P Sigma_r(reference) P^T``.
    """
    P = noise_map(candidate, reference)
    if P is None:
        return False
    if candidate.m == 0:
        return True
    return psd_geq(candidate.Sigma_r, P @ reference.Sigma_r @ P.T, tol)


def random_mechanism(rng: np.random.Generator, p: int, m: int, noise: float = 1.0) -> PrivacyMechanism:
    """Random full-row-rank selection of `m` of `p` output directions."""
    S = rng.standard_normal((m, p))
    G = rng.standard_normal((m, m))
    return PrivacyMechanism(S, noise * (G @ G.T) / max(m, 1))


def random_more_private(
    rng: np.random.Generator, reference: PrivacyMechanism, m: int, extra_noise: float = 1.0
) -> PrivacyMechanism:
    """Random mechanism satisfying the noise-dominance condition against `reference`.

    Keeps an m-dimensional subspace of the reference's shared directions and
    adds a random PSD excess noise on top of the propagated reference noise.
    """
    if m > reference.m:
        raise InvalidInputError("cannot share more directions than the reference")
    P = rng.standard_normal((m, reference.m)) if m < reference.m else np.eye(m)
    G = rng.standard_normal((m, m))
    E = extra_noise * (G @ G.T) / max(m, 1)
    return PrivacyMechanism(P @ reference.S, P @ reference.Sigma_r @ P.T + E)
