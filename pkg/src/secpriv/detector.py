"""Local GLRT attack detection from local and privacy-limited shared data.

The detecting subsystem stacks its outputs over k = 1..T and the shared
streams over k = 0..T-1. It estimates the interconnection signal from the
shared data, subtracts the estimable part from its own measurements and
projects out the part that cannot be estimated. What remains,

    z = M^T (y_L - F_x H~^+ H^T Sigma_vR^-1 y_R) ~ N(M^T F_a a, Sigma_vP),

depends only on the local attack `a` and known noise statistics; the
generalized likelihood ratio test on `z` is a chi-square test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_matrix, check_positive_int, check_probability
from .chi2 import chi2_quantile, detection_probability
from .exceptions import DegenerateSetupError, InvalidInputError, NoTestPossibleError
from .linalg import (
    EPS,
    block_diag,
    cholesky_inverse_factor,
    null_space_basis,
    numerical_rank,
    orthonormal_image_basis,
    pinv,
)
from .system import InterconnectedSystem, Trajectory, apply_privacy, normalize_mechanisms


def build_structural(Z, C1, A1, T: int) -> np.ndarray:
    """Lower block-Toeplitz map with blocks ``C1 A1^(r-c) Z`` for r >= c."""
    T = check_positive_int(T, "T")
    C1 = as_matrix(C1, "C1")
    A1 = as_matrix(A1, "A1")
    Z = as_matrix(Z, "Z")
    p, n = C1.shape
    k = Z.shape[1]
    out = np.zeros((T * p, T * k))
    block = C1 @ Z
    for d in range(T):
        for c in range(T - d):
            r = c + d
            out[r * p : (r + 1) * p, c * k : (c + 1) * k] = block
        block = C1 @ np.linalg.matrix_power(A1, d + 1) @ Z
    return out


def observability_stack(C1, A1, T: int) -> np.ndarray:
    """Rows ``C1 A1^k`` for k = 1..T."""
    C1 = as_matrix(C1, "C1")
    A1 = as_matrix(A1, "A1")
    return np.vstack([C1 @ np.linalg.matrix_power(A1, k) for k in range(1, T + 1)])


@dataclass(frozen=True)
class BatchModel:
    """Structural matrices of the batch measurement model over horizon T.

    Built only from what the detecting subsystem is allowed to know: its own
    model and, for every other subsystem, ``C_j``, ``Sigma_vj`` and the
    privacy mechanism in use.
    """

    horizon: int
    detector: int
    others: tuple[int, ...]
    F_x: np.ndarray
    F_a: np.ndarray
    F_w: np.ndarray
    O: np.ndarray
    H: np.ndarray
    Sigma_vL: np.ndarray
    Sigma_vR: np.ndarray
    B1: np.ndarray
    S_minus: np.ndarray
    C_minus: np.ndarray
    Sigma_v_minus: np.ndarray
    Sigma_r_minus: np.ndarray
    shared_dims: tuple[int, ...]

    @property
    def local_dim(self) -> int:
        return self.F_x.shape[0]

    @property
    def shared_dim(self) -> int:
        return self.H.shape[0]

    @property
    def attack_dim(self) -> int:
        return self.F_a.shape[1]


def batch_model(system: InterconnectedSystem, mechanisms, T: int, detector: int = 0) -> BatchModel:
    T = check_positive_int(T, "T")
    if not 0 <= detector < len(system):
        raise InvalidInputError(f"detector index {detector} out of range")
    mech = normalize_mechanisms(mechanisms, len(system), detector)
    sub = system[detector]
    others = tuple(system.others(detector))
    for j in others:
        if mech[j].p != system[j].p:
            raise InvalidInputError(
                f"mechanism for subsystem {j}: S has {mech[j].p} columns, output dimension is {system[j].p}"
            )

    F_x = build_structural(sub.B, sub.C, sub.A, T) if sub.B.shape[1] else np.zeros((T * sub.p, 0))
    F_a = build_structural(np.eye(sub.n), sub.C, sub.A, T)
    O = observability_stack(sub.C, sub.A, T)
    I_T = np.eye(T)
    Sigma_vL = O @ sub.Sigma_x0 @ O.T + F_a @ np.kron(I_T, sub.Sigma_w) @ F_a.T + np.kron(I_T, sub.Sigma_v)
    Sigma_vL = 0.5 * (Sigma_vL + Sigma_vL.T)

    S_minus = block_diag(*[mech[j].S for j in others]) if others else np.zeros((0, 0))
    C_minus = block_diag(*[system[j].C for j in others]) if others else np.zeros((0, 0))
    Sv_minus = block_diag(*[system[j].Sigma_v for j in others]) if others else np.zeros((0, 0))
    Sr_minus = block_diag(*[mech[j].Sigma_r for j in others]) if others else np.zeros((0, 0))
    H = np.kron(I_T, S_minus @ C_minus) if others else np.zeros((0, 0))
    shared_block = S_minus @ Sv_minus @ S_minus.T + Sr_minus
    if shared_block.size and numerical_rank(shared_block) < shared_block.shape[0]:
        raise InvalidInputError("shared-noise covariance is singular")
    Sigma_vR = np.kron(I_T, shared_block)
    return BatchModel(
        horizon=T,
        detector=detector,
        others=others,
        F_x=F_x,
        F_a=F_a,
        F_w=F_a.copy(),
        O=O,
        H=H.reshape(T * S_minus.shape[0], F_x.shape[1]),
        Sigma_vL=Sigma_vL,
        Sigma_vR=Sigma_vR,
        B1=sub.B,
        S_minus=S_minus,
        C_minus=C_minus,
        Sigma_v_minus=Sv_minus,
        Sigma_r_minus=Sr_minus,
        shared_dims=tuple(mech[j].m for j in others),
    )


@dataclass(frozen=True)
class AggregatedBatch:
    """Stacked local (k = 1..T) and shared (k = 0..T-1) measurements.

    With a trial axis, ``y_L`` and ``y_R`` are ``(n_trials, dim)``.
    """

    y_L: np.ndarray
    y_R: np.ndarray
    model: BatchModel

    def features(self) -> np.ndarray:
        """``[y_L | y_R]`` rows, the input layout of `GLRTDetector`."""
        return np.concatenate([np.atleast_2d(self.y_L), np.atleast_2d(self.y_R)], axis=-1)


def aggregate(
    trajectory: Trajectory,
    mechanisms,
    detector: int = 0,
    seed: int | None = None,
    shared: dict | None = None,
    model: BatchModel | None = None,
) -> AggregatedBatch:
    """Stack a trajectory into the batch measurement model.

    The shared streams are produced with `apply_privacy` (seeded by `seed`,
    default the trajectory seed) unless passed in via `shared`.
    """
    system = trajectory.system
    T = trajectory.horizon
    if model is None:
        model = batch_model(system, mechanisms, T, detector)
    if shared is None:
        shared = apply_privacy(trajectory, mechanisms, seed=seed, detector=detector)
    y_loc = trajectory.outputs[detector][..., 1 : T + 1, :]
    y_L = y_loc.reshape(*y_loc.shape[:-2], -1)
    lead = y_loc.shape[:-2]
    if model.others:
        per_time = np.concatenate([shared[j][..., 0:T, :] for j in model.others], axis=-1)
        y_R = per_time.reshape(*lead, -1)
    else:
        y_R = np.zeros((*lead, 0))
    if y_R.shape[-1] != model.shared_dim:
        raise InvalidInputError(f"shared data has {y_R.shape[-1]} entries, model expects {model.shared_dim}")
    return AggregatedBatch(y_L, y_R, model)


@dataclass(frozen=True)
class DetectionSetup:
    """Processed-measurement machinery for one batch model.

    ``M`` spans the directions kept after eliminating the interconnection
    component that cannot be estimated; ``Sigma_vP`` is the covariance of
    the processed noise, ``R`` whitens it (``R Sigma_vP R^T = I``) and
    ``U`` is an orthonormal basis of ``Im(R M^T F_a)``. The statistic has q
    degrees of freedom and noncentrality ``a^T Lambda a``.
    """

    model: BatchModel
    M: np.ndarray
    H_tilde: np.ndarray
    H_tilde_pinv: np.ndarray
    gain: np.ndarray
    Sigma_vP: np.ndarray
    R: np.ndarray
    U: np.ndarray
    M1: np.ndarray
    q: int
    Lambda: np.ndarray

    @property
    def elimination_residual(self) -> float:
        """``||M^T F_x (I - H~^+ H~)||``, zero up to round-off."""
        m = self.model
        if m.F_x.shape[1] == 0:
            return 0.0
        proj = np.eye(m.F_x.shape[1]) - self.H_tilde_pinv @ self.H_tilde
        return float(np.linalg.norm(self.M.T @ m.F_x @ proj))


def _interconnection_kernel(model: BatchModel) -> np.ndarray:
    """Orthonormal basis of Null(H): interconnection directions not estimable."""
    n_other = model.F_x.shape[1]
    if n_other == 0:
        return np.zeros((0, 0))
    SC = model.S_minus @ model.C_minus
    N0 = null_space_basis(SC) if SC.shape[0] else np.eye(SC.shape[1])
    return np.kron(np.eye(model.horizon), N0)


def elimination_basis(model: BatchModel) -> np.ndarray:
    """Orthonormal basis of the left null space of ``F_x (I - H~^+ H~)``.

    ``I - H~^+ H~`` is the projector onto Null(H), so the column space of
    ``F_x (I - H~^+ H~)`` equals that of ``F_x N`` with N an orthonormal
    basis of Null(H); the rank decision is made on ``F_x N`` against the
    scale of ``F_x`` rather than of the (possibly vanishing) product.
    """
    N = _interconnection_kernel(model)
    p = model.local_dim
    if N.size == 0:
        return np.eye(p)
    K = model.F_x @ N
    scale = max(np.linalg.norm(model.F_x, 2), 1.0)
    tol = max(K.shape) * EPS * scale * 10.0
    return null_space_basis(K.T, tol=tol)


def build_setup(batch: AggregatedBatch | BatchModel, basis=None) -> DetectionSetup:
    """Build the processed-measurement machinery.

    `basis` replaces the default orthonormal elimination basis by any
    full-column-rank matrix with the same column space.
    """
    model = batch.model if isinstance(batch, AggregatedBatch) else batch
    if basis is None:
        M = elimination_basis(model)
    else:
        M = as_matrix(basis, "basis")
        if M.shape[0] != model.local_dim or numerical_rank(M) < M.shape[1]:
            raise InvalidInputError("basis must be full column rank with one row per local measurement")
    if M.shape[1] == 0:
        raise DegenerateSetupError("interconnection elimination leaves no processed measurements")

    if model.shared_dim:
        W = cholesky_inverse_factor(model.Sigma_vR)
        Sigma_vR_inv = W.T @ W
        H_tilde = model.H.T @ Sigma_vR_inv @ model.H
        H_tilde = 0.5 * (H_tilde + H_tilde.T)
        H_tilde_pinv = pinv(H_tilde)
        H_tilde_pinv = 0.5 * (H_tilde_pinv + H_tilde_pinv.T)
        gain = model.F_x @ H_tilde_pinv @ model.H.T @ Sigma_vR_inv
    else:
        k = model.F_x.shape[1]
        H_tilde = np.zeros((k, k))
        H_tilde_pinv = np.zeros((k, k))
        gain = np.zeros((model.local_dim, 0))

    Sigma_vP = M.T @ model.Sigma_vL @ M + M.T @ model.F_x @ H_tilde_pinv @ model.F_x.T @ M
    Sigma_vP = 0.5 * (Sigma_vP + Sigma_vP.T)
    R = cholesky_inverse_factor(Sigma_vP)
    M1 = M.T @ model.F_a
    RM1 = R @ M1
    tol = max(RM1.shape) * EPS * 10.0 * np.linalg.norm(R, 2) * np.linalg.norm(M, 2) * np.linalg.norm(model.F_a, 2)
    U = orthonormal_image_basis(RM1, tol=tol)
    Lambda = RM1.T @ RM1
    Lambda = 0.5 * (Lambda + Lambda.T)
    return DetectionSetup(
        model=model,
        M=M,
        H_tilde=H_tilde,
        H_tilde_pinv=H_tilde_pinv,
        gain=gain,
        Sigma_vP=Sigma_vP,
        R=R,
        U=U,
        M1=M1,
        q=U.shape[1],
        Lambda=Lambda,
    )


def undetectable(Ba, B1, S_minus, C_minus, tol: float | None = None) -> bool:
    """True when every attack direction lies in the interconnection subspace
    that the shared data cannot resolve, ``Im(Ba) ⊆ Im(B1 [I - (SC)^+ SC])``;
    such attacks vanish from the processed measurements.
    """
    Ba = as_matrix(Ba, "Ba")
    B1 = as_matrix(B1, "B1")
    SC = as_matrix(S_minus, "S_minus") @ as_matrix(C_minus, "C_minus") if np.size(S_minus) else np.zeros((0, B1.shape[1]))
    if np.linalg.norm(Ba) == 0:
        return True
    N0 = null_space_basis(SC) if SC.shape[0] else np.eye(B1.shape[1])
    K = B1 @ N0
    if tol is None:
        scale = max(np.linalg.norm(B1, 2), np.linalg.norm(Ba, 2), 1.0)
        tol = (K.shape[0] + Ba.shape[1] + K.shape[1]) * EPS * scale * 10.0
    return numerical_rank(np.hstack([K, Ba]), tol) == numerical_rank(K, tol) if K.size else False


def process(batch: AggregatedBatch, setup: DetectionSetup) -> np.ndarray:
    """Processed measurements ``z = M^T (y_L - gain y_R)`` (row-wise for trials)."""
    y_L = np.asarray(batch.y_L, dtype=float)
    y_R = np.asarray(batch.y_R, dtype=float)
    return _process(y_L, y_R, setup)


def _process(y_L, y_R, setup: DetectionSetup) -> np.ndarray:
    resid = y_L - y_R @ setup.gain.T if setup.gain.size else y_L
    return resid @ setup.M


@dataclass(frozen=True)
class TestResult:
    """GLRT outcome; array-valued fields when several batches were tested."""

    statistic: float | np.ndarray
    threshold: float
    decision: str | np.ndarray
    p_false_alarm: float

    @property
    def alarm(self):
        return np.asarray(self.decision) == "H1"


TestResult.__test__ = False  # not a pytest class


def glrt_statistic(z, setup: DetectionSetup) -> np.ndarray | float:
    """Energy of the whitened, attack-space-projected signal ``||U^T R z||^2``."""
    z = np.asarray(z, dtype=float)
    proj = z @ (setup.U.T @ setup.R).T
    t = np.sum(proj * proj, axis=-1)
    return float(t) if np.ndim(t) == 0 else t


def glrt_statistic_direct(z, setup: DetectionSetup):
    """The unsimplified GLRT form ``z^T Sv^-1 M1 Lambda^+ M1^T Sv^-1 z``."""
    z = np.asarray(z, dtype=float)
    Sinv = np.linalg.inv(setup.Sigma_vP)
    W = Sinv @ setup.M1 @ pinv(setup.Lambda) @ setup.M1.T @ Sinv
    t = np.einsum("...i,ij,...j->...", z, W, z)
    return float(t) if np.ndim(t) == 0 else t


def glrt(z, setup: DetectionSetup, p_false_alarm: float = 0.05) -> TestResult:
    """Chi-square test of ``a = 0`` against ``a != 0`` at size `p_false_alarm`."""
    p_false_alarm = check_probability(p_false_alarm, "p_false_alarm")
    if setup.q == 0:
        raise NoTestPossibleError("processed measurements carry no attack signature (q = 0)")
    tau = chi2_quantile(setup.q, p_false_alarm)
    t = glrt_statistic(z, setup)
    decision = np.where(np.asarray(t) > tau, "H1", "H0")
    if decision.ndim == 0:
        decision = str(decision)
    return TestResult(t, tau, decision, p_false_alarm)


def stack_attack(Ba, values) -> np.ndarray:
    """Stacked state-level attack ``[Ba a(0); ...; Ba a(T-1)]``."""
    Ba = as_matrix(Ba, "Ba")
    vals = np.asarray(values, dtype=float).reshape(-1, Ba.shape[1])
    return (vals @ Ba.T).reshape(-1)


def detection_parameters(setup: DetectionSetup, a) -> tuple[int, float]:
    """``(q, a^T Lambda a)`` for a stacked state-level attack `a`."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != setup.model.attack_dim:
        raise InvalidInputError(f"attack must have {setup.model.attack_dim} entries, got {a.shape[0]}")
    lam = float(a @ setup.Lambda @ a)
    return setup.q, max(lam, 0.0)


class GLRTDetector(TransformerMixin, ClassifierMixin, BaseEstimator):
    """Local chi-square attack detector as a scikit-learn estimator.

    Fitting needs no data: the detector is fully determined by the
    detecting subsystem's model and the other subsystems' published sharing
    parameters. Each input row is one batch, laid out as ``[y_L | y_R]``
    (see `AggregatedBatch.features`).

    Parameters
    ----------
    system : InterconnectedSystem
    mechanisms : mapping or sequence of PrivacyMechanism
        One mechanism per non-detecting subsystem.
    horizon : int
        Batch length T.
    p_false_alarm : float
        Test size.
    detector : int
        Index of the detecting subsystem.

    Attributes
    ----------
    setup_ : DetectionSetup
    q_ : int
    threshold_ : float
    classes_ : ndarray, ``[0, 1]`` (1 = attack)
    """

    def __init__(self, system=None, mechanisms=None, horizon=1, p_false_alarm=0.05, detector=0):
        self.system = system
        self.mechanisms = mechanisms
        self.horizon = horizon
        self.p_false_alarm = p_false_alarm
        self.detector = detector

    def fit(self, X=None, y=None):
        if self.system is None or self.mechanisms is None:
            raise InvalidInputError("GLRTDetector needs a system and mechanisms")
        model = batch_model(self.system, self.mechanisms, self.horizon, self.detector)
        self.setup_ = build_setup(model)
        self.q_ = self.setup_.q
        if self.q_ == 0:
            raise NoTestPossibleError("processed measurements carry no attack signature (q = 0)")
        self.threshold_ = chi2_quantile(self.q_, check_probability(self.p_false_alarm, "p_false_alarm"))
        self.n_features_in_ = model.local_dim + model.shared_dim
        self.classes_ = np.array([0, 1])
        if X is not None:
            self._check_X(X)
        return self

    def _check_X(self, X):
        X = check_array(X, ensure_2d=False)
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features per batch, got {X.shape[1]}")
        return X

    def transform(self, X):
        """Processed measurements z, one row per batch."""
        check_is_fitted(self, "setup_")
        X = self._check_X(X)
        p = self.setup_.model.local_dim
        return _process(X[:, :p], X[:, p:], self.setup_)

    def decision_function(self, X):
        """GLRT statistic per batch; alarms where it exceeds ``threshold_``."""
        return np.atleast_1d(glrt_statistic(self.transform(X), self.setup_))

    def predict(self, X):
        return (self.decision_function(X) > self.threshold_).astype(int)

    def detection_probability(self, a) -> float:
        """Analytic probability of raising an alarm under stacked attack `a`."""
        check_is_fitted(self, "setup_")
        q, lam = detection_parameters(self.setup_, a)
        return detection_probability(q, lam, self.p_false_alarm).p_detect
