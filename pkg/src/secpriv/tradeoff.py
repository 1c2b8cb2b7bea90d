"""Detection performance against privacy of the sharing subsystems.

Comparing two sets of mechanisms where the second is more private: the
second set never has more degrees of freedom and never more SNR, and the
SNR ratio of any attack is confined to the band spanned by the
generalized eigenvalues of ``(Lambda1, Lambda2)``. Because fewer degrees of
freedom raise P_D, the more private set can still detect some attacks
better; which case wins is decided attack by attack.

The second half designs the added-noise covariances that maximise
detectability subject to a privacy floor for every sharing subsystem.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_probability
from .chi2 import detection_probability
from .detector import batch_model, build_setup, detection_parameters
from .exceptions import (
    EmptyPencilError,
    InfeasibleDesignError,
    InvalidInputError,
    UnsupportedProblemError,
)
from .linalg import PencilSpectrum, generalized_eigh, numerical_rank, pinv
from .privacy import PrivacyMechanism, assess, is_more_private, subspace_contained
from .system import normalize_mechanisms

# attacks whose second-case SNR is below this are reported, not banded
NULL_SNR = 1e-10


@dataclass(frozen=True)
class AttackRecord:
    lam1: float
    lam2: float
    pd1: float
    pd2: float
    verdict: str  # "trade-off" or "counter-trade-off"

    @property
    def ratio(self) -> float:
        return self.lam1 / self.lam2 if self.lam2 > 0 else float("inf")


@dataclass
class TradeoffReport:
    """Detection parameters of two mechanism sets and per-attack verdicts.

    ``spectrum`` holds the generalized eigenvalues of ``(Lambda1,
    Lambda2)``; ``mu_max`` is infinite when some attack direction is seen
    only by the first set.
    """

    q1: int
    q2: int
    Lambda1: np.ndarray
    Lambda2: np.ndarray
    spectrum: PencilSpectrum | None
    p_false_alarm: float
    records: list[AttackRecord] = field(default_factory=list)

    @property
    def mu_min(self) -> float:
        return self.spectrum.mu_min if self.spectrum is not None else float("nan")

    @property
    def mu_max(self) -> float:
        return self.spectrum.mu_max if self.spectrum is not None else float("nan")

    @property
    def mu_max_finite(self) -> float:
        return self.spectrum.mu_max_finite if self.spectrum is not None else float("nan")

    @property
    def counter_tradeoffs(self) -> list[AttackRecord]:
        return [r for r in self.records if r.verdict == "counter-trade-off"]

    def band_violations(self, rtol: float = 1e-7) -> tuple[int, int, int]:
        """``(violations, checked, excluded)`` for the SNR band and q ordering.

        Attacks with ``lam2 < NULL_SNR`` are excluded: for them the ratio is
        unbounded and only ``lam1 >= lam2`` is meaningful.
        """
        bad = int(self.q1 < self.q2)
        checked = excluded = 0
        for r in self.records:
            if r.lam2 < NULL_SNR:
                excluded += 1
                continue
            checked += 1
            hi = r.lam2 * self.mu_max * (1 + rtol)
            lo = r.lam2 * self.mu_min * (1 - rtol)
            if not (lo <= r.lam1 <= hi) or self.mu_min < 1 - rtol:
                bad += 1
        return bad, checked, excluded


def _verdict(pd1: float, pd2: float) -> str:
    return "trade-off" if pd2 <= pd1 else "counter-trade-off"


def _pencil(L1, L2) -> PencilSpectrum | None:
    try:
        return generalized_eigh(L1, L2)
    except EmptyPencilError:
        return None


def compare_mechanism_sets(
    system,
    mechs1,
    mechs2,
    T: int,
    p_false_alarm: float = 0.05,
    attacks=(),
    detector: int = 0,
    check_order: bool = True,
) -> TradeoffReport:
    """Compare detection under `mechs1` against the more private `mechs2`.

    `attacks` are stacked state-level attacks of length ``T * n_detector``.
    A warning is issued when `mechs2` is not more private than `mechs1` for
    every sharing subsystem.
    """
    p_false_alarm = check_probability(p_false_alarm, "p_false_alarm")
    m1 = normalize_mechanisms(mechs1, len(system), detector)
    m2 = normalize_mechanisms(mechs2, len(system), detector)
    if check_order:
        for j in system.others(detector):
            res = is_more_private(m2[j], m1[j], system[j].C, system[j].Sigma_v, T)
            if not res:
                warnings.warn(f"subsystem {j}: second mechanism is not more private ({res.reason})", stacklevel=2)
    s1 = build_setup(batch_model(system, m1, T, detector))
    s2 = build_setup(batch_model(system, m2, T, detector))
    report = TradeoffReport(s1.q, s2.q, s1.Lambda, s2.Lambda, _pencil(s1.Lambda, s2.Lambda), p_false_alarm)
    for a in attacks:
        report.records.append(_record(s1, s2, a, p_false_alarm))
    return report


def _pd(q: int, lam: float, pfa: float) -> float:
    return detection_probability(q, lam, pfa).p_detect if q > 0 else pfa


def _record(s1, s2, a, pfa) -> AttackRecord:
    _, lam1 = detection_parameters(s1, a)
    _, lam2 = detection_parameters(s2, a)
    pd1 = _pd(s1.q, lam1, pfa)
    pd2 = _pd(s2.q, lam2, pfa)
    return AttackRecord(lam1, lam2, pd1, pd2, _verdict(pd1, pd2))


@dataclass(frozen=True)
class RegionPoint:
    """Grid point ``x = lam2`` (more private case), ``y = lam1``."""

    x: float
    y: float
    admissible: bool
    pd1: float
    pd2: float
    better: str  # "case1" (ties included) or "case2"


def admissible_region(Lambda1, Lambda2, grid, q1: int | None = None, q2: int | None = None, p_false_alarm: float = 0.05):
    """Classify ``(lam2, lam1)`` pairs on a grid.

    A pair is achievable by some attack iff ``x mu_min <= y <= x mu_max``
    (with ``x = 0`` admissible only at ``y = 0`` unless some direction is
    invisible to the second case). `grid` is one array used for both axes
    or a pair ``(xs, ys)``. Degrees of freedom default to the ranks.
    """
    pencil = _pencil(Lambda1, Lambda2)
    if pencil is None:
        raise InvalidInputError("second SNR matrix is zero: every admissible pair has x = 0")
    q1 = numerical_rank(Lambda1) if q1 is None else q1
    q2 = numerical_rank(Lambda2) if q2 is None else q2
    if isinstance(grid, tuple) and len(grid) == 2:
        xs, ys = (np.asarray(g, dtype=float) for g in grid)
    else:
        xs = ys = np.asarray(grid, dtype=float)
    out = []
    for x in xs:
        pd2 = _pd(q2, x, p_false_alarm)
        for y in ys:
            out.append(_classify(x, y, pencil, q1, pd2, p_false_alarm))
    return out


def _classify(x, y, pencil: PencilSpectrum, q1, pd2, pfa, rtol: float = 1e-12) -> RegionPoint:
    if x == 0:
        ok = y == 0 or pencil.n_infinite > 0
    else:
        ok = x * pencil.mu_min * (1 - rtol) <= y <= x * pencil.mu_max * (1 + rtol)
    pd1 = _pd(q1, y, pfa)
    return RegionPoint(float(x), float(y), bool(ok), pd1, pd2, "case1" if pd1 >= pd2 else "case2")


def extreme_attacks(Lambda1, Lambda2) -> tuple[np.ndarray, np.ndarray]:
    """Attacks attaining the smallest and largest finite SNR ratio."""
    pencil = generalized_eigh(Lambda1, Lambda2)
    return pencil.vectors[:, 0].copy(), pencil.vectors[:, -1].copy()


@dataclass(frozen=True)
class NoiseSweep:
    sigmas: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    p_detect: np.ndarray
    p_miss: np.ndarray

    @property
    def nonincreasing(self) -> bool:
        return bool(np.all(np.diff(self.p_detect) <= 0) and np.all(np.diff(self.p_miss) >= 0))

    @property
    def strictly_decreasing(self) -> bool:
        """Strict decrease of P_D, read off the miss probability when P_D rounds to 1."""
        return bool(np.all(np.diff(self.p_miss) > 0))


def strict_tradeoff_check(
    system,
    base_mechs,
    noise_scales,
    attack,
    p_false_alarm: float = 0.05,
    T: int = 1,
    detector: int = 0,
) -> NoiseSweep:
    """P_D as the shared noise grows with the selection subspaces held fixed.

    Scale ``sigma`` adds ``sigma^2 I`` to every base mechanism's noise.
    `noise_scales` must be nondecreasing.
    """
    sig = np.asarray(noise_scales, dtype=float)
    if np.any(sig < 0) or np.any(np.diff(sig) < 0):
        raise InvalidInputError("noise scales must be nonnegative and nondecreasing")
    base = normalize_mechanisms(base_mechs, len(system), detector)
    qs, lams, pds, pms = [], [], [], []
    for s in sig:
        mechs = {j: PrivacyMechanism(m.S, m.Sigma_r + s**2 * np.eye(m.m)) for j, m in base.items()}
        for j, m in mechs.items():
            if not (subspace_contained(m.S, base[j].S) and subspace_contained(base[j].S, m.S)):
                raise InvalidInputError("selection subspaces must stay fixed across the sweep")
        st = build_setup(batch_model(system, mechs, T, detector))
        q, lam = detection_parameters(st, attack)
        pt = detection_probability(q, lam, p_false_alarm)
        qs.append(q)
        lams.append(lam)
        pds.append(pt.p_detect)
        pms.append(pt.p_miss)
    if len(set(qs)) > 1:
        raise UnsupportedProblemError("degrees of freedom changed across the sweep")
    return NoiseSweep(sig, np.array(qs), np.array(lams), np.array(pds), np.array(pms))


@dataclass
class NoiseDesignProblem:
    """Trace problem ``min sum_j Tr(L_jj Sigma_j) + l1`` s.t. ``Tr(G_j Sigma_j) >= eps_j``.

    Blocks follow the sharing subsystems in index order. ``epsilon`` holds
    the per-block trace floors (already shifted and scaled from the raw
    privacy levels); `g` are the noise-free error-covariance traces.
    """

    L1: np.ndarray
    l1: float
    subsystems: tuple[int, ...]
    block_dims: tuple[int, ...]
    G: list[np.ndarray]
    g: list[float]
    epsilon: np.ndarray
    horizon: int

    @property
    def L_blocks(self) -> list[np.ndarray]:
        out, start = [], 0
        for d in self.block_dims:
            out.append(self.L1[start : start + d, start : start + d])
            start += d
        return out

    def with_epsilon(self, epsilon) -> "NoiseDesignProblem":
        eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (len(self.block_dims),)).copy()
        if np.any(eps < 0):
            raise InvalidInputError("trace floors must be nonnegative")
        return NoiseDesignProblem(self.L1, self.l1, self.subsystems, self.block_dims, self.G, self.g, eps, self.horizon)

    def objective(self, Sigmas) -> float:
        return float(self.l1 + sum(np.trace(L @ S) for L, S in zip(self.L_blocks, Sigmas)))

    def constraint_values(self, Sigmas) -> np.ndarray:
        return np.array([np.trace(G @ S) for G, S in zip(self.G, Sigmas)])


def _design_terms(system, mechanisms, T, detector):
    mech = normalize_mechanisms(mechanisms, len(system), detector)
    model = batch_model(system, mech, T, detector)
    if numerical_rank(model.F_a) < model.F_a.shape[0]:
        raise UnsupportedProblemError("local output map must have full row rank")
    for i, sub in enumerate(system.subsystems):
        if numerical_rank(sub.C) < sub.p:
            raise UnsupportedProblemError(f"C of subsystem {i} must have full row rank")
    SC = model.S_minus @ model.C_minus
    if numerical_rank(SC) < SC.shape[0]:
        raise UnsupportedProblemError("shared maps S_j C_j must have full row rank")
    return mech, model, build_setup(model), SC


def build_noise_design(system, mechanisms, T: int, privacy_levels=None, detector: int = 0) -> NoiseDesignProblem:
    """Assemble the trace problem for the selections in `mechanisms`.

    Only the selection matrices matter; the mechanisms' own noise is
    ignored. `privacy_levels` are the raw floors on ``Tr(Sigma_e)``; each
    becomes ``max((level - g_j) / T, 0)``. Omitted levels give zero floors.
    """
    mech, model, setup, SC = _design_terms(system, mechanisms, T, detector)
    M1 = setup.M1
    M1p = pinv(M1)
    proj = M1p @ M1
    n1 = model.B1.shape[0]
    D1 = sum(proj[t * n1 : (t + 1) * n1, t * n1 : (t + 1) * n1] for t in range(T))
    K1 = model.B1 @ pinv(SC)
    L1 = K1.T @ D1 @ K1
    L1 = 0.5 * (L1 + L1.T)
    shared_v = K1 @ model.S_minus @ model.Sigma_v_minus @ model.S_minus.T @ K1.T
    l1 = float(
        np.trace(M1p @ setup.M.T @ model.Sigma_vL @ setup.M @ M1p.T) + np.trace(proj @ np.kron(np.eye(T), shared_v))
    )
    G, g = [], []
    for j in model.others:
        SjCj = mech[j].S @ system[j].C
        P = pinv(SjCj)
        G.append(P.T @ P)
        Hp = np.kron(np.eye(T), P)
        noise = np.kron(np.eye(T), mech[j].S @ system[j].Sigma_v @ mech[j].S.T)
        g.append(float(np.trace(Hp @ noise @ Hp.T)))
    if privacy_levels is None:
        eps = np.zeros(len(g))
    else:
        lv = np.broadcast_to(np.asarray(privacy_levels, dtype=float), (len(g),))
        eps = np.maximum((lv - np.array(g)) / T, 0.0)
    return NoiseDesignProblem(L1, l1, model.others, model.shared_dims, G, g, eps, T)


def trace_identity_residuals(problem: NoiseDesignProblem, system, mechanisms, Sigmas, detector: int = 0) -> tuple[float, float]:
    """Relative residuals of the two trace identities at noise `Sigmas`.

    Compares ``Tr(Lambda^+)`` and every ``Tr(Sigma_e_j)`` computed from the
    detector and the privacy assessment against the affine forms.
    """
    mech = normalize_mechanisms(mechanisms, len(system), detector)
    noisy = {j: PrivacyMechanism(mech[j].S, S) for j, S in zip(problem.subsystems, Sigmas)}
    setup = build_setup(batch_model(system, noisy, problem.horizon, detector))
    lhs = float(np.trace(pinv(setup.Lambda)))
    rhs = problem.objective(Sigmas)
    r1 = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    r2 = 0.0
    for k, j in enumerate(problem.subsystems):
        a = assess(noisy[j], system[j].C, system[j].Sigma_v, problem.horizon)
        lhs_e = float(np.trace(a.Sigma_e))
        rhs_e = problem.g[k] + problem.horizon * float(np.trace(problem.G[k] @ Sigmas[k]))
        r2 = max(r2, abs(lhs_e - rhs_e) / max(abs(lhs_e), 1e-300))
    return r1, r2


@dataclass(frozen=True)
class NoiseDesignSolution:
    Sigmas: list[np.ndarray]
    cost: float
    block_costs: np.ndarray
    multipliers: np.ndarray

    def by_subsystem(self, problem: NoiseDesignProblem) -> dict:
        return dict(zip(problem.subsystems, self.Sigmas))


def solve_block(L, G, eps: float):
    """``min Tr(L S)`` s.t. ``Tr(G S) >= eps``, ``S >= 0``; returns (S, cost, multiplier).

    The optimum is rank one along the generalized eigenvector of ``(L, G)``
    with the smallest eigenvalue, scaled onto the constraint.
    """
    d = L.shape[0]
    if eps == 0:
        return np.zeros((d, d)), 0.0, 0.0
    try:
        pencil = generalized_eigh(L, G)
    except EmptyPencilError:
        raise InfeasibleDesignError("privacy floor is positive but the constraint matrix is zero") from None
    v = pencil.vectors[:, 0]
    mu = max(pencil.mu_min, 0.0)
    S = eps / float(v @ G @ v) * np.outer(v, v)
    S = 0.5 * (S + S.T)
    return S, float(np.trace(L @ S)), mu


def solve_noise_design(problem: NoiseDesignProblem) -> NoiseDesignSolution:
    Sig, costs, mults = [], [], []
    for L, G, e in zip(problem.L_blocks, problem.G, problem.epsilon):
        S, c, mu = solve_block(L, G, float(e))
        Sig.append(S)
        costs.append(c)
        mults.append(mu)
    costs = np.array(costs)
    return NoiseDesignSolution(Sig, float(problem.l1 + costs.sum()), costs, np.array(mults))


def kkt_residual(problem: NoiseDesignProblem, sol: NoiseDesignSolution) -> float:
    """Largest violation of primal feasibility, dual feasibility or slackness."""
    worst = 0.0
    for L, G, S, e, nu in zip(problem.L_blocks, problem.G, sol.Sigmas, problem.epsilon, sol.multipliers):
        scale = 1.0 + np.linalg.norm(L, 2) + nu * np.linalg.norm(G, 2)
        worst = max(worst, max(0.0, -float(np.linalg.eigvalsh(S)[0])) / (1.0 + np.linalg.norm(S, 2)))
        worst = max(worst, max(0.0, e - float(np.trace(G @ S))) / (1.0 + e))
        Z = L - nu * G
        worst = max(worst, max(0.0, -float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[0])) / scale)
        worst = max(worst, abs(float(np.trace(Z @ S))) / (scale * (1.0 + np.trace(S))))
    return worst
