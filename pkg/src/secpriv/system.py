"""Interconnected LTI subsystems and seeded simulation of attacked runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._validation import as_covariance, as_matrix, as_square, check_positive_int
from .exceptions import InvalidInputError
from .linalg import block_diag, covariance_factor

# noise stream identifiers; one independent stream per (subsystem, kind)
_X0, _W, _V, _R = 0, 1, 2, 3


@dataclass
class SubsystemModel:
    """Matrices and noise statistics of one subsystem.

    ``x(k+1) = A x(k) + B x_other(k) + Ba a(k) + w(k)``, ``y(k) = C x(k) + v(k)``,
    where ``x_other`` stacks the states of every other subsystem in index
    order.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Ba: np.ndarray
    Sigma_w: np.ndarray
    Sigma_v: np.ndarray
    Sigma_x0: np.ndarray

    def __post_init__(self):
        self.A = as_square(self.A, "A")
        n = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        as_matrix(self.B, "B")
        self.C = as_matrix(self.C, "C")
        if self.C.shape[1] != n:
            raise InvalidInputError(f"C must have {n} columns, got {self.C.shape}")
        self.Ba = np.asarray(self.Ba, dtype=float).reshape(n, -1)
        as_matrix(self.Ba, "Ba")
        self.Sigma_w = as_covariance(self.Sigma_w, "Sigma_w", definite=True, dim=n)
        self.Sigma_v = as_covariance(self.Sigma_v, "Sigma_v", definite=True, dim=self.C.shape[0])
        self.Sigma_x0 = as_covariance(self.Sigma_x0, "Sigma_x0", dim=n)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def r(self) -> int:
        return self.Ba.shape[1]


@dataclass
class InterconnectedSystem:
    subsystems: list[SubsystemModel]

    def __post_init__(self):
        self.subsystems = list(self.subsystems)
        if not self.subsystems:
            raise InvalidInputError("need at least one subsystem")
        n = self.n
        for i, sub in enumerate(self.subsystems):
            if sub.B.shape[1] != n - sub.n:
                raise InvalidInputError(
                    f"subsystem {i}: B has {sub.B.shape[1]} columns, expected n - n_i = {n - sub.n}"
                )

    def __len__(self) -> int:
        return len(self.subsystems)

    def __getitem__(self, i: int) -> SubsystemModel:
        return self.subsystems[i]

    @property
    def n(self) -> int:
        return sum(s.n for s in self.subsystems)

    @property
    def offsets(self) -> list[slice]:
        out, start = [], 0
        for s in self.subsystems:
            out.append(slice(start, start + s.n))
            start += s.n
        return out

    def others(self, i: int) -> list[int]:
        return [j for j in range(len(self)) if j != i]

    def global_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Global state matrix and block-diagonal attack matrix."""
        n = self.n
        A = np.zeros((n, n))
        sl = self.offsets
        for i, sub in enumerate(self.subsystems):
            A[sl[i], sl[i]] = sub.A
            col = 0
            for j in self.others(i):
                nj = self.subsystems[j].n
                A[sl[i], sl[j]] = sub.B[:, col : col + nj]
                col += nj
        Ba = block_diag(*[s.Ba for s in self.subsystems])
        return A, Ba

    @classmethod
    def from_global(
        cls,
        A,
        Ba,
        partition: Sequence[int],
        C: Sequence,
        Sigma_w: Sequence,
        Sigma_v: Sequence,
        Sigma_x0: Sequence,
        attack_columns: Sequence[Sequence[int]] | None = None,
    ) -> "InterconnectedSystem":
        """Split a global ``(A, Ba)`` into subsystems of sizes `partition`.

        `attack_columns[i]` selects the columns of `Ba` that act on subsystem
        i; by default every column with a nonzero entry in its row block.
        """
        A = as_square(A, "A")
        Ba = as_matrix(Ba, "Ba")
        if sum(partition) != A.shape[0]:
            raise InvalidInputError("partition sizes must sum to the state dimension")
        bounds = np.cumsum([0, *partition])
        subs = []
        for i in range(len(partition)):
            rows = slice(bounds[i], bounds[i + 1])
            other = np.r_[0 : bounds[i], bounds[i + 1] : A.shape[0]].astype(int)
            if attack_columns is None:
                cols = np.flatnonzero(np.any(Ba[rows] != 0, axis=0))
            else:
                cols = np.asarray(attack_columns[i], dtype=int)
            subs.append(
                SubsystemModel(
                    A=A[rows, rows],
                    B=A[rows][:, other],
                    C=C[i],
                    Ba=Ba[rows][:, cols],
                    Sigma_w=Sigma_w[i],
                    Sigma_v=Sigma_v[i],
                    Sigma_x0=Sigma_x0[i],
                )
            )
        return cls(subs)


@dataclass
class AttackSignal:
    """Attack input ``values[k]`` (k = 0..T-1) entering subsystem `target`."""

    target: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("attack values must be finite")

    @classmethod
    def constant(cls, target: int, value, T: int) -> "AttackSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(target, np.tile(value, (T, 1)))


@dataclass
class Trajectory:
    """Simulated run.

    ``states[i]`` has shape ``(T+1, n_i)`` and ``outputs[i]`` shape
    ``(T+1, p_i)`` for k = 0..T; with ``n_trials`` set, both gain a leading
    trial axis.
    """

    system: InterconnectedSystem
    horizon: int
    states: list[np.ndarray]
    outputs: list[np.ndarray]
    seed: int | None
    n_trials: int | None = None
    process_noise: list[np.ndarray] = field(default_factory=list, repr=False)


def _stream(seed, i: int, kind: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, kind)))


def _draw(rng: np.random.Generator, cov: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    L = covariance_factor(cov)
    z = rng.standard_normal((*shape, cov.shape[0]))
    return z @ L.T


def _attack_inputs(system, attacks, T: int, n_trials: int) -> np.ndarray:
    """Per-step global attack injection ``Ba a(k)``, shape ``(T, n)``."""
    out = np.zeros((T, system.n))
    if attacks is None:
        return out
    if isinstance(attacks, AttackSignal):
        attacks = [attacks]
    sl = system.offsets
    for att in attacks:
        sub = system[att.target]
        if att.values.shape != (T, sub.r):
            if att.values.shape == (1, T) and sub.r == 1:
                vals = att.values.T
            else:
                raise InvalidInputError(
                    f"attack on subsystem {att.target} must have shape ({T}, {sub.r}), got {att.values.shape}"
                )
        else:
            vals = att.values
        out[:, sl[att.target]] += vals @ sub.Ba.T
    return out


def simulate(
    system: InterconnectedSystem,
    attack: AttackSignal | Sequence[AttackSignal] | None,
    T: int,
    seed: int | None = None,
    n_trials: int | None = None,
) -> Trajectory:
    """Simulate the attacked interconnected system for k = 0..T.

    Every noise source draws from its own stream keyed by ``(seed,
    subsystem, kind)``, so the same seed reproduces the run bit for bit and
    adding an attack leaves the noise realisation unchanged.
    """
    T = check_positive_int(T, "T")
    N = 1 if n_trials is None else check_positive_int(n_trials, "n_trials")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    A, _ = system.global_matrices()
    inj = _attack_inputs(system, attack, T, N)
    sl = system.offsets

    x = np.zeros((N, T + 1, system.n))
    w = np.zeros((N, T, system.n))
    for i, sub in enumerate(system.subsystems):
        x[:, 0, sl[i]] = _draw(_stream(seed, i, _X0), sub.Sigma_x0, (N,))
        w[:, :, sl[i]] = _draw(_stream(seed, i, _W), sub.Sigma_w, (N, T))
    for k in range(T):
        x[:, k + 1] = x[:, k] @ A.T + inj[k] + w[:, k]

    states, outputs, noises = [], [], []
    for i, sub in enumerate(system.subsystems):
        xi = x[:, :, sl[i]]
        v = _draw(_stream(seed, i, _V), sub.Sigma_v, (N, T + 1))
        states.append(xi)
        outputs.append(xi @ sub.C.T + v)
        noises.append(w[:, :, sl[i]])
    if n_trials is None:
        states = [s[0] for s in states]
        outputs = [y[0] for y in outputs]
        noises = [e[0] for e in noises]
    return Trajectory(system, T, states, outputs, seed, n_trials, noises)


def normalize_mechanisms(mechanisms, n_subsystems: int, detector: int) -> dict:
    """Mechanisms keyed by subsystem index, one per non-detector subsystem.

    Accepts a mapping or a sequence aligned with the subsystems (the
    detector's own entry is ignored).
    """
    if isinstance(mechanisms, Mapping):
        mech = {int(j): m for j, m in mechanisms.items() if int(j) != detector}
    else:
        mech = {j: m for j, m in enumerate(mechanisms) if j != detector}
    missing = [j for j in range(n_subsystems) if j != detector and mech.get(j) is None]
    if missing:
        raise InvalidInputError(f"no privacy mechanism for subsystem(s) {missing}")
    return mech


def apply_privacy(trajectory: Trajectory, mechanisms, seed: int | None = None, detector: int | None = None) -> dict:
    """Shared outputs ``S_j y_j(k) + r_j(k)`` for k = 0..T.

    Returns a dict keyed by subsystem index. When `detector` is given, its
    own outputs are not shared.
    """
    system = trajectory.system
    if seed is None:
        seed = trajectory.seed
    if detector is None:
        mech = dict(mechanisms) if isinstance(mechanisms, Mapping) else dict(enumerate(mechanisms))
        mech = {j: m for j, m in mech.items() if m is not None}
    else:
        mech = normalize_mechanisms(mechanisms, len(system), detector)
    shared = {}
    for j, m in sorted(mech.items()):
        y = trajectory.outputs[j]
        if m.S.shape[1] != y.shape[-1]:
            raise InvalidInputError(
                f"mechanism for subsystem {j}: S has {m.S.shape[1]} columns, output dimension is {y.shape[-1]}"
            )
        noise = _draw(_stream(seed, j, _R), m.Sigma_r, y.shape[:-1]) if m.m else np.zeros((*y.shape[:-1], 0))
        shared[j] = y @ m.S.T + noise
    return shared


def random_system(
    rng: np.random.Generator,
    state_dims: Sequence[int] = (3, 2, 2),
    output_dims: Sequence[int] | None = None,
    attack_dims: Sequence[int] | None = None,
    coupling: float = 0.4,
    radius: float = 0.9,
) -> InterconnectedSystem:
    """Random stable-ish interconnected system with PD noise statistics."""

    def spd(k):
        G = rng.standard_normal((k, k))
        return G @ G.T / k + 0.2 * np.eye(k)

    output_dims = list(state_dims) if output_dims is None else list(output_dims)
    attack_dims = [1] * len(state_dims) if attack_dims is None else list(attack_dims)
    n = sum(state_dims)
    subs = []
    for ni, pi, ri in zip(state_dims, output_dims, attack_dims):
        A = rng.standard_normal((ni, ni))
        A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
        subs.append(
            SubsystemModel(
                A=A,
                B=coupling * rng.standard_normal((ni, n - ni)),
                C=rng.standard_normal((pi, ni)) + np.eye(pi, ni),
                Ba=rng.standard_normal((ni, ri)),
                Sigma_w=spd(ni),
                Sigma_v=spd(pi),
                Sigma_x0=spd(ni),
            )
        )
    return InterconnectedSystem(subs)
