"""Ten-generator swing-equation network split into three subsystems.

Generators follow the linearized second-order swing dynamics around the
operating point of the IEEE 39-bus system. The collective state
``[dtheta; domega]`` is permuted so that each subsystem's state lists its
generators in order as interleaved ``(theta_g, omega_g)`` pairs; selecting
the first ``2k`` outputs of a subsystem therefore shares its first k
generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ._validation import as_matrix, as_square
from .exceptions import InvalidInputError
from .linalg import exp_and_integral
from .privacy import PrivacyMechanism
from .system import AttackSignal, InterconnectedSystem

INERTIA = (70.0, 10.0, 40.0, 30.0, 70.0, 30.0, 90.0, 80.0, 40.0, 50.0)
DAMPING = 10.0
PARTITION = ((0, 1, 2), (3, 4, 5, 6), (7, 8, 9))
ATTACKED = (0, 3, 7)
SAMPLING_TIME = 0.1
HORIZON = 3
P_FALSE_ALARM = 0.05
ATTACK_VALUE = 2500.0


@dataclass(frozen=True)
class GeneratorParams:
    inertia: float
    damping: float
    voltage: float
    angle: float  # radians
    power: float = 0.0

    def __post_init__(self):
        if not (self.inertia > 0 and self.damping > 0 and self.voltage > 0):
            raise InvalidInputError("generator inertia, damping and voltage must be positive")


@dataclass
class GridSpec:
    """Generators, line reactances (``inf`` = no line), partition, sampling time.

    `partition` groups 0-based generator indices into subsystems.
    """

    generators: list[GeneratorParams]
    X: np.ndarray
    partition: tuple[tuple[int, ...], ...] = PARTITION
    Ts: float = SAMPLING_TIME

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        n = len(self.generators)
        if self.X.shape != (n, n):
            raise InvalidInputError(f"reactance matrix must be {n}x{n}")
        if np.any(np.isnan(self.X)) or not np.array_equal(self.X, self.X.T):
            raise InvalidInputError("reactance matrix must be symmetric")
        if np.any(np.isfinite(np.diag(self.X))):
            raise InvalidInputError("no self-reactance: diagonal of X must be inf")
        off = self.X[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise InvalidInputError("reactances must be positive (or inf)")
        flat = sorted(g for grp in self.partition for g in grp)
        if flat != list(range(n)):
            raise InvalidInputError("partition must cover every generator exactly once")
        if not self.Ts > 0:
            raise InvalidInputError("sampling time must be positive")

    @property
    def n_generators(self) -> int:
        return len(self.generators)


def load_generator_data():
    """Rows ``(index, bus, voltage_pu, angle_deg, pmech_mw)`` of the shipped table."""
    path = resources.files("secpriv") / "data" / "ieee39_generators.txt"
    with resources.as_file(path) as p:
        return np.loadtxt(p, comments="#", ndmin=2)


def default_generators(inertia=INERTIA, damping: float = DAMPING) -> list[GeneratorParams]:
    data = load_generator_data()
    return [
        GeneratorParams(float(m), float(damping), float(row[2]), float(np.deg2rad(row[3])), float(row[4]))
        for m, row in zip(inertia, data)
    ]


def draw_reactances(rng: np.random.Generator, n: int, var: float = 0.01, floor: float = 1e-3) -> np.ndarray:
    """Symmetric all-to-all reactances ``max(|N(0, var)|, floor)``."""
    X = np.full((n, n), np.inf)
    iu = np.triu_indices(n, 1)
    X[iu] = np.maximum(np.abs(rng.normal(0.0, np.sqrt(var), size=len(iu[0]))), floor)
    X[(iu[1], iu[0])] = X[iu]
    return X


def laplacian(spec: GridSpec) -> np.ndarray:
    E = np.array([g.voltage for g in spec.generators])
    th = np.array([g.angle for g in spec.generators])
    with np.errstate(divide="ignore"):
        Y = np.where(np.isfinite(spec.X), 1.0 / spec.X, 0.0)
    L = -np.outer(E, E) * Y * np.cos(th[:, None] - th[None, :])
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def state_permutation(partition) -> np.ndarray:
    """Pi with ``Pi @ [theta; omega]`` grouped per subsystem as (theta_g, omega_g) pairs."""
    order = [g for grp in partition for g in grp]
    n = len(order)
    Pi = np.zeros((2 * n, 2 * n))
    for k, g in enumerate(order):
        Pi[2 * k, g] = 1.0
        Pi[2 * k + 1, n + g] = 1.0
    return Pi


def build_continuous(spec: GridSpec, attacked=ATTACKED, permute: bool = True):
    """Continuous-time ``(A_c, B_c)`` of the linearized swing network.

    With ``permute=False`` the state is ``[dtheta; domega]``.
    """
    n = spec.n_generators
    Minv = np.diag([1.0 / g.inertia for g in spec.generators])
    D = np.diag([g.damping for g in spec.generators])
    L = laplacian(spec)
    B = np.eye(n)[:, list(attacked)]
    A_c = np.block([[np.zeros((n, n)), np.eye(n)], [-Minv @ L, -Minv @ D]])
    B_c = np.vstack([np.zeros((n, len(attacked))), Minv @ B])
    if permute:
        Pi = state_permutation(spec.partition)
        A_c = Pi @ A_c @ Pi.T
        B_c = Pi @ B_c
    return A_c, B_c


def discretize(A_c, B_c, Ts: float):
    """Zero-order-hold sampling: ``(exp(A_c Ts), int_0^Ts exp(A_c t) dt B_c)``."""
    A_c = as_square(A_c, "A_c")
    B_c = as_matrix(B_c, "B_c")
    Ad, integral = exp_and_integral(A_c, Ts)
    return Ad, integral @ B_c


@dataclass
class Scenario:
    """Power-grid demonstration: system, the three mechanism cases and the attack.

    ``mechanisms[k]`` maps subsystem index (0-based) to its mechanism for
    case k; subsystem 0 is the detector.
    """

    system: InterconnectedSystem
    mechanisms: dict
    spec: GridSpec
    horizon: int = HORIZON
    p_false_alarm: float = P_FALSE_ALARM
    attack: AttackSignal | None = None
    seed: int | None = None
    detector: int = 0
    notes: dict = field(default_factory=dict)

    def noise_only(self, sigma: float) -> dict:
        """Full sharing with ``sigma^2 I`` added noise on every shared stream."""
        return {
            j: PrivacyMechanism(np.eye(self.system[j].p), sigma**2 * np.eye(self.system[j].p))
            for j in self.system.others(self.detector)
        }

    def stacked_attack(self) -> np.ndarray:
        sub = self.system[self.attack.target]
        return (self.attack.values @ sub.Ba.T).reshape(-1)


def reference_scenario(seed: int = 0, attack_value: float = ATTACK_VALUE) -> Scenario:
    """Three-subsystem grid with mechanism cases 0 (full), 1 and 2 (most private).

    Reactances are drawn from `seed`. Measurement noise is sized to the
    full per-subsystem output (every angle and velocity is measured).
    """
    rng = np.random.default_rng(seed)
    gens = default_generators()
    spec = GridSpec(gens, draw_reactances(rng, len(gens)))
    A_c, B_c = build_continuous(spec)
    A, Ba = discretize(A_c, B_c, spec.Ts)
    sizes = [2 * len(g) for g in spec.partition]
    C = [np.eye(k) for k in sizes]
    Sigma_w = [0.5 * np.eye(k) for k in sizes]
    Sigma_v = [np.eye(sizes[0]), 0.5 * np.eye(sizes[1]), np.eye(sizes[2])]
    Sigma_x0 = [np.eye(k) for k in sizes]
    # each attacked generator drives its own subsystem; the second-order
    # spill of the sampled input into neighbouring blocks is dropped
    owner = [next(i for i, grp in enumerate(spec.partition) if g in grp) for g in ATTACKED]
    cols = [[c for c, o in enumerate(owner) if o == i] for i in range(len(sizes))]
    bounds = np.cumsum([0, *sizes])
    mask = np.zeros_like(Ba)
    for c, o in enumerate(owner):
        mask[bounds[o] : bounds[o + 1], c] = 1.0
    Ba = Ba * mask
    system = InterconnectedSystem.from_global(A, Ba, sizes, C, Sigma_w, Sigma_v, Sigma_x0, attack_columns=cols)

    p2, p3 = sizes[1], sizes[2]
    mechanisms = {
        0: {1: PrivacyMechanism.full(p2), 2: PrivacyMechanism.full(p3)},
        1: {1: PrivacyMechanism.full(p2), 2: PrivacyMechanism.select(p3, range(4), 1.0)},
        2: {1: PrivacyMechanism.select(p2, range(6), 1.0), 2: PrivacyMechanism.select(p3, range(4), 1.0)},
    }
    attack = AttackSignal.constant(0, [attack_value], HORIZON)
    return Scenario(system, mechanisms, spec, attack=attack, seed=seed)
