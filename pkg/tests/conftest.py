import numpy as np
import pytest

ACCEPTANCE = pytest.StashKey[list]()

from secpriv.config import builtin_config
from secpriv.powergrid import reference_scenario
from secpriv.privacy import PrivacyMechanism
from secpriv.system import InterconnectedSystem, SubsystemModel


def spd(rng, k, floor=0.2):
    G = rng.standard_normal((k, k))
    return G @ G.T / k + floor * np.eye(k)


@pytest.fixture(scope="session")
def grid():
    return reference_scenario(seed=0)


@pytest.fixture(scope="session")
def masking():
    return builtin_config("masking")


def masking_pair(shared_row):
    """Three-state detector fed by one state of a two-state neighbour."""
    A1 = np.array([[1.0, 0, -1], [0, 1, -1], [1, 1, 1]])
    B1 = np.array([[1.0, 0], [0, 1], [0, 0]])
    s1 = SubsystemModel(A1, B1, np.eye(3), np.array([[1.0], [0], [0]]), np.eye(3), np.eye(3), np.eye(3))
    s2 = SubsystemModel(0.5 * np.eye(2), np.zeros((2, 3)), np.eye(2), np.zeros((2, 0)), np.eye(2), np.eye(2), np.eye(2))
    S = np.zeros((1, 2))
    S[0, shared_row] = 1.0
    return InterconnectedSystem([s1, s2]), {1: PrivacyMechanism(S, np.zeros((1, 1)))}


def detectable_system(rng, dims=(3, 2, 2), T=None):
    """Random system whose detector sees more outputs than it has unknown neighbours."""
    from secpriv.system import random_system

    n_other = sum(dims[1:])
    return random_system(rng, dims, output_dims=(n_other + 1, *dims[1:]), attack_dims=[2, 1, 1][: len(dims)])


def spectraplex_oracle(L, G, eps, iters=20000, seed=0):
    """Projected gradient for min Tr(L S), Tr(G S) >= eps, S >= 0 with G > 0.

    With S = G^-1/2 P G^-1/2 the feasible set becomes {P >= 0, Tr P >= eps};
    the objective is nonnegative and linear, so the constraint is active and
    the projection is onto the scaled spectraplex (eigenvalues onto a simplex).
    """
    w, V = np.linalg.eigh(G)
    Gih = V @ np.diag(w**-0.5) @ V.T
    Lt = Gih @ L @ Gih
    step = 1.0 / max(np.linalg.norm(Lt, 2), 1e-12)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(L.shape)
    P = project(X @ X.T, eps)
    for _ in range(iters):
        P = project(P - step * Lt, eps)
    return Gih @ P @ Gih


def project(P, eps):
    lam, U = np.linalg.eigh(0.5 * (P + P.T))
    mu = np.sort(lam)[::-1]
    css = np.cumsum(mu) - eps
    k = np.nonzero(mu - css / np.arange(1, len(mu) + 1) > 0)[0][-1]
    theta = css[k] / (k + 1)
    return (U * np.maximum(lam - theta, 0.0)) @ U.T


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
