import numpy as np
import pytest

from acrab.data import make_rng
from acrab.mdp import RewardKind, TabularMdp

ACCEPTANCE_LINES: list[str] = []


def random_mdp(rng, n_states=3, n_actions=2, discount=None, kind=RewardKind.BERNOULLI, reward_high=1.0):
    """Dense random MDP with full-support transitions."""
    gamma = rng.uniform(0.0, 0.95) if discount is None else discount
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(0.0, reward_high, size=(n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    return TabularMdp(P, r, gamma, rho, kind)


def random_policy(rng, n_states, n_actions, floor=0.0):
    pi = rng.dirichlet(np.ones(n_actions), size=n_states)
    if floor:
        pi = (1 - floor) * pi + floor / n_actions
    return pi


def chain_mdp(gamma=0.5):
    """s0 -> s1 under a0, s1 absorbing; rho = delta(s0); r(s1) = 1."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMdp(P, [[0.0], [1.0]], gamma, [1.0, 0.0])


@pytest.fixture
def rng():
    return make_rng(20240, 0)


def record_acceptance(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
