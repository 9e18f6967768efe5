"""Exact tabular MDP machinery.

Everything here is a dense linear solve; these routines are the ground truth
that the sample-based objectives and solvers are checked against.

Arrays follow the ``[s, a]`` / ``[s, a, s']`` layout throughout. A policy is a
plain ``(n_states, n_actions)`` row-stochastic array.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalError, ValidationError

PROB_ATOL = 1e-12
SOLVE_RESIDUAL_MAX = 1e-8


class RewardKind(str, enum.Enum):
    DETERMINISTIC = "det"
    BERNOULLI = "bern"


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite discounted MDP ``(S, A, P, R, gamma, rho)``.

    ``reward_kind`` may be a single :class:`RewardKind` or an ``(S, A)`` array
    of kinds; it is normalised to a boolean ``bernoulli`` mask.
    """

    transition: np.ndarray
    reward_mean: np.ndarray
    discount: float
    initial_dist: np.ndarray
    reward_kind: RewardKind | np.ndarray = RewardKind.DETERMINISTIC
    bernoulli: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward_mean, dtype=float)
        rho = np.array(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition must be (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if S < 1 or A < 1:
            raise ValidationError("need at least one state and one action")
        if r.shape != (S, A):
            raise ValidationError(f"reward_mean must be {(S, A)}, got {r.shape}")
        if rho.shape != (S,):
            raise ValidationError(f"initial_dist must be ({S},), got {rho.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > PROB_ATOL:
            raise ValidationError("each P[s, a, :] must be a probability vector")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > PROB_ATOL:
            raise ValidationError("initial_dist must be a probability vector")
        if np.any(r < 0) or np.any(r > 1):
            raise ValidationError("reward means must lie in [0, 1]")
        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise ValidationError(f"discount must be in [0, 1), got {gamma}")

        kind = self.reward_kind
        if isinstance(kind, (RewardKind, str)):
            mask = np.full((S, A), RewardKind(kind) is RewardKind.BERNOULLI)
        else:
            kind = np.asarray(kind)
            if kind.shape != (S, A):
                raise ValidationError(f"reward_kind table must be {(S, A)}")
            if kind.dtype == bool:
                mask = kind.copy()
            else:
                mask = np.vectorize(lambda k: RewardKind(k) is RewardKind.BERNOULLI)(kind).astype(bool)
        for arr in (P, r, rho, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward_mean", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "bernoulli", mask)
        object.__setattr__(self, "reward_kind", np.where(mask, RewardKind.BERNOULLI.value, RewardKind.DETERMINISTIC.value))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.discount)

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            self.discount == other.discount
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward_mean, other.reward_mean)
            and np.array_equal(self.initial_dist, other.initial_dist)
            and np.array_equal(self.bernoulli, other.bernoulli)
        )


# -- policies ---------------------------------------------------------------

def validate_policy(pi, n_states: int, n_actions: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (n_states, n_actions):
        raise ValidationError(f"policy must be {(n_states, n_actions)}, got {pi.shape}")
    if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > PROB_ATOL:
        raise ValidationError("policy rows must be probability vectors")
    return pi


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def deterministic_policy(actions: Sequence[int], n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, n_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def state_values(f: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``f(s, pi) = sum_a pi(a|s) f(s, a)``."""
    return np.einsum("sa,sa->s", pi, f)


def _check_table(mdp: TabularMdp, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"value table must be {(mdp.n_states, mdp.n_actions)}, got {f.shape}")
    return f


# -- exact evaluation -------------------------------------------------------

def state_transition(mdp: TabularMdp, pi: np.ndarray) -> np.ndarray:
    """``P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)``."""
    return np.einsum("sa,sat->st", pi, mdp.transition)


def compute_occupancy(mdp: TabularMdp, pi) -> np.ndarray:
    """Discounted state-action occupancy ``d^pi`` as an ``(S, A)`` array."""
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    gamma = mdp.discount
    P_pi = state_transition(mdp, pi)
    lhs = np.eye(mdp.n_states) - gamma * P_pi.T
    rhs = (1.0 - gamma) * mdp.initial_dist
    d_s = np.linalg.solve(lhs, rhs)
    residual = np.max(np.abs(lhs @ d_s - rhs))
    if residual > SOLVE_RESIDUAL_MAX:
        raise NumericalError(f"occupancy balance residual {residual:.3e}")
    d_s = np.clip(d_s, 0.0, None)
    return d_s[:, None] * pi


def occupancy_balance_residual(mdp: TabularMdp, d: np.ndarray) -> float:
    """Max violation of ``d(s') = (1-g) rho(s') + g sum_{s,a} P(s'|s,a) d(s,a)``."""
    d_s = d.sum(axis=1)
    pushed = np.einsum("sa,sat->t", d, mdp.transition)
    expected = (1.0 - mdp.discount) * mdp.initial_dist + mdp.discount * pushed
    return float(np.max(np.abs(d_s - expected)))


def compute_q(mdp: TabularMdp, pi) -> np.ndarray:
    """Solve ``(I - gamma P_pi) q = r`` on the state-action space."""
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    S, A = mdp.n_states, mdp.n_actions
    # P_sa_sa'[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')
    P_sa = np.einsum("sat,tb->satb", mdp.transition, pi).reshape(S * A, S * A)
    lhs = np.eye(S * A) - mdp.discount * P_sa
    rhs = mdp.reward_mean.ravel()
    q = np.linalg.solve(lhs, rhs)
    residual = np.max(np.abs(lhs @ q - rhs))
    if residual > SOLVE_RESIDUAL_MAX:
        raise NumericalError(f"Bellman residual {residual:.3e}")
    return q.reshape(S, A)


def bellman_apply(mdp: TabularMdp, pi, f) -> np.ndarray:
    """``(T^pi f)(s, a) = r(s, a) + gamma E_{s'}[f(s', pi)]``."""
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    f = _check_table(mdp, f)
    return mdp.reward_mean + mdp.discount * mdp.transition @ state_values(f, pi)


def bellman_residual(mdp: TabularMdp, pi, f) -> np.ndarray:
    """``f - T^pi f``."""
    return np.asarray(f, dtype=float) - bellman_apply(mdp, pi, f)


def j_value(mdp: TabularMdp, pi) -> float:
    """Normalised return ``(1 - gamma) E_rho[V^pi]``."""
    q = compute_q(mdp, pi)
    return float((1.0 - mdp.discount) * mdp.initial_dist @ state_values(q, pi))


def j_value_from_occupancy(mdp: TabularMdp, pi) -> float:
    """Same quantity as :func:`j_value`, computed as ``E_{d^pi}[r]``."""
    return float(np.sum(compute_occupancy(mdp, pi) * mdp.reward_mean))


def mixture_j_value(mdp: TabularMdp, policies: Sequence[np.ndarray]) -> float:
    """Return of the uniform mixture over ``policies`` (one policy drawn per episode)."""
    if len(policies) == 0:
        raise ValidationError("mixture needs at least one policy")
    return float(np.mean([j_value(mdp, pi) for pi in policies]))


def optimal_policy(mdp: TabularMdp, max_iter: int = 1000) -> np.ndarray:
    """Deterministic optimal policy by exact policy iteration (lowest-index ties)."""
    pi = deterministic_policy(np.zeros(mdp.n_states, dtype=int), mdp.n_actions)
    for _ in range(max_iter):
        q = compute_q(mdp, pi)
        current = state_values(q, pi)
        best = np.argmax(q, axis=1)
        # only switch on strict improvement, so ties cannot cycle
        improve = q[np.arange(mdp.n_states), best] > current + 1e-12
        if not improve.any():
            return pi
        actions = np.argmax(pi, axis=1)
        actions[improve] = best[improve]
        pi = deterministic_policy(actions, mdp.n_actions)
    raise NumericalError("policy iteration did not converge")


# -- Monte-Carlo cross-check ------------------------------------------------

def rollout_horizon(discount: float, tol: float = 1e-8) -> int:
    if discount == 0.0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(discount)))


@dataclass(frozen=True)
class RolloutEstimate:
    mean: float
    stderr: float
    horizon: int
    truncation_bias_bound: float
    n_trajectories: int


def rollout_j(mdp: TabularMdp, pi, n_trajectories: int, rng: np.random.Generator, tol: float = 1e-8) -> RolloutEstimate:
    """Monte-Carlo estimate of ``J(pi)`` from truncated trajectories.

    Each trajectory contributes ``(1-gamma) sum_{t<H} gamma^t r_t``; the dropped
    tail is at most ``gamma^H`` in normalised units (``gamma^H V_max`` unnormalised).
    """
    pi = validate_policy(pi, mdp.n_states, mdp.n_actions)
    H = rollout_horizon(mdp.discount, tol)
    gamma = mdp.discount
    pi_cdf = np.cumsum(pi, axis=1)
    P_cdf = np.cumsum(mdp.transition, axis=2)
    rho_cdf = np.cumsum(mdp.initial_dist)

    n = n_trajectories
    s = _inverse_cdf(rho_cdf[None, :], rng.random(n))
    ret = np.zeros(n)
    weight = 1.0 - gamma
    for _ in range(H):
        a = _inverse_cdf(pi_cdf[s], rng.random(n))
        mean = mdp.reward_mean[s, a]
        r = np.where(mdp.bernoulli[s, a], (rng.random(n) < mean).astype(float), mean)
        ret += weight * r
        s = _inverse_cdf(P_cdf[s, a], rng.random(n))
        weight *= gamma
    return RolloutEstimate(
        mean=float(ret.mean()),
        stderr=float(ret.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        horizon=H,
        truncation_bias_bound=gamma**H * mdp.v_max,
        n_trajectories=n,
    )


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise categorical draw: first index with ``cdf > u``."""
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[-1] - 1)
