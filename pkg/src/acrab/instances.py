"""Instance builders: the two-arm counterexample bandit, the l2-vs-linf bandit,
and random exactly-realizable MDP families."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .classes import AuditPolicySet, is_realizable, ValueClass, WeightClass, audit_realizability_f, audit_w_realizability, importance_weights
from .data import exact_mu, make_rng
from .errors import AcrabError, ValidationError
from .mdp import RewardKind, TabularMdp, compute_q, deterministic_policy


@dataclass(eq=False)
class InstanceFile:
    mdp: TabularMdp
    behavior: np.ndarray
    target: np.ndarray
    f_class: ValueClass
    w_class: WeightClass
    audit: AuditPolicySet
    provenance: str = ""

    def __eq__(self, other):
        if not isinstance(other, InstanceFile):
            return NotImplemented
        return (
            self.mdp == other.mdp
            and np.array_equal(self.behavior, other.behavior)
            and np.array_equal(self.target, other.target)
            and self.f_class == other.f_class
            and self.w_class == other.w_class
            and self.audit == other.audit
            and self.provenance == other.provenance
        )

    @property
    def mu(self) -> np.ndarray:
        return exact_mu(self.mdp, self.behavior)


def _bandit(reward_mean, kinds) -> TabularMdp:
    A = len(reward_mean)
    return TabularMdp(
        transition=np.ones((1, A, 1)),
        reward_mean=np.array([reward_mean], dtype=float),
        discount=0.0,
        initial_dist=np.ones(1),
        reward_kind=np.array([kinds]),
    )


# -- two-arm counterexample ---------------------------------------------------------

def two_arm_gap(n: int, beta: float) -> float:
    return min(beta / n, 0.1)


def build_appendix_d_instance(n: int, beta: float) -> InstanceFile:
    """Two-arm bandit on which squared-Bellman regularisation loses ``Delta`` w.p. Omega(1).

    Arm 1 pays ``1/2 + Delta`` deterministically, arm 2 is Bernoulli(1/2),
    ``Delta = min(beta/n, 1/10)`` and the data puts mass ``1/(n Delta^2)`` on arm 2.
    Policy index 0 is "always arm 1", index 1 is "always arm 2"; value
    tables are ``f1 = (1/2+Delta, 1/2)`` and ``f2 = (1/2+Delta, 1/2+2 Delta)``.
    """
    if n < 100:
        raise ValidationError("counterexample needs n >= 100")
    delta = two_arm_gap(n, beta)
    mu2 = 1.0 / (n * delta**2)
    if mu2 > 1.0:
        raise ValidationError(f"mu(a2) = 1/(n Delta^2) = {mu2:.4g} > 1; need n >= 1/Delta^2 = {1 / delta**2:.4g}")
    mdp = _bandit([0.5 + delta, 0.5], [RewardKind.DETERMINISTIC.value, RewardKind.BERNOULLI.value])
    behavior = np.array([[1.0 - mu2, mu2]])
    pi1, pi2 = deterministic_policy([0], 2), deterministic_policy([1], 2)
    f1 = np.array([[0.5 + delta, 0.5]])
    f2 = np.array([[0.5 + delta, 0.5 + 2 * delta]])
    w_pi1 = np.array([[1.0 / (1.0 - mu2), 0.0]])
    return InstanceFile(
        mdp=mdp,
        behavior=behavior,
        target=pi1,
        f_class=ValueClass([f1, f2], v_max=mdp.v_max),
        w_class=WeightClass([np.ones((1, 2)), w_pi1], b_w=float(w_pi1.max())),
        audit=AuditPolicySet([pi1, pi2]),
        provenance=f"two-arm n={n} beta={beta!r} delta={delta!r}",
    )


# -- l2 versus linf concentrability ---------------------------------------------------

def build_example_27_instance(epsilon: float) -> InstanceFile:
    """Bandit with ``mu = (1-eps^2, eps^2)`` and target ``(1-eps, eps)``.

    Its l-infinity concentrability is ``1/eps`` while the l2 one stays below sqrt(2).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    mdp = _bandit([0.5, 0.5], [RewardKind.DETERMINISTIC.value] * 2)
    behavior = np.array([[1.0 - epsilon**2, epsilon**2]])
    target = np.array([[1.0 - epsilon, epsilon]])
    w = target / behavior
    return InstanceFile(
        mdp=mdp,
        behavior=behavior,
        target=target,
        f_class=ValueClass([np.zeros((1, 2)), mdp.reward_mean], v_max=mdp.v_max),
        w_class=WeightClass([np.ones((1, 2)), w], b_w=float(w.max())),
        audit=AuditPolicySet([target, behavior]),
        provenance=f"l2-bandit epsilon={epsilon!r}",
    )


# -- random realizable MDPs -------------------------------------------------------------

MAX_RESAMPLES = 20
GAP_RANGE = (2e-3, 0.2)
LADDER_RUNGS = 8


def build_realizable_family(
    n_states: int,
    n_actions: int,
    seed: int,
    *,
    discount: float = 0.5,
    n_ladder: int = LADDER_RUNGS,
    n_w_distractors: int = 4,
    max_audit: int = 64,
    min_mu: float = 1e-3,
    gap_range: tuple[float, float] = GAP_RANGE,
    behavior_mix: float = 0.0,
) -> InstanceFile:
    """Random MDP whose value class realizes ``Q^pi`` for every audited policy.

    The optimal action values are planted: ``V*`` sits near ``V_max / 2`` and
    the suboptimal actions trail by gaps spaced evenly in log over
    ``gap_range`` (randomly assigned), so some decision is hard at every sample size in between.
    Rewards are then ``r = Q* - gamma P V*``.

    The audit grid is every deterministic policy (or a random subset of at most
    ``max_audit`` of them plus the optimal one) together with the behaviour
    policy. ``F`` adds a ladder of pessimistic distractors: ``Q*`` lowered on a
    single state-action pair by each of ``n_ladder`` geometrically spaced
    amounts spanning ``gap_range``. ``W`` holds the all-ones table, the exact
    weights of the optimal policy and random tables whose ``||w||_{2,mu}``
    does not exceed that of the optimal weights.

    ``behavior_mix`` moves the behaviour policy toward the optimal one:
    ``(1 - mix) * random + mix * pi*``.
    """
    if not (1 <= n_states <= 10 and 1 <= n_actions <= 5):
        raise ValidationError("realizable family supports <= 10 states and <= 5 actions")
    if not 0.0 <= behavior_mix < 1.0:
        raise ValidationError("behavior_mix must lie in [0, 1)")
    if not 0.0 < gap_range[0] <= gap_range[1]:
        raise ValidationError("gap_range must be increasing and positive")
    rng = make_rng(seed, stream=0x5EED)
    for _ in range(MAX_RESAMPLES):
        inst = _try_realizable(rng, n_states, n_actions, seed, discount, n_ladder, n_w_distractors, max_audit, gap_range, behavior_mix)
        if inst is not None and inst.mu.min() >= min_mu:
            return inst
    raise AcrabError(f"seed {seed}: no valid instance with min mu >= {min_mu} after {MAX_RESAMPLES} draws")


def _try_realizable(rng, S, A, seed, gamma, n_ladder, n_wd, max_audit, gap_range, mix) -> InstanceFile | None:
    P = rng.dirichlet(np.ones(S), size=(S, A))
    v_star = 0.5 / (1.0 - gamma) + rng.uniform(-0.1, 0.1, size=S)
    a_star = rng.integers(A, size=S)
    # stratified log-uniform gaps: evenly spaced in log, randomly assigned
    sub = np.ones((S, A), dtype=bool)
    sub[np.arange(S), a_star] = False
    n_sub = int(sub.sum())
    gaps = np.geomspace(gap_range[0], gap_range[1], n_sub) if n_sub > 1 else np.array([gap_range[1]] * n_sub)
    q_star = np.repeat(v_star[:, None], A, axis=1)
    q_star[sub] -= rng.permutation(gaps)
    r = q_star - gamma * P @ v_star
    rho = rng.dirichlet(np.ones(S))
    behavior = 0.5 * rng.dirichlet(np.ones(A), size=S) + 0.5 / A
    behavior /= behavior.sum(axis=1, keepdims=True)
    if mix > 0.0:
        behavior = (1.0 - mix) * behavior
        behavior[np.arange(S), a_star] += mix
    if r.min() < 0.0 or r.max() > 1.0:
        return None
    mdp = TabularMdp(P, r, gamma, rho, RewardKind.BERNOULLI)
    pi_star = deterministic_policy(a_star, A)

    n_det = A**S
    if n_det <= max_audit:
        det = [deterministic_policy(acts, A) for acts in itertools.product(range(A), repeat=S)]
        # keep the optimal policy first, as in the sampled branch
        det.sort(key=lambda pi: not np.array_equal(pi, pi_star))
    else:
        star_code = int(np.ravel_multi_index(tuple(a_star), (A,) * S))
        pool = np.delete(np.arange(n_det), star_code)
        picks = rng.choice(pool, size=max_audit - 1, replace=False)
        det = [pi_star] + [deterministic_policy(np.unravel_index(i, (A,) * S), A) for i in picks]
    audit_list = det + [behavior]
    qs = [compute_q(mdp, pi) for pi in audit_list]

    v_max = mdp.v_max
    ladder = np.geomspace(gap_range[0], gap_range[1], n_ladder) if n_ladder > 0 else []
    distractors = []
    for s in range(S):
        for a in range(A):
            for step in ladder:
                f = qs[0].copy()
                f[s, a] = max(0.0, f[s, a] - step)
                distractors.append(f)
    f_class = ValueClass(qs + distractors, v_max=v_max)

    mu = exact_mu(mdp, behavior)
    w_star = importance_weights(mdp, pi_star, mu)
    cap = math.sqrt(float(np.sum(w_star**2 * mu)))
    w_list = [np.ones((S, A)), w_star]
    for _ in range(n_wd):
        w = rng.uniform(0.0, 1.0, size=(S, A))
        w *= cap / math.sqrt(float(np.sum(w**2 * mu)))
        w_list.append(w)
    w_class = WeightClass(w_list, b_w=float(max(m.max() for m in w_list)))
    audit = AuditPolicySet(audit_list)

    inst = InstanceFile(mdp, behavior, pi_star, f_class, w_class, audit,
                        provenance=f"realizable n_states={S} n_actions={A} seed={seed}" + (f" behavior_mix={mix!r}" if mix else ""))
    if not is_realizable(audit_realizability_f(mdp, f_class, audit)):
        return None
    if not audit_w_realizability(mdp, pi_star, mu, w_class)[0]:
        return None
    return inst
