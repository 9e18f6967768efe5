"""Critic argmin, natural-policy-gradient actor and the three actor-critic loops."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classes import ValueClass, WeightClass
from .data import OfflineDataset
from .errors import ValidationError
from .mdp import TabularMdp, compute_occupancy, j_value, uniform_policy, validate_policy
from .objectives import ObjectiveBreakdown, RegularizerKind, critic_objectives

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 2.0
    k_iters: int = 500
    eta: float | str = "auto"
    regularizer_kind: RegularizerKind = RegularizerKind.WEIGHTED_AVG_BELLMAN
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValidationError("beta must be nonnegative")
        if int(self.k_iters) < 1:
            raise ValidationError("k_iters must be >= 1")
        if self.eta != "auto" and not float(self.eta) > 0:
            raise ValidationError("eta must be positive or 'auto'")
        object.__setattr__(self, "regularizer_kind", RegularizerKind(self.regularizer_kind))

    def step_size(self, n_actions: int, v_max: float) -> float:
        """Explicit ``eta``, or ``sqrt(ln|A| / K) / V_max`` for ``'auto'``."""
        if self.eta != "auto":
            return float(self.eta)
        return math.sqrt(math.log(max(n_actions, 2)) / self.k_iters) / v_max


# -- components ---------------------------------------------------------------

def critic_step(
    dataset: OfflineDataset,
    pi,
    f_class: ValueClass,
    w_class: WeightClass | None,
    config: SolverConfig,
) -> tuple[int, ObjectiveBreakdown]:
    """``argmin_f L_D(pi, f) + beta E_D(pi, f)`` over the whole class, lowest index on ties."""
    if len(f_class) == 0:
        raise ValidationError("empty value class")
    l, e, witness = critic_objectives(dataset, pi, f_class, config.regularizer_kind, w_class)
    total = l + config.beta * e
    idx = int(np.argmin(total))
    return idx, ObjectiveBreakdown(
        l_value=float(l[idx]),
        e_value=float(e[idx]),
        beta=config.beta,
        argmax_w=None if witness is None else int(witness[idx]),
    )


def npg_update(pi, f, eta: float) -> np.ndarray:
    """``pi'(a|s) ∝ pi(a|s) exp(eta f(s, a))``, computed in log space."""
    pi = np.asarray(pi, dtype=float)
    with np.errstate(divide="ignore"):
        logits = np.log(pi) + eta * np.asarray(f, dtype=float)
    logits -= logits.max(axis=1, keepdims=True)
    new = np.exp(logits)
    new /= new.sum(axis=1, keepdims=True)
    # keep support: underflow must not remove an action the input allowed
    floor = (pi > 0) & (new < _TINY)
    if floor.any():
        new[floor] = _TINY
        new /= new.sum(axis=1, keepdims=True)
    return new


# -- run records ----------------------------------------------------------------

@dataclass
class RunRecord:
    """Per-iteration trace of one actor-critic run; output is ``Unif(policies)``."""

    critic_idx: np.ndarray      # (K,)
    l_emp: np.ndarray           # (K,)
    e_emp: np.ndarray           # (K,)
    policies: np.ndarray        # (K, S, A): pi_1 .. pi_K
    critics: np.ndarray         # (K, S, A): f_1 .. f_K
    config: SolverConfig | None = None
    mode: str = "npg"
    witness_w: np.ndarray | None = None

    @property
    def k_iters(self) -> int:
        return self.policies.shape[0]

    def iterate_j(self, mdp: TabularMdp) -> np.ndarray:
        return np.array([j_value(mdp, pi) for pi in self.policies])

    def mixture_j(self, mdp: TabularMdp) -> float:
        return float(self.iterate_j(mdp).mean())

    def same_trace(self, other: RunRecord) -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("critic_idx", "l_emp", "e_emp", "policies", "critics")
        )

    def to_csv(self, path: str | Path, mdp: TabularMdp) -> None:
        js = self.iterate_j(mdp)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "critic_idx", "l_emp", "e_emp", "j_iterate"])
            for k in range(self.k_iters):
                writer.writerow([k + 1, int(self.critic_idx[k]), repr(float(self.l_emp[k])), repr(float(self.e_emp[k])), repr(float(js[k]))])

    def summary_line(self, mdp: TabularMdp) -> str:
        cfg = self.config
        kind = cfg.regularizer_kind.value if cfg else "?"
        beta = cfg.beta if cfg else float("nan")
        return f"mode={self.mode} regularizer={kind} beta={beta:g} K={self.k_iters} J(mixture)={self.mixture_j(mdp):.10f}"


def _run(
    dataset: OfflineDataset,
    f_class: ValueClass,
    w_class: WeightClass | None,
    config: SolverConfig,
) -> RunRecord:
    S, A = dataset.n_states, dataset.n_actions
    K = int(config.k_iters)
    eta = config.step_size(A, f_class.v_max)
    pi = uniform_policy(S, A)
    idx = np.empty(K, dtype=np.int64)
    ls, es = np.empty(K), np.empty(K)
    wit = np.full(K, -1, dtype=np.int64)
    policies = np.empty((K, S, A))
    critics = np.empty((K, S, A))
    for k in range(K):
        policies[k] = pi
        i, br = critic_step(dataset, pi, f_class, w_class, config)
        idx[k], ls[k], es[k] = i, br.l_value, br.e_value
        if br.argmax_w is not None:
            wit[k] = br.argmax_w
        critics[k] = f_class.members[i]
        if k + 1 < K:
            pi = npg_update(pi, critics[k], eta)
    return RunRecord(idx, ls, es, policies, critics, config=config, mode="npg",
                     witness_w=wit if w_class is not None else None)


def _with_kind(config: SolverConfig, kind: RegularizerKind) -> SolverConfig:
    if config.regularizer_kind is kind:
        return config
    return SolverConfig(config.beta, config.k_iters, config.eta, kind, config.seed)


def run_acrab(dataset: OfflineDataset, f_class: ValueClass, w_class: WeightClass, config: SolverConfig) -> RunRecord:
    """Actor-critic regularised by importance-weighted average Bellman error."""
    if w_class is None:
        raise ValidationError("A-Crab needs a weight class")
    return _run(dataset, f_class, w_class, _with_kind(config, RegularizerKind.WEIGHTED_AVG_BELLMAN))


def run_acrab_rpi(dataset: OfflineDataset, f_class: ValueClass, config: SolverConfig) -> RunRecord:
    """Variant with the unweighted ``|E_D[TD residual]|`` regulariser (no weight class)."""
    return _run(dataset, f_class, None, _with_kind(config, RegularizerKind.RPI_AVG_BELLMAN))


def run_atac(dataset: OfflineDataset, f_class: ValueClass, config: SolverConfig) -> RunRecord:
    """Baseline with the double-sampling-corrected squared Bellman regulariser."""
    return _run(dataset, f_class, None, _with_kind(config, RegularizerKind.ATAC_SQUARED))


RUNNERS = {
    "acrab": RegularizerKind.WEIGHTED_AVG_BELLMAN,
    "acrab-rpi": RegularizerKind.RPI_AVG_BELLMAN,
    "atac": RegularizerKind.ATAC_SQUARED,
}


def run_algorithm(algo: str, dataset: OfflineDataset, f_class: ValueClass, w_class: WeightClass | None, config: SolverConfig) -> RunRecord:
    if algo not in RUNNERS:
        raise ValidationError(f"unknown algorithm {algo!r}; choose from {sorted(RUNNERS)}")
    if algo == "acrab":
        return run_acrab(dataset, f_class, w_class, config)
    if algo == "acrab-rpi":
        return run_acrab_rpi(dataset, f_class, config)
    return run_atac(dataset, f_class, config)


# -- best response over an explicit policy class -----------------------------------

@dataclass
class BestResponseResult:
    """Exact solution of the actor's program over a finite policy list."""

    choice: int
    critic_idx: np.ndarray       # f^pi index for each candidate
    actor_values: np.ndarray     # L_D(pi, f^pi) for each candidate
    breakdowns: list[ObjectiveBreakdown] = field(default_factory=list)
    mode: str = "best_response"


def solve_best_response(
    dataset: OfflineDataset,
    policies: Sequence[np.ndarray],
    f_class: ValueClass,
    w_class: WeightClass | None,
    config: SolverConfig,
) -> BestResponseResult:
    """``argmax_pi L_D(pi, f^pi)`` with ``f^pi`` the regularised critic minimiser."""
    idxs, values, brs = [], [], []
    for pi in policies:
        i, br = critic_step(dataset, pi, f_class, w_class, config)
        idxs.append(i)
        brs.append(br)
        values.append(br.l_value)
    values = np.array(values)
    return BestResponseResult(int(np.argmax(values)), np.array(idxs), values, brs)


# -- regret diagnostic ------------------------------------------------------------

def measure_regret(trace: RunRecord, comparator, mdp: TabularMdp) -> float:
    """``(1/K) sum_k E_{d^comp}[f_k(s, comp) - f_k(s, pi_k)]`` with exact occupancies."""
    comparator = validate_policy(comparator, mdp.n_states, mdp.n_actions)
    d_s = compute_occupancy(mdp, comparator).sum(axis=1)
    comp_v = np.einsum("sa,ksa->ks", comparator, trace.critics)
    iter_v = np.einsum("ksa,ksa->ks", trace.policies, trace.critics)
    return float(((comp_v - iter_v) @ d_s).mean())


def npg_on_sequence(critics: np.ndarray, eta: float) -> RunRecord:
    """Run the NPG actor against a fixed (possibly adversarial) sequence of critics."""
    critics = np.asarray(critics, dtype=float)
    K, S, A = critics.shape
    pi = uniform_policy(S, A)
    policies = np.empty_like(critics)
    for k in range(K):
        policies[k] = pi
        pi = npg_update(pi, critics[k], eta)
    nan = np.full(K, np.nan)
    return RunRecord(np.full(K, -1), nan, nan.copy(), policies, critics, mode="npg-sequence")
