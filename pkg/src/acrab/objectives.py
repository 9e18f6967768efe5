"""Actor and critic objectives, population and empirical.

Empirical objectives are computed from the dataset's sufficient statistics
(per-(s, a) counts and sums), which is exact algebra on the tuple averages.
Batched variants evaluate a whole value class at once; the single-table
functions route through the same reductions so that results agree bit for bit.

Ties in every argmax/argmin resolve to the lowest member index.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .classes import ValueClass, WeightClass
from .data import OfflineDataset, SufficientStats
from .errors import ValidationError
from .mdp import TabularMdp, bellman_apply, bellman_residual, compute_occupancy, compute_q, state_values


class RegularizerKind(str, enum.Enum):
    WEIGHTED_AVG_BELLMAN = "weighted-avg-bellman"
    RPI_AVG_BELLMAN = "rpi-avg-bellman"
    ATAC_SQUARED = "atac-squared"


@dataclass(frozen=True)
class CriticObjectiveSpec:
    beta: float
    regularizer_kind: RegularizerKind

    def __post_init__(self):
        if self.beta < 0:
            raise ValidationError("beta must be nonnegative")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    l_value: float
    e_value: float
    beta: float
    argmax_w: int | None = None

    @property
    def total(self) -> float:
        return self.l_value + self.beta * self.e_value


def _stats(dataset: OfflineDataset) -> SufficientStats:
    if dataset.n == 0:
        raise ValidationError("empty dataset")
    return dataset.stats


def _as_batch(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f[None] if f.ndim == 2 else f


# -- relative pessimism -----------------------------------------------------

def l_pop(mu, pi, f) -> float:
    """``E_mu[f(s, pi) - f(s, a)]``."""
    mu, f = np.asarray(mu, dtype=float), np.asarray(f, dtype=float)
    if mu.shape != f.shape:
        raise ValidationError("mu and f shapes differ")
    return float(np.sum(mu * (state_values(f, pi)[:, None] - f)))


def l_emp_batch(dataset: OfflineDataset, pi, fs) -> np.ndarray:
    st = _stats(dataset)
    fs = _as_batch(fs)
    v = np.einsum("sa,fsa->fs", pi, fs)
    return (st.counts[None] * (v[:, :, None] - fs)).reshape(fs.shape[0], -1).sum(axis=1) / st.n


def l_emp(dataset: OfflineDataset, pi, f) -> float:
    """``(1/N) sum_i f(s_i, pi) - f(s_i, a_i)``."""
    return float(l_emp_batch(dataset, pi, f)[0])


# -- weighted average Bellman error ------------------------------------------

def _td_sums(st: SufficientStats, pi, fs, gamma: float) -> np.ndarray:
    """Per-(s, a) sums of TD residuals ``f(s,a) - r - gamma f(s', pi)``, shape (F, S, A)."""
    v = np.einsum("sa,fsa->fs", pi, fs)
    boot = np.einsum("sat,ft->fsa", st.next_counts, v)
    return st.counts[None] * fs - st.reward_sum[None] - gamma * boot


def _weighted_means(td_sums: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    """``(1/N) sum_{s,a} w(s,a) td(s,a)`` for every (f, w) pair, shape (F, W)."""
    nf, nw = td_sums.shape[0], weights.shape[0]
    prod = td_sums.reshape(nf, 1, -1) * weights.reshape(1, nw, -1)
    return prod.sum(axis=2) / n


def weighted_td_emp(dataset: OfflineDataset, pi, fs, weights) -> np.ndarray:
    """Signed ``E_D[w(s,a)(f(s,a) - r - gamma f(s', pi))]`` for every (f, w)."""
    st = _stats(dataset)
    return _weighted_means(_td_sums(st, pi, _as_batch(fs), dataset.discount), _as_batch(weights), st.n)


def _max_abs(inner: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mag = np.abs(inner)
    idx = np.argmax(mag, axis=1)
    return mag[np.arange(mag.shape[0]), idx], idx


def e_emp_batch(dataset: OfflineDataset, pi, fs, w_class: WeightClass) -> tuple[np.ndarray, np.ndarray]:
    return _max_abs(weighted_td_emp(dataset, pi, fs, w_class.members))


def e_emp(dataset: OfflineDataset, pi, f, w_class: WeightClass) -> tuple[float, int]:
    """``max_w |E_D[w (f - r - gamma f(s', pi))]|`` and the maximizing ``w`` index."""
    val, idx = e_emp_batch(dataset, pi, f, w_class)
    return float(val[0]), int(idx[0])


_ONES_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _ones(n_states: int, n_actions: int) -> np.ndarray:
    key = (n_states, n_actions)
    if key not in _ONES_CACHE:
        _ONES_CACHE[key] = np.ones((1, n_states, n_actions))
    return _ONES_CACHE[key]


def e_emp_rpi_batch(dataset: OfflineDataset, pi, fs) -> np.ndarray:
    inner = weighted_td_emp(dataset, pi, fs, _ones(dataset.n_states, dataset.n_actions))
    return np.abs(inner[:, 0])


def e_emp_rpi(dataset: OfflineDataset, pi, f) -> float:
    """``|E_D[f(s,a) - r - gamma f(s', pi)]|``: the unweighted regulariser."""
    return float(e_emp_rpi_batch(dataset, pi, f)[0])


def weighted_bellman_pop(mdp: TabularMdp, mu, pi, fs, weights) -> np.ndarray:
    """Signed ``E_mu[w (f - T^pi f)]`` for every (f, w)."""
    fs = _as_batch(fs)
    res = np.array([bellman_residual(mdp, pi, f) for f in fs])
    return np.einsum("fsa,wsa->fw", res * np.asarray(mu)[None], _as_batch(weights))


def e_pop(mdp: TabularMdp, mu, pi, f, w_class: WeightClass) -> tuple[float, int]:
    """``max_w |E_mu[w (f - T^pi f)]|`` and the maximizing ``w`` index."""
    val, idx = _max_abs(weighted_bellman_pop(mdp, mu, pi, f, w_class.members))
    return float(val[0]), int(idx[0])


# -- squared Bellman error (ATAC) ---------------------------------------------

def squared_td_matrix(dataset: OfflineDataset, pi, gs, fs) -> np.ndarray:
    """``E_D[(g(s,a) - r - gamma f(s', pi))^2]`` for every (g, f), shape (G, F)."""
    st = _stats(dataset)
    gs, fs = _as_batch(gs), _as_batch(fs)
    gamma = dataset.discount
    v = np.einsum("sa,fsa->fs", pi, fs)
    y_sum = st.reward_sum[None] + gamma * np.einsum("sat,ft->fsa", st.next_counts, v)
    y_sq_sum = (
        st.reward_sq_sum[None]
        + 2.0 * gamma * np.einsum("sat,ft->fsa", st.reward_next, v)
        + gamma**2 * np.einsum("sat,ft->fsa", st.next_counts, v**2)
    )
    G, F = gs.shape[0], fs.shape[0]
    quad = (st.counts[None] * gs**2).reshape(G, -1).sum(axis=1)
    cross = np.einsum("gk,fk->gf", gs.reshape(G, -1), y_sum.reshape(F, -1))
    const = y_sq_sum.reshape(F, -1).sum(axis=1)
    return (quad[:, None] - 2.0 * cross + const[None, :]) / st.n


def atac_raw_batch(dataset: OfflineDataset, pi, fs) -> np.ndarray:
    """Uncorrected ``E_D[(f(s,a) - r - gamma f(s', pi))^2]`` for every ``f``."""
    return np.diag(squared_td_matrix(dataset, pi, fs, fs)).copy()


def atac_raw(dataset: OfflineDataset, pi, f) -> float:
    return float(atac_raw_batch(dataset, pi, f)[0])


def e_emp_atac_batch(dataset: OfflineDataset, pi, fs, f_class: ValueClass) -> np.ndarray:
    fs = _as_batch(fs)
    m = squared_td_matrix(dataset, pi, np.concatenate([fs, f_class.members]), fs)
    raw = m[np.arange(fs.shape[0]), np.arange(fs.shape[0])]
    return raw - m[fs.shape[0]:].min(axis=0)


def e_emp_atac(dataset: OfflineDataset, pi, f, f_class: ValueClass) -> float:
    """Double-sampling-corrected squared Bellman error ``L(f, f) - min_g L(g, f)``."""
    return float(e_emp_atac_batch(dataset, pi, f, f_class)[0])


def e_pop_squared(mdp: TabularMdp, mu, pi, f) -> float:
    """``||f - T^pi f||^2_{2, mu}``."""
    return float(np.sum(np.asarray(mu) * bellman_residual(mdp, pi, f) ** 2))


# -- batched critic objective -------------------------------------------------

def critic_objectives(
    dataset: OfflineDataset,
    pi,
    f_class: ValueClass,
    kind: RegularizerKind,
    w_class: WeightClass | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Empirical ``(L_D, E_D, witness_w)`` for every member of ``f_class``."""
    fs = f_class.members
    l = l_emp_batch(dataset, pi, fs)
    kind = RegularizerKind(kind)
    if kind is RegularizerKind.WEIGHTED_AVG_BELLMAN:
        if w_class is None:
            raise ValidationError("weighted regulariser needs a weight class")
        e, wit = e_emp_batch(dataset, pi, fs, w_class)
        return l, e, wit
    if kind is RegularizerKind.RPI_AVG_BELLMAN:
        return l, e_emp_rpi_batch(dataset, pi, fs), None
    return l, e_emp_atac_batch(dataset, pi, fs, f_class), None


# -- performance difference decomposition ------------------------------------

@dataclass(frozen=True)
class PerfDecomposition:
    mu_bellman: float       # E_mu[f - T^{pi_hat} f]
    pi_bellman: float       # E_pi[T^{pi_hat} f - f]
    policy_gap: float       # E_pi[f(s, pi) - f(s, pi_hat)]
    pessimism_gap: float    # L_mu(pi_hat, f) - L_mu(pi_hat, Q^{pi_hat})

    @property
    def total(self) -> float:
        return self.mu_bellman + self.pi_bellman + self.policy_gap + self.pessimism_gap


def perf_decomposition(mdp: TabularMdp, mu, pi, pi_hat, f) -> PerfDecomposition:
    """Four terms whose sum is ``J(pi) - J(pi_hat)`` when ``mu`` is a behaviour occupancy."""
    mu = np.asarray(mu, dtype=float)
    f = np.asarray(f, dtype=float)
    d_pi = compute_occupancy(mdp, pi)
    res = f - bellman_apply(mdp, pi_hat, f)
    d_s = d_pi.sum(axis=1)
    return PerfDecomposition(
        mu_bellman=float(np.sum(mu * res)),
        pi_bellman=float(-np.sum(d_pi * res)),
        policy_gap=float(d_s @ (state_values(f, pi) - state_values(f, pi_hat))),
        pessimism_gap=l_pop(mu, pi_hat, f) - l_pop(mu, pi_hat, compute_q(mdp, pi_hat)),
    )
