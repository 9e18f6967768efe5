"""Offline datasets drawn i.i.d. from a behaviour policy's occupancy.

Random streams come from :func:`make_rng`, a Philox (counter-based) generator
keyed by ``SeedSequence([seed, stream])``. Two different ``stream`` values
under the same ``seed`` are statistically independent, so sweep cells use
``stream = cell_index`` and stay reproducible in isolation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ValidationError
from .mdp import TabularMdp, _inverse_cdf, compute_occupancy, validate_policy


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class SufficientStats:
    """Per-(s, a) aggregates of a dataset; every empirical objective is linear in these."""

    n: int
    counts: np.ndarray          # (S, A)
    reward_sum: np.ndarray      # (S, A)
    reward_sq_sum: np.ndarray   # (S, A)
    next_counts: np.ndarray     # (S, A, S)
    reward_next: np.ndarray     # (S, A, S): sum of r_i over tuples with s'_i = s'


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    n_states: int
    n_actions: int
    discount: float = 0.0
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int64)
        a = np.asarray(self.a, dtype=np.int64)
        r = np.asarray(self.r, dtype=float)
        sn = np.asarray(self.s_next, dtype=np.int64)
        n = s.size
        if not (a.size == r.size == sn.size == n):
            raise ValidationError("tuple columns must have equal length")
        if n and (s.min() < 0 or s.max() >= self.n_states or sn.min() < 0 or sn.max() >= self.n_states):
            raise ValidationError("state index out of range")
        if n and (a.min() < 0 or a.max() >= self.n_actions):
            raise ValidationError("action index out of range")
        if n and (r.min() < 0 or r.max() > 1):
            raise ValidationError("rewards must lie in [0, 1]")
        for name, arr in (("s", s), ("a", a), ("r", r), ("s_next", sn)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.s.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (
            (self.n_states, self.n_actions, self.discount) == (other.n_states, other.n_actions, other.discount)
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in ("s", "a", "r", "s_next"))
        )

    @cached_property
    def stats(self) -> SufficientStats:
        if self.n == 0:
            raise ValidationError("empty dataset")
        S, A = self.n_states, self.n_actions
        sa = self.s * A + self.a
        counts = np.bincount(sa, minlength=S * A).reshape(S, A).astype(float)
        rsum = np.bincount(sa, weights=self.r, minlength=S * A).reshape(S, A)
        rsq = np.bincount(sa, weights=self.r**2, minlength=S * A).reshape(S, A)
        sas = sa * S + self.s_next
        nxt = np.bincount(sas, minlength=S * A * S).reshape(S, A, S).astype(float)
        rnxt = np.bincount(sas, weights=self.r, minlength=S * A * S).reshape(S, A, S)
        return SufficientStats(self.n, counts, rsum, rsq, nxt, rnxt)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "a", "r", "s_next"])
            for row in zip(self.s.tolist(), self.a.tolist(), self.r.tolist(), self.s_next.tolist()):
                writer.writerow([row[0], row[1], repr(row[2]), row[3]])

    @classmethod
    def from_csv(cls, path: str | Path, n_states: int, n_actions: int, discount: float, source: str = "") -> OfflineDataset:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["s", "a", "r", "s_next"]:
                raise ValidationError(f"bad dataset header {header!r}")
            rows = [(int(s), int(a), float(r), int(sn)) for s, a, r, sn in reader]
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(*(np.array(c) for c in cols), n_states=n_states, n_actions=n_actions, discount=discount, source=source)


def exact_mu(mdp: TabularMdp, behavior) -> np.ndarray:
    """Data distribution ``mu``: the behaviour policy's exact occupancy."""
    return compute_occupancy(mdp, behavior)


def _stratified_counts(p: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n`` items to probabilities ``p``."""
    raw = p * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def sample_dataset(
    mdp: TabularMdp,
    behavior,
    n: int,
    seed: int,
    stream: int = 0,
    *,
    exact_action_freq: bool = False,
    source: str = "behavior",
) -> OfflineDataset:
    """Draw ``n`` i.i.d. tuples: ``(s, a) ~ d^behavior``, ``r ~ R(s, a)``, ``s' ~ P(.|s, a)``.

    With ``exact_action_freq`` the ``(s, a)`` counts are fixed to the
    apportionment of ``n * mu`` and only their order, rewards and next states
    are random.
    """
    if n < 1:
        raise ValidationError("dataset size must be >= 1")
    behavior = validate_policy(behavior, mdp.n_states, mdp.n_actions)
    mu = exact_mu(mdp, behavior).ravel()
    mu = mu / mu.sum()
    rng = make_rng(seed, stream)
    S, A = mdp.n_states, mdp.n_actions
    if exact_action_freq:
        sa = np.repeat(np.arange(S * A), _stratified_counts(mu, n))
        rng.shuffle(sa)
    else:
        sa = _inverse_cdf(np.cumsum(mu)[None, :], rng.random(n))
    s, a = np.divmod(sa, A)
    mean = mdp.reward_mean[s, a]
    u = rng.random(n)
    r = np.where(mdp.bernoulli[s, a], (u < mean).astype(float), mean)
    s_next = _inverse_cdf(np.cumsum(mdp.transition, axis=2)[s, a], rng.random(n))
    return OfflineDataset(s, a, r, s_next, S, A, discount=mdp.discount, seed=seed, source=source)


def empirical_mean(dataset: OfflineDataset, g: Callable) -> float:
    """``E_D[g] = (1/N) sum_i g(s_i, a_i, r_i, s'_i)``; ``g`` is applied to column arrays."""
    if dataset.n == 0:
        raise ValidationError("empty dataset")
    vals = np.broadcast_to(np.asarray(g(dataset.s, dataset.a, dataset.r, dataset.s_next), dtype=float), (dataset.n,))
    return float(vals.mean())
