"""Finite hypothesis classes, realizability audits and concentrability coefficients.

Classes are explicit, immutable stacks of ``(S, A)`` tables. All searches over
them are exhaustive with lowest-index tie-breaking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DegenerateClassError, ValidationError
from .mdp import TabularMdp, bellman_residual, compute_occupancy, validate_policy

MEMBERSHIP_ATOL = 1e-9
# eps_F is a squared norm, so exact realizability means eps_F <= atol**2
REALIZABLE_EPS = MEMBERSHIP_ATOL**2
_BOUND_SLACK = 1e-12


def _stack(members, name: str) -> np.ndarray:
    arr = np.array([np.asarray(m, dtype=float) for m in members])
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise ValidationError(f"{name} must be a nonempty list of (S, A) tables")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ValueClass:
    members: np.ndarray
    v_max: float

    def __post_init__(self):
        arr = _stack(self.members, "value class")
        if np.any(arr < -_BOUND_SLACK) or np.any(arr > self.v_max + _BOUND_SLACK):
            raise ValidationError(f"value tables must lie in [0, {self.v_max}]")
        object.__setattr__(self, "members", arr)
        object.__setattr__(self, "v_max", float(self.v_max))

    def __len__(self):
        return self.members.shape[0]

    def __getitem__(self, i):
        return self.members[i]

    def __eq__(self, other):
        return isinstance(other, ValueClass) and self.v_max == other.v_max and np.array_equal(self.members, other.members)


@dataclass(frozen=True, eq=False)
class WeightClass:
    """Importance-weight tables in ``[0, b_w]``; must contain the all-ones table."""

    members: np.ndarray
    b_w: float | None = None

    def __post_init__(self):
        arr = _stack(self.members, "weight class")
        b_w = float(arr.max()) if self.b_w is None else float(self.b_w)
        if np.any(arr < 0) or np.any(arr > b_w + _BOUND_SLACK):
            raise ValidationError(f"weight tables must lie in [0, {b_w}]")
        if not np.any(np.all(arr == 1.0, axis=(1, 2))):
            raise ValidationError("weight class must contain the all-ones table")
        object.__setattr__(self, "members", arr)
        object.__setattr__(self, "b_w", b_w)

    @classmethod
    def ones(cls, n_states: int, n_actions: int) -> WeightClass:
        return cls([np.ones((n_states, n_actions))], b_w=1.0)

    def __len__(self):
        return self.members.shape[0]

    def __getitem__(self, i):
        return self.members[i]

    def __eq__(self, other):
        return isinstance(other, WeightClass) and self.b_w == other.b_w and np.array_equal(self.members, other.members)


@dataclass(frozen=True, eq=False)
class AuditPolicySet:
    members: np.ndarray

    def __post_init__(self):
        arr = _stack(self.members, "audit policy set")
        for pi in arr:
            validate_policy(pi, *arr.shape[1:])
        object.__setattr__(self, "members", arr)

    def __len__(self):
        return self.members.shape[0]

    def __getitem__(self, i):
        return self.members[i]

    def __iter__(self):
        return iter(self.members)

    def __eq__(self, other):
        return isinstance(other, AuditPolicySet) and np.array_equal(self.members, other.members)


# -- concentrability --------------------------------------------------------

def importance_weights(mdp: TabularMdp, target, mu: np.ndarray) -> np.ndarray:
    """``w^pi = d^pi / mu`` (zero where both vanish); raises on uncovered mass."""
    d = compute_occupancy(mdp, target)
    mu = np.asarray(mu, dtype=float)
    uncovered = (d > 0) & (mu <= 0)
    if uncovered.any():
        s, a = np.argwhere(uncovered)[0]
        raise CoverageError(int(s), int(a))
    w = np.zeros_like(d)
    np.divide(d, mu, out=w, where=mu > 0)
    return w


def c_l2(mdp: TabularMdp, target, mu) -> tuple[float, float]:
    """``||d^pi / mu||_{2, mu}``, plus the identity value ``E_{d^pi}[w^pi]``.

    The square root of the second value must agree with the first.
    """
    w = importance_weights(mdp, target, mu)
    mu = np.asarray(mu, dtype=float)
    value = math.sqrt(float(np.sum(w**2 * mu)))
    identity = float(np.sum(compute_occupancy(mdp, target) * w))
    return value, identity


def c_linf(mdp: TabularMdp, target, mu) -> float:
    w = importance_weights(mdp, target, mu)
    return float(w[np.asarray(mu) > 0].max())


def c_bellman(mdp: TabularMdp, target, mu, f_class: ValueClass, floor: float = 1e-12) -> tuple[float, int]:
    """Max over ``f`` of ``||f - T f||^2_{2,d^pi} / ||f - T f||^2_{2,mu}`` and its argmax.

    Members whose ``mu``-norm of the Bellman error is ``<= floor`` are skipped.
    """
    mu = np.asarray(mu, dtype=float)
    d = compute_occupancy(mdp, target)
    best, best_idx = -math.inf, -1
    for i, f in enumerate(f_class.members):
        res2 = bellman_residual(mdp, target, f) ** 2
        den = float(np.sum(res2 * mu))
        if math.sqrt(den) <= floor:
            continue
        ratio = float(np.sum(res2 * d)) / den
        if ratio > best:
            best, best_idx = ratio, i
    if best_idx < 0:
        raise DegenerateClassError("every member has zero Bellman error under mu")
    return best, best_idx


@dataclass(frozen=True)
class ConcentrabilityReport:
    """Three coefficients for one target; ``inf`` marks a coverage violation."""

    c_l2: float
    c_linf: float
    c_bellman: float
    witness_f: int | None
    uncovered: tuple[int, int] | None = None
    l2_identity: float = field(default=math.nan)

    def __post_init__(self):
        if self.uncovered is None:
            tol = 1e-10 * max(1.0, self.c_linf)
            if self.c_l2 > self.c_linf + tol or self.c_l2**2 > self.c_linf + tol:
                raise AssertionError(f"concentrability ordering violated: l2={self.c_l2}, linf={self.c_linf}")


def concentrability_report(mdp: TabularMdp, target, mu, f_class: ValueClass | None = None) -> ConcentrabilityReport:
    """Reporting path: coverage failures become ``inf`` entries instead of errors."""
    try:
        l2, ident = c_l2(mdp, target, mu)
        linf = c_linf(mdp, target, mu)
    except CoverageError as exc:
        return ConcentrabilityReport(math.inf, math.inf, math.inf, None, uncovered=(exc.state, exc.action))
    cb, witness = math.nan, None
    if f_class is not None:
        try:
            cb, witness = c_bellman(mdp, target, mu, f_class)
        except DegenerateClassError:
            pass
    return ConcentrabilityReport(l2, linf, cb, witness, l2_identity=ident)


# -- realizability audits ---------------------------------------------------

def audit_realizability_f(mdp: TabularMdp, f_class: ValueClass, policies: AuditPolicySet) -> float:
    """Smallest ``eps_F`` such that every audited policy is approximately realized.

    ``max_pi min_f max_nu ||f - T^pi f||^2_{2, nu}`` with ``nu`` ranging over the
    occupancies of the audit set.
    """
    occ = np.array([compute_occupancy(mdp, pi) for pi in policies])      # (P, S, A)
    worst = 0.0
    for pi in policies:
        res2 = np.array([bellman_residual(mdp, pi, f) ** 2 for f in f_class.members])  # (F, S, A)
        per_nu = np.einsum("fsa,nsa->fn", res2, occ)
        worst = max(worst, float(per_nu.max(axis=1).min()))
    return worst


def is_realizable(eps_f: float) -> bool:
    return eps_f <= REALIZABLE_EPS


def audit_weight_class(w_class: WeightClass, mu) -> float:
    """``C*_l2 = max_w ||w||_{2, mu}``."""
    mu = np.asarray(mu, dtype=float)
    if not np.any(np.all(w_class.members == 1.0, axis=(1, 2))):
        raise ValidationError("weight class is missing the all-ones member")
    norms = np.sqrt(np.einsum("wsa,sa->w", w_class.members**2, mu))
    return float(norms.max())


def audit_w_realizability(mdp: TabularMdp, target, mu, w_class: WeightClass, atol: float = MEMBERSHIP_ATOL) -> tuple[bool, float]:
    """Whether ``d^target / mu`` is (within ``atol`` in sup-norm) a member of ``w_class``."""
    w = importance_weights(mdp, target, mu)
    dist = np.abs(w_class.members - w[None]).max(axis=(1, 2))
    best = float(dist.min())
    return best <= atol, best


def stat_envelope(v_max: float, c_star: float, b_w: float, n_f: int, n_pi: int, n_w: int, n: int, delta: float = 0.05) -> float:
    """Order-of-magnitude statistical error envelope (constants set to one).

    ``n_pi`` is the audit-set cardinality, a reporting convention rather than
    the policy class the actor actually searches.
    """
    log_term = math.log(n_f * n_pi * n_w / delta)
    return v_max * c_star * math.sqrt(log_term / n) + v_max * b_w * log_term / n
