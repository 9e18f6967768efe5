"""Experiment drivers: rate sweeps, beta sweeps, the counterexample report and
concentration suites.

Every sweep is a list of independent cells. A cell's dataset depends only on
``(family, n, seed)`` through ``sample_dataset(..., seed, stream=n)``, so two
algorithms in the same sweep see identical data, and any CSV row can be
recomputed on its own from the recorded family, seed and config.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .classes import WeightClass
from .data import OfflineDataset, sample_dataset
from .errors import AcrabError, ValidationError
from .instances import InstanceFile, two_arm_gap, build_appendix_d_instance, build_realizable_family
from .mdp import j_value
from .objectives import (
    RegularizerKind,
    l_emp_batch,
    l_pop,
    weighted_bellman_pop,
    weighted_td_emp,
)
from .solvers import SolverConfig, run_algorithm, solve_best_response

CSV_HEADER = ("family", "algo", "beta", "n", "seed", "subopt", "chose_idx", "cond_event", "runtime_ms")
ATAC_BETA_EXPONENT = 2.0 / 3.0
# NPG step for rate sweeps on the realizable family: the transient
# ln|A| / (eta K) must sit well below the statistical error at the largest n,
# which the 'auto' step (a worst-case tuning) does not achieve at K = 500.
RATE_ETA = 20.0


class ExperimentError(AcrabError):
    """A sweep cell failed; the message names the cell."""


# -- slope fits ------------------------------------------------------------------

def fit_loglog_slope(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of ``log value`` on ``log n`` and its standard error."""
    pts = list(points)
    if len(pts) < 3:
        raise ValidationError("slope fit needs at least 3 points")
    n = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    if np.any(n <= 0) or np.any(v <= 0):
        raise ValidationError("slope fit needs positive n and values")
    fit = stats.linregress(np.log(n), np.log(v))
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return float(fit.slope), stderr


# -- families ----------------------------------------------------------------------

@dataclass(frozen=True)
class FamilySpec:
    """Picklable description of how a cell gets its instance.

    ``kind`` is ``"two-arm"`` (a two-arm bandit rebuilt for every ``n``
    with ``beta = n^(2/3)``; programs solved by best response over the two
    arms) or ``"realizable"`` (random planted-gap MDPs; NPG actor). For the
    realizable kind, ``instance_seed=None`` draws a fresh instance per cell
    seed, so averages are over the family rather than one member.
    """

    kind: str = "realizable"
    n_states: int = 8
    n_actions: int = 2
    instance_seed: int | None = None
    exact_action_freq: bool = False
    behavior_mix: float = 0.0

    def __post_init__(self):
        if self.kind not in ("two-arm", "realizable"):
            raise ValidationError(f"unknown family {self.kind!r}; choose two-arm or realizable")

    @property
    def label(self) -> str:
        if self.kind == "two-arm":
            return "two-arm" + ("-exact" if self.exact_action_freq else "")
        base = f"realizable-{self.n_states}x{self.n_actions}"
        if self.behavior_mix:
            base += f"-mix{self.behavior_mix:g}"
        return base if self.instance_seed is None else f"{base}-s{self.instance_seed}"

    @property
    def actor(self) -> str:
        return "best_response" if self.kind == "two-arm" else "npg"

    def instance(self, n: int, seed: int = 0) -> InstanceFile:
        if self.kind == "two-arm":
            return _two_arm_cached(int(n))
        iseed = int(seed) if self.instance_seed is None else int(self.instance_seed)
        return _realizable_cached(self.n_states, self.n_actions, iseed, float(self.behavior_mix))


@lru_cache(maxsize=32)
def _two_arm_cached(n: int) -> InstanceFile:
    return build_appendix_d_instance(n, n**ATAC_BETA_EXPONENT)


@lru_cache(maxsize=256)
def _realizable_cached(n_states: int, n_actions: int, seed: int, behavior_mix: float = 0.0) -> InstanceFile:
    return build_realizable_family(n_states, n_actions, seed, behavior_mix=behavior_mix)


def algo_beta(algo: str, n: int, config: SolverConfig) -> float:
    """ATAC uses ``n^(2/3)``; the A-Crab variants keep ``config.beta``."""
    return float(n) ** ATAC_BETA_EXPONENT if algo == "atac" else float(config.beta)


def counterexample_event(dataset: OfflineDataset, delta: float) -> bool:
    """``r_hat(a2) >= 1/2 + 2 Delta`` on the two-arm bandit (False if arm 2 is unseen)."""
    arm2 = dataset.a == 1
    if not arm2.any():
        return False
    return bool(dataset.r[arm2].mean() >= 0.5 + 2.0 * delta)


# -- cells ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    family: FamilySpec
    algo: str
    n: int
    seed: int
    config: SolverConfig
    w_ones: bool = False      # run A-Crab with W = {all-ones} instead of the instance class
    baseline: str = "target"  # "target": J(pi*) - J(out); "behavior": J(mu) - J(out)

    @property
    def cell_id(self) -> str:
        return f"{self.family.label}/{self.algo}/beta={self.config.beta!r}/n={self.n}/seed={self.seed}"


@dataclass(frozen=True)
class CellResult:
    family: str
    algo: str
    beta: float
    n: int
    seed: int
    subopt: float
    chose_idx: int
    cond_event: int      # 1/0 for the counterexample event, -1 when not applicable
    runtime_ms: float

    def row(self) -> list[str]:
        return [self.family, self.algo, repr(self.beta), str(self.n), str(self.seed),
                repr(self.subopt), str(self.chose_idx), str(self.cond_event), f"{self.runtime_ms:.3f}"]


def cell_dataset(family: FamilySpec, n: int, seed: int) -> OfflineDataset:
    inst = family.instance(n, seed)
    return sample_dataset(inst.mdp, inst.behavior, n, seed, stream=n,
                          exact_action_freq=family.exact_action_freq, source=family.label)


def run_cell(cell: Cell) -> CellResult:
    t0 = time.perf_counter()
    fam = cell.family
    inst = fam.instance(cell.n, cell.seed)
    ds = cell_dataset(fam, cell.n, cell.seed)
    cfg = cell.config
    w_class = WeightClass.ones(inst.mdp.n_states, inst.mdp.n_actions) if cell.w_ones else inst.w_class
    ref = inst.target if cell.baseline == "target" else inst.behavior
    j_ref = j_value(inst.mdp, ref)
    cond = -1
    if fam.actor == "best_response":
        kind = {"acrab": RegularizerKind.WEIGHTED_AVG_BELLMAN, "acrab-rpi": RegularizerKind.RPI_AVG_BELLMAN,
                "atac": RegularizerKind.ATAC_SQUARED}[cell.algo]
        cfg = replace(cfg, regularizer_kind=kind)
        res = solve_best_response(ds, list(inst.audit), inst.f_class,
                                  w_class if kind is RegularizerKind.WEIGHTED_AVG_BELLMAN else None, cfg)
        chose = res.choice
        subopt = j_ref - j_value(inst.mdp, inst.audit[chose])
        cond = int(counterexample_event(ds, two_arm_gap(cell.n, cell.n**ATAC_BETA_EXPONENT)))
    else:
        rec = run_algorithm(cell.algo, ds, inst.f_class, w_class, cfg)
        chose = -1
        subopt = j_ref - rec.mixture_j(inst.mdp)
    ms = (time.perf_counter() - t0) * 1e3
    return CellResult(fam.label, cell.algo, float(cfg.beta), cell.n, cell.seed, float(subopt), int(chose), cond, ms)


def _guarded(cell: Cell) -> CellResult:
    try:
        return run_cell(cell)
    except Exception as exc:  # noqa: BLE001 - re-raised with the cell id
        raise ExperimentError(f"cell {cell.cell_id} failed: {type(exc).__name__}: {exc}") from exc


def worker_count() -> int:
    env = os.environ.get("ACRAB_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValidationError(f"ACRAB_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValidationError("ACRAB_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


def run_cells(cells: Sequence[Cell], workers: int | None = None) -> list[CellResult]:
    """Run cells on a process pool; results come back in input order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [_guarded(c) for c in cells]
    chunk = max(1, len(cells) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_guarded, cells, chunksize=chunk))


# -- sweep results ---------------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list[CellResult]
    slopes: dict[str, tuple[float, float]] = field(default_factory=dict)

    def select(self, algo: str | None = None, beta: float | None = None, n: int | None = None) -> list[CellResult]:
        return [r for r in self.rows
                if (algo is None or r.algo == algo)
                and (beta is None or r.beta == beta)
                and (n is None or r.n == n)]

    def mean_subopt(self, algo: str) -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for r in self.select(algo):
            out.setdefault(r.n, []).append(r.subopt)
        return {n: float(np.mean(v)) for n, v in sorted(out.items())}

    def fit(self, algo: str) -> tuple[float, float]:
        """Slope of mean suboptimality on ``n``; ``nan`` when a mean is not positive."""
        means = self.mean_subopt(algo)
        if any(v <= 0 for v in means.values()):
            return math.nan, math.nan
        return fit_loglog_slope(list(means.items()))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow(r.row())

    @staticmethod
    def read_csv(path: str | Path) -> list[dict[str, str]]:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))


def _check_grid(n_grid: Sequence[int]) -> list[int]:
    grid = sorted(int(n) for n in n_grid)
    if len(grid) < 3 or grid[-1] < 100 * grid[0]:
        raise ValidationError("n_grid needs at least 3 points spanning at least 2 decades")
    return grid


def run_rate_experiment(
    family: FamilySpec,
    algorithms: Sequence[str],
    n_grid: Sequence[int],
    seeds: Sequence[int],
    config: SolverConfig,
    workers: int | None = None,
) -> SweepResult:
    """Suboptimality ``J(pi*) - J(output)`` on every (algo, n, seed) cell, plus slope fits."""
    grid = _check_grid(n_grid)
    cells = []
    for algo in algorithms:
        for n in grid:
            cfg = replace(config, beta=algo_beta(algo, n, config))
            cells += [Cell(family, algo, n, int(s), cfg) for s in seeds]
    result = SweepResult(run_cells(cells, workers))
    result.slopes = {algo: result.fit(algo) for algo in algorithms}
    return result


def run_beta_sweep(
    family: FamilySpec,
    beta_grid: Sequence[float],
    n: int,
    seeds: Sequence[int],
    config: SolverConfig,
    workers: int | None = None,
) -> SweepResult:
    """``J(mu) - J(output)`` for A-Crab and A-Crab-RPI at every beta; ``subopt`` is measured against the behaviour policy."""
    if family.kind != "realizable":
        raise ValidationError("beta sweep runs on a realizable family")
    cells = []
    for beta in beta_grid:
        cfg = replace(config, beta=float(beta))
        for algo in ("acrab", "acrab-rpi"):
            cells += [Cell(family, algo, int(n), int(s), cfg, baseline="behavior") for s in seeds]
    return SweepResult(run_cells(cells, workers))


def beta_sweep_summary(result: SweepResult) -> list[dict]:
    """Per (algo, beta): mean and worst ``J(mu) - J(output)``."""
    out = []
    for algo in ("acrab", "acrab-rpi"):
        for beta in sorted({r.beta for r in result.rows}):
            vals = [r.subopt for r in result.select(algo, beta)]
            if vals:
                out.append({"algo": algo, "beta": beta, "mean": float(np.mean(vals)), "worst": float(np.max(vals)), "seeds": len(vals)})
    return out


# -- counterexample report --------------------------------------------------------------

REPORT_COLUMNS = (
    "n", "delta", "seeds", "event_freq", "atac_pi2_rate", "atac_pi2_rate_given_event",
    "atac_mean_subopt", "delta_times_pi2_rate", "atac_expected_subopt", "acrab_pi1_rate",
    "acrab_mean_subopt", "acrab_expected_subopt",
)


def _bandit_dataset(n1: int, n2: int, k: int, delta: float) -> OfflineDataset:
    """Two-arm dataset with ``n1`` pulls of arm 1 and ``k`` successes in ``n2`` pulls of arm 2."""
    a = np.concatenate([np.zeros(n1, dtype=np.int64), np.ones(n2, dtype=np.int64)])
    r = np.concatenate([np.full(n1, 0.5 + delta), np.ones(k), np.zeros(n2 - k)])
    zeros = np.zeros(n1 + n2, dtype=np.int64)
    return OfflineDataset(zeros, a, r, zeros, n_states=1, n_actions=2, discount=0.0)


def _picks_second_arm(inst: InstanceFile, algo: str, n1: int, n2: int, k: int, delta: float, beta: float) -> bool:
    ds = _bandit_dataset(n1, n2, k, delta)
    kind = RegularizerKind.ATAC_SQUARED if algo == "atac" else RegularizerKind.WEIGHTED_AVG_BELLMAN
    cfg = SolverConfig(beta=beta, regularizer_kind=kind)
    w = inst.w_class if kind is RegularizerKind.WEIGHTED_AVG_BELLMAN else None
    return solve_best_response(ds, list(inst.audit), inst.f_class, w, cfg).choice == 1


def _switch_point(picks, n2: int, guess: float | None) -> int:
    """Smallest ``k`` in ``[0, n2]`` with ``picks(k)``, given ``picks(n2)`` and monotonicity.

    Gallops outward from ``guess * n2`` before bisecting.
    """
    lo, hi = -1, n2                     # invariant: picks(hi); lo = -1 or not picks(lo)
    if guess is not None:
        k = min(max(int(round(guess * n2)), 0), n2)
        step = 1
        if picks(k):
            hi = k
            while hi - step > lo and picks(hi - step):
                hi -= step
                step *= 2
            lo = max(lo, hi - step)
        else:
            lo = k
            while lo + step < hi and not picks(lo + step):
                lo += step
                step *= 2
            hi = min(hi, lo + step)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if picks(mid):
            hi = mid
        else:
            lo = mid
    return hi


def expected_counterexample_subopt(n: int, algo: str, beta: float | None = None, exact_action_freq: bool = False,
                                   tail: float = 1e-12) -> float:
    """Exact ``E[J(pi1) - J(chosen)]`` for the two-arm bandit under i.i.d. sampling.

    Enumerates arm-2 counts ``n2 ~ Bin(n, mu2)`` and successes ``k ~ Bin(n2, 1/2)``
    (dropping total mass below ``tail``). For each ``n2`` the choice is monotone
    in ``k``, so the switching threshold is found by search.
    """
    inst = _two_arm_cached(int(n))
    delta = two_arm_gap(n, n**ATAC_BETA_EXPONENT)
    beta = algo_beta(algo, n, SolverConfig()) if beta is None else beta
    mu2 = float(inst.behavior[0, 1])
    if exact_action_freq:
        n2_values = np.array([int(round(n * mu2))])
        n2_probs = np.ones(1)
    else:
        lo, hi = stats.binom.ppf([tail / 2, 1 - tail / 2], n, mu2).astype(int)
        n2_values = np.arange(lo, hi + 1)
        n2_probs = stats.binom.pmf(n2_values, n, mu2)
    total = 0.0
    guess = None
    for n2, p2 in zip(n2_values, n2_probs):
        n2 = int(n2)
        if n2 == 0:
            continue
        picks = lambda k: _picks_second_arm(inst, algo, n - n2, n2, k, delta, beta)
        if not picks(n2):
            continue
        threshold = _switch_point(picks, n2, guess)
        guess = threshold / n2
        total += p2 * stats.binom.sf(threshold - 1, n2, 0.5)
    return float(delta * total)


def event_branch_check(n: int, exact_action_freq: bool = False, tail: float = 1e-12) -> tuple[int, list[int]]:
    """Check ATAC's choice on every dataset in the conditioning event.

    For each plausible arm-2 count ``n2`` the least success count with
    ``r_hat(a2) >= 1/2 + 2 Delta`` is solved; since the choice is monotone in
    successes this covers every event dataset. Returns the number of ``n2``
    values checked and those where ATAC keeps arm 1.
    """
    inst = _two_arm_cached(int(n))
    beta = float(n) ** ATAC_BETA_EXPONENT
    delta = two_arm_gap(n, beta)
    mu2 = float(inst.behavior[0, 1])
    if exact_action_freq:
        n2_values = [int(round(n * mu2))]
    else:
        lo, hi = stats.binom.ppf([tail / 2, 1 - tail / 2], n, mu2).astype(int)
        n2_values = range(max(lo, 1), hi + 1)
    bad = []
    for n2 in n2_values:
        k = math.ceil(n2 * (0.5 + 2.0 * delta))
        while k > 0 and (k - 1) / n2 >= 0.5 + 2.0 * delta:
            k -= 1
        if k <= n2 and not _picks_second_arm(inst, "atac", n - n2, n2, k, delta, beta):
            bad.append(n2)
    return len(n2_values), bad


def counterexample_report(
    n_grid: Sequence[int],
    seeds: Sequence[int],
    exact_action_freq: bool = False,
    exact: bool = True,
    workers: int | None = None,
) -> tuple[list[dict], SweepResult]:
    """Per-``n`` summary of the two-arm reproduction plus the raw cells.

    ATAC runs with ``beta = n^(2/3)``, A-Crab with ``beta = 2`` on the same
    datasets; both programs are solved by best response over the two arms.
    """
    fam = FamilySpec("two-arm", exact_action_freq=exact_action_freq)
    sweep = run_rate_experiment(fam, ("atac", "acrab"), n_grid, seeds, SolverConfig(beta=2.0), workers)
    rows = []
    for n in sorted({r.n for r in sweep.rows}):
        atac, acrab = sweep.select("atac", n=n), sweep.select("acrab", n=n)
        delta = two_arm_gap(n, n**ATAC_BETA_EXPONENT)
        event = [r for r in atac if r.cond_event == 1]
        pi2_rate = float(np.mean([r.chose_idx == 1 for r in atac]))
        rows.append({
            "n": n,
            "delta": delta,
            "seeds": len(atac),
            "event_freq": len(event) / len(atac),
            "atac_pi2_rate": pi2_rate,
            "atac_pi2_rate_given_event": float(np.mean([r.chose_idx == 1 for r in event])) if event else math.nan,
            "atac_mean_subopt": float(np.mean([r.subopt for r in atac])),
            "delta_times_pi2_rate": delta * pi2_rate,
            "atac_expected_subopt": expected_counterexample_subopt(n, "atac", exact_action_freq=exact_action_freq) if exact else math.nan,
            "acrab_pi1_rate": float(np.mean([r.chose_idx == 0 for r in acrab])),
            "acrab_mean_subopt": float(np.mean([r.subopt for r in acrab])),
            "acrab_expected_subopt": expected_counterexample_subopt(n, "acrab", exact_action_freq=exact_action_freq) if exact else math.nan,
        })
    return rows, sweep


def write_report(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# -- concentration suites ------------------------------------------------------------------

SUITES = ("actor", "weighted_td", "regularizer")


def concentration_gaps(inst: InstanceFile, dataset: OfflineDataset) -> dict[str, float]:
    """Sup over the (f, pi, w) grid of population-versus-empirical gaps.

    ``actor``: ``|L_mu - L_D|``; ``weighted_td``: signed weighted average TD
    error, per ``w``; ``regularizer``: ``|E_mu - E_D|`` after the max over ``w``.
    Policies are the audit set.
    """
    mu = inst.mu
    fs = inst.f_class.members
    ws = inst.w_class.members
    out = dict.fromkeys(SUITES, 0.0)
    for pi in inst.audit:
        l_d = l_emp_batch(dataset, pi, fs)
        l_m = np.array([l_pop(mu, pi, f) for f in fs])
        out["actor"] = max(out["actor"], float(np.abs(l_d - l_m).max()))
        inner_d = weighted_td_emp(dataset, pi, fs, ws)
        inner_m = weighted_bellman_pop(inst.mdp, mu, pi, fs, ws)
        out["weighted_td"] = max(out["weighted_td"], float(np.abs(inner_d - inner_m).max()))
        e_d = np.abs(inner_d).max(axis=1)
        e_m = np.abs(inner_m).max(axis=1)
        out["regularizer"] = max(out["regularizer"], float(np.abs(e_d - e_m).max()))
    return out


def _concentration_cell(args) -> tuple[int, int, dict[str, float]]:
    family, n, seed = args
    inst = family.instance(n, seed)
    return n, seed, concentration_gaps(inst, cell_dataset(family, n, seed))


def run_concentration_suite(
    family: FamilySpec,
    n_grid: Sequence[int],
    seeds: Sequence[int],
    workers: int | None = None,
) -> tuple[dict[str, dict[int, float]], dict[str, tuple[float, float]]]:
    """Mean sup-gap per suite and ``n``, and the fitted slope per suite."""
    grid = sorted(int(n) for n in n_grid)
    jobs = [(family, n, int(s)) for n in grid for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        results = [_concentration_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_concentration_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    means: dict[str, dict[int, float]] = {k: {} for k in SUITES}
    for suite in SUITES:
        for n in grid:
            means[suite][n] = float(np.mean([g[suite] for nn, _, g in results if nn == n]))
    slopes = {suite: fit_loglog_slope(list(means[suite].items())) for suite in SUITES}
    return means, slopes


# -- plotting -------------------------------------------------------------------------------

def gnuplot_script(csv_path: str, out_png: str, algos: Sequence[str], title: str = "") -> str:
    """Text gnuplot script plotting mean suboptimality against n on log-log axes.

    Expects a per-(algo, n) means file with columns ``algo,n,mean`` next to the sweep CSV.
    """
    lines = [
        "set datafile separator ','",
        "set logscale xy",
        "set key top right",
        "set xlabel 'N'",
        "set ylabel 'mean suboptimality'",
        f"set title '{title}'" if title else "unset title",
        "set terminal pngcairo size 800,600",
        f"set output '{out_png}'",
    ]
    plots = [f"'{csv_path}' using 2:(strcol(1) eq '{a}' ? $3 : 1/0) with linespoints title '{a}'" for a in algos]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def write_means_csv(result: SweepResult, algos: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "n", "mean"])
        for algo in algos:
            for n, m in result.mean_subopt(algo).items():
                writer.writerow([algo, n, repr(m)])
