"""Acceptance suite: every criterion at its stated tolerance, one PASS/FAIL line each.

Lines are collected through ``record_acceptance`` and printed in the
"acceptance criteria" section of the pytest summary. Slow criteria carry the
``slow`` marker (``pytest -m "not slow"`` skips them).
"""
import math
import time

import numpy as np
import pytest

from acrab.classes import AuditPolicySet, ValueClass, WeightClass, c_bellman, c_l2, c_linf
from acrab.data import make_rng, sample_dataset
from acrab.experiments import (
    RATE_ETA,
    FamilySpec,
    beta_sweep_summary,
    counterexample_report,
    event_branch_check,
    expected_counterexample_subopt,
    fit_loglog_slope,
    run_beta_sweep,
    run_concentration_suite,
    run_rate_experiment,
)
from acrab.instances import build_example_27_instance, build_realizable_family
from acrab.mdp import (
    TabularMdp,
    bellman_apply,
    compute_occupancy,
    compute_q,
    j_value,
    occupancy_balance_residual,
    rollout_j,
)
from acrab.objectives import e_pop, perf_decomposition
from acrab.solvers import SolverConfig, run_acrab, run_acrab_rpi

from conftest import random_mdp, random_policy, record_acceptance

N_GRID = (1_000, 10_000, 100_000)


def check(label, passed, detail):
    record_acceptance(label, bool(passed), detail)
    assert passed, f"{label}: {detail}"


# -- exact identities ----------------------------------------------------------------------

class TestExactIdentities:
    budget = {"elapsed": 0.0}

    @pytest.fixture(autouse=True)
    def _clock(self):
        t0 = time.perf_counter()
        yield
        self.budget["elapsed"] += time.perf_counter() - t0

    def test_decomposition_sums_to_value_gap(self):
        rng = make_rng(101)
        worst = 0.0
        for _ in range(200):
            S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            m = random_mdp(rng, S, A)
            mu = compute_occupancy(m, random_policy(rng, S, A))
            pi, ph = random_policy(rng, S, A), random_policy(rng, S, A)
            f = rng.uniform(0, m.v_max, (S, A))
            worst = max(worst, abs(perf_decomposition(m, mu, pi, ph, f).total - (j_value(m, pi) - j_value(m, ph))))
        check("identities/decomposition", worst < 1e-9, f"max |sum of terms - (J(pi) - J(pi_hat))| = {worst:.2e} over 200 instances (tol 1e-9)")

    def test_population_regularizer_vanishes_at_q(self):
        worst, checked = 0.0, 0
        for seed in range(100):
            inst = build_realizable_family(3, 2, seed, n_ladder=0)
            for pi in inst.audit:
                val, _ = e_pop(inst.mdp, inst.mu, pi, compute_q(inst.mdp, pi), inst.w_class)
                worst = max(worst, val)
                checked += 1
        check("identities/e_pop(pi, Q^pi) = 0", worst <= 1e-12, f"max = {worst:.2e} over {checked} audited policies on 100 instances (tol 1e-12)")

    def test_concentrability_ordering(self):
        rng = make_rng(102)
        violations, strict = 0, 0
        for _ in range(1000):
            S, A = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            m = random_mdp(rng, S, A)
            mu = compute_occupancy(m, random_policy(rng, S, A, floor=0.05))
            tgt = random_policy(rng, S, A)
            l2, linf = c_l2(m, tgt, mu)[0], c_linf(m, tgt, mu)
            tol = 1e-12 * linf
            violations += (l2**2 > linf + tol) or (l2 > linf + tol)
            strict += l2**2 < linf - 1e-9
        # indicator class: each member's Bellman error is c * 1{(s, a)}
        worst = 0.0
        for _ in range(20):
            S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
            m = random_mdp(rng, S, A)
            pi = random_policy(rng, S, A)
            mu = compute_occupancy(m, random_policy(rng, S, A, floor=0.1))
            q = compute_q(m, pi)
            members = []
            for s in range(S):
                for a in range(A):
                    e = np.zeros((S, A))
                    e[s, a] = 1.0
                    g = compute_q(TabularMdp(m.transition, e, m.discount, m.initial_dist), pi)
                    members.append(q + 0.1 * g)
            cb, _ = c_bellman(m, pi, mu, ValueClass(members, 1.1 * m.v_max))
            worst = max(worst, abs(cb - c_linf(m, pi, mu)))
        passed = violations == 0 and strict > 0 and worst < 1e-9
        check("identities/concentrability ordering", passed,
              f"{violations} violations of l2^2 <= linf, l2 <= linf on 1000 instances ({strict} strict); "
              f"indicator class |c_bellman - c_linf| max {worst:.2e} (tol 1e-9)")

    @pytest.mark.parametrize("eps", [0.1, 0.01])
    def test_l2_versus_linf_bandit(self, eps):
        inst = build_example_27_instance(eps)
        l2 = c_l2(inst.mdp, inst.target, inst.mu)[0]
        linf = c_linf(inst.mdp, inst.target, inst.mu)
        closed = math.sqrt((1 - eps) ** 2 / (1 - eps**2) + 1)
        passed = linf == pytest.approx(1 / eps, rel=1e-12) and l2 <= math.sqrt(2) and abs(l2 - closed) < 1e-12
        check(f"identities/l2 vs linf bandit eps={eps}", passed,
              f"c_linf = {linf!r} (1/eps = {1 / eps!r}), c_l2 = {l2:.12f}, |c_l2 - closed form| = {abs(l2 - closed):.1e}")

    def test_unweighted_variant_matches_ones_class(self):
        rng = make_rng(103)
        same = 0
        for _ in range(50):
            S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
            m = random_mdp(rng, S, A)
            ds = sample_dataset(m, random_policy(rng, S, A, floor=0.3), 300, seed=int(rng.integers(1 << 30)))
            F = ValueClass(rng.uniform(0, m.v_max, (8, S, A)), m.v_max)
            cfg = SolverConfig(beta=float(rng.uniform(0, 10)), k_iters=30, eta=float(rng.uniform(0.1, 5)))
            same += run_acrab_rpi(ds, F, cfg).same_trace(run_acrab(ds, F, WeightClass.ones(S, A), cfg))
        check("identities/A-Crab-RPI trace == A-Crab with W={1}", same == 50, f"{same}/50 bit-identical traces")

    def test_zz_runtime(self):
        elapsed = self.budget["elapsed"]
        check("identities/runtime", elapsed < 60, f"{elapsed:.1f} s (budget 60 s)")


# -- two-arm counterexample ----------------------------------------------------------------

@pytest.fixture(scope="module")
def counterexample():
    t0 = time.perf_counter()
    rows, sweep = counterexample_report(N_GRID, range(200))
    return {r["n"]: r for r in rows}, sweep, time.perf_counter() - t0


@pytest.mark.slow
class TestCounterexample:
    def test_event_seeds_pick_second_arm(self, counterexample):
        rows, sweep, _ = counterexample
        event = [r for r in sweep.select("atac") if r.cond_event == 1]
        wrong = [r for r in event if r.chose_idx != 1]
        enum = {n: event_branch_check(n) for n in N_GRID}
        enum_txt = "; ".join(f"n={n}: {len(b)}/{c} arm-2 counts keep arm 1" for n, (c, b) in enum.items())
        check("counterexample/ATAC picks arm 2 on event seeds", not wrong,
              f"{len(event) - len(wrong)}/{len(event)} event seeds; exhaustive event datasets: {enum_txt}")

    def test_event_frequency_floor(self, counterexample):
        rows, _, _ = counterexample
        freqs = {n: rows[n]["event_freq"] for n in N_GRID}
        check("counterexample/event frequency > 0.05", all(f > 0.05 for f in freqs.values()),
              ", ".join(f"n={n}: {f:.3f}" for n, f in freqs.items()))

    def test_atac_mean_is_gap_times_rate(self, counterexample):
        rows, _, _ = counterexample
        diffs = [abs(rows[n]["atac_mean_subopt"] - rows[n]["delta_times_pi2_rate"]) for n in N_GRID]
        check("counterexample/ATAC mean = Delta * choice rate", max(diffs) < 1e-12,
              ", ".join(f"n={n}: {rows[n]['atac_mean_subopt']:.3e} vs {rows[n]['delta_times_pi2_rate']:.3e}" for n in N_GRID))

    def test_atac_slope(self, counterexample):
        rows, sweep, _ = counterexample
        slope, se = sweep.slopes["atac"]
        exact = fit_loglog_slope([(n, rows[n]["atac_expected_subopt"]) for n in N_GRID])[0]
        means = ", ".join(f"{rows[n]['atac_mean_subopt']:.2e}" for n in N_GRID)
        check("counterexample/ATAC slope in [-0.43, -0.23]", -0.43 <= slope <= -0.23,
              f"200-seed slope {slope:.3f} (means {means}); exact-expectation slope {exact:.3f} (diagnostic)")

    def test_acrab_keeps_first_arm(self, counterexample):
        rows, _, _ = counterexample
        rate = rows[100_000]["acrab_pi1_rate"]
        check("counterexample/A-Crab picks arm 1 on >= 95% at n=1e5", rate >= 0.95, f"rate {rate:.3f}")

    def test_acrab_slope(self, counterexample):
        rows, sweep, _ = counterexample
        slope, _ = sweep.slopes["acrab"]
        exact = [expected_counterexample_subopt(n, "acrab") for n in N_GRID]
        check("counterexample/A-Crab slope in [-0.65, -0.35]", -0.65 <= slope <= -0.35,
              f"slope {slope:.3f}; mean suboptimality {[rows[n]['acrab_mean_subopt'] for n in N_GRID]}, exact expectation {exact}")

    def test_runtime(self, counterexample):
        elapsed = counterexample[2]
        check("counterexample/runtime", elapsed <= 600, f"{elapsed:.1f} s (budget 600 s)")


# -- rates, robustness, concentration --------------------------------------------------------

@pytest.mark.slow
def test_realizable_rate():
    t0 = time.perf_counter()
    cfg = SolverConfig(beta=2.0, k_iters=500, eta=RATE_ETA)
    res = run_rate_experiment(FamilySpec(), ["acrab"], N_GRID, range(50), cfg)
    elapsed = time.perf_counter() - t0
    slope, se = res.slopes["acrab"]
    means = ", ".join(f"n={n}: {m:.3e}" for n, m in res.mean_subopt("acrab").items())
    check("rate/A-Crab slope in [-0.65, -0.35]", -0.65 <= slope <= -0.35 and elapsed <= 1800,
          f"slope {slope:.3f} (se {se:.3f}); {means}; {elapsed:.0f} s (budget 1800 s)")


@pytest.mark.slow
def test_robust_policy_improvement():
    t0 = time.perf_counter()
    fam = FamilySpec(behavior_mix=0.9)
    res = run_beta_sweep(fam, [0.0, 0.5, 2.0, 8.0, 32.0], 10_000, range(50), SolverConfig(k_iters=500, eta=RATE_ETA))
    elapsed = time.perf_counter() - t0
    v_max = fam.instance(10_000, 0).mdp.v_max
    summary = beta_sweep_summary(res)
    worst_mean = max(s["mean"] for s in summary)
    worst_seed = max(s["worst"] for s in summary)
    passed = worst_mean <= 0.02 * v_max and worst_seed <= 0.05 * v_max and elapsed <= 900
    check("robust improvement/J(mu) - J(out) within 0.02 V_max (mean), 0.05 V_max (worst)", passed,
          f"max mean {worst_mean:+.4f}, max worst {worst_seed:+.4f} over 5 betas x 2 algorithms "
          f"(thresholds {0.02 * v_max:.3f}, {0.05 * v_max:.3f}); {elapsed:.0f} s (budget 900 s)")


@pytest.mark.slow
def test_concentration_suites():
    t0 = time.perf_counter()
    means, slopes = run_concentration_suite(FamilySpec(), (100, 1_000, 10_000), range(50))
    elapsed = time.perf_counter() - t0
    ok = all(-0.65 <= s <= -0.35 for s, _ in slopes.values()) and elapsed <= 600
    check("concentration/sup-gap slopes in [-0.65, -0.35]", ok,
          ", ".join(f"{k} {s:.3f}" for k, (s, _) in slopes.items()) + f"; {elapsed:.0f} s (budget 600 s)")


# -- oracle cross-checks -------------------------------------------------------------------------

def test_oracle_cross_checks():
    t0 = time.perf_counter()
    rng = make_rng(104)
    worst_occ, worst_q = 0.0, 0.0
    for _ in range(200):
        S, A = int(rng.integers(1, 8)), int(rng.integers(1, 5))
        m = random_mdp(rng, S, A)
        pi = random_policy(rng, S, A)
        d = compute_occupancy(m, pi)
        worst_occ = max(worst_occ, occupancy_balance_residual(m, d), abs(d.sum() - 1.0))
        q = compute_q(m, pi)
        worst_q = max(worst_q, float(np.abs(q - bellman_apply(m, pi, q)).max()))
    agree = 0
    zs = []
    for i in range(10):
        S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        m = random_mdp(rng, S, A, discount=float(rng.uniform(0.3, 0.9)))
        pi = random_policy(rng, S, A)
        est = rollout_j(m, pi, 200_000, make_rng(104, i + 1))
        z = abs(est.mean - j_value(m, pi)) / est.stderr
        zs.append(z)
        agree += abs(est.mean - j_value(m, pi)) <= 3 * est.stderr + est.truncation_bias_bound
    elapsed = time.perf_counter() - t0
    passed = worst_occ < 1e-10 and worst_q < 1e-10 and agree == 10 and elapsed < 120
    check("oracle/linear solves and Monte Carlo", passed,
          f"occupancy residual {worst_occ:.1e}, Q residual {worst_q:.1e} (tol 1e-10); "
          f"MC within 3 SE on {agree}/10 (max |z| {max(zs):.2f}); {elapsed:.0f} s (budget 120 s)")
