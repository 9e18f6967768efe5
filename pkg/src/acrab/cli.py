"""Command-line entry point: ``acrab <subcommand> ...``.

Exit codes: 0 success, 1 validation or usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import experiments as ex
from .classes import audit_realizability_f, audit_w_realizability, audit_weight_class, concentrability_report, stat_envelope
from .data import OfflineDataset, sample_dataset
from .errors import AcrabError, ValidationError
from .instances import build_appendix_d_instance, build_example_27_instance, build_realizable_family
from .io import dumps_instance, load_instance, save_instance
from .mdp import j_value
from .solvers import RUNNERS, SolverConfig, run_algorithm, solve_best_response

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _eta(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("eta must be a positive number or 'auto'") from exc


def _family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-states", type=int, default=8)
    p.add_argument("--n-actions", type=int, default=2)
    p.add_argument("--instance-seed", type=int, default=None,
                   help="fix one instance; by default each seed draws its own")
    p.add_argument("--behavior-mix", type=float, default=0.0,
                   help="move the behaviour policy toward the optimal one")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acrab", description="Pessimistic actor-critic experiments on tabular MDPs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="emit an instance file")
    p.add_argument("--family", choices=("realizable", "two-arm", "l2-bandit"), default="realizable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-states", type=int, default=8)
    p.add_argument("--n-actions", type=int, default=2)
    p.add_argument("--n", type=int, default=1000, help="dataset size (two-arm)")
    p.add_argument("--beta", type=float, default=None, help="two-arm beta (default n^(2/3))")
    p.add_argument("--epsilon", type=float, default=0.1, help="l2-bandit epsilon")
    p.add_argument("--behavior-mix", type=float, default=0.0)
    p.add_argument("-o", "--out", default=None)

    p = sub.add_parser("audit", help="concentrability and realizability report")
    p.add_argument("instance")
    p.add_argument("--n", type=int, default=10000, help="n for the statistical envelope")
    p.add_argument("--delta", type=float, default=0.05)

    p = sub.add_parser("run", help="one run on an instance, with a trace CSV")
    p.add_argument("instance")
    p.add_argument("--algo", choices=sorted(RUNNERS), default="acrab")
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--eta", type=_eta, default="auto")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", default=None, help="read the dataset from CSV instead of sampling")
    p.add_argument("--exact-action-freq", action="store_true")
    p.add_argument("--best-response", action="store_true", help="solve over the audit set instead of running NPG")
    p.add_argument("--trace", default="trace.csv")

    p = sub.add_parser("counterexample", help="two-arm bandit reproduction report")
    p.add_argument("--n-grid", type=_int_list, default=[1000, 10000, 100000])
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--exact-action-freq", action="store_true")
    p.add_argument("--no-exact", action="store_true", help="skip the exact binomial expectation")
    p.add_argument("--out", default="counterexample.csv")
    p.add_argument("--cells", default=None, help="also write per-seed cells")

    p = sub.add_parser("rates", help="suboptimality versus n, with log-log slopes")
    p.add_argument("--family", choices=("realizable", "two-arm"), default="realizable")
    p.add_argument("--algos", default="acrab", help="comma-separated: " + ",".join(sorted(RUNNERS)))
    p.add_argument("--n-grid", type=_int_list, default=[1000, 10000, 100000])
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--eta", type=_eta, default=ex.RATE_ETA)
    p.add_argument("--beta", type=float, default=2.0, help="A-Crab beta; ATAC always uses n^(2/3)")
    p.add_argument("--exact-action-freq", action="store_true")
    _family_args(p)
    p.add_argument("--out", default="rates.csv")
    p.add_argument("--gnuplot", default=None, help="write a gnuplot script (and a means CSV beside it)")

    p = sub.add_parser("beta-sweep", help="J(mu) - J(output) across beta for A-Crab and its unweighted variant")
    p.add_argument("--beta-grid", type=_float_list, default=[0.0, 0.5, 2.0, 8.0, 32.0])
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--eta", type=_eta, default=ex.RATE_ETA)
    _family_args(p)
    p.add_argument("--out", default="beta_sweep.csv")
    return parser


# -- commands ------------------------------------------------------------------

def _cmd_gen(args) -> int:
    if args.family == "realizable":
        inst = build_realizable_family(args.n_states, args.n_actions, args.seed, behavior_mix=args.behavior_mix)
    elif args.family == "two-arm":
        beta = args.n ** ex.ATAC_BETA_EXPONENT if args.beta is None else args.beta
        inst = build_appendix_d_instance(args.n, beta)
    else:
        inst = build_example_27_instance(args.epsilon)
    if args.out:
        save_instance(inst, args.out)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dumps_instance(inst))
    return EXIT_OK


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6g}"


def _cmd_audit(args) -> int:
    inst = load_instance(args.instance)
    mu = inst.mu
    rep = concentrability_report(inst.mdp, inst.target, mu, inst.f_class)
    eps_f = audit_realizability_f(inst.mdp, inst.f_class, inst.audit)
    c_star = audit_weight_class(inst.w_class, mu)
    if rep.uncovered is None:
        w_ok, w_dist = audit_w_realizability(inst.mdp, inst.target, mu, inst.w_class)
    else:
        w_ok, w_dist = False, math.inf
    print(f"instance    {args.instance}")
    print(f"dims        S={inst.mdp.n_states} A={inst.mdp.n_actions} gamma={inst.mdp.discount:g} V_max={inst.mdp.v_max:g}")
    print(f"classes     |F|={len(inst.f_class)} |W|={len(inst.w_class)} |audit|={len(inst.audit)}")
    print(f"c_l2        {_fmt(rep.c_l2)}")
    print(f"c_linf      {_fmt(rep.c_linf)}")
    print(f"c_bellman   {_fmt(rep.c_bellman)}")
    if rep.uncovered is not None:
        print(f"uncovered   state={rep.uncovered[0]} action={rep.uncovered[1]}")
    print(f"eps_F       {eps_f:.3e} ({'realizable' if eps_f <= 1e-18 else 'approximate'})")
    print(f"w^target    {'in W' if w_ok else 'not in W'} (sup distance {w_dist:.3e})")
    print(f"C*_l2(W)    {c_star:.6g}")
    env = stat_envelope(inst.mdp.v_max, c_star, inst.w_class.b_w, len(inst.f_class), len(inst.audit),
                        len(inst.w_class), args.n, args.delta)
    print(f"eps_stat    {env:.4g} at n={args.n} (envelope (convention): |Pi| = audit size, constants 1)")
    return EXIT_OK


def _cmd_run(args) -> int:
    inst = load_instance(args.instance)
    mdp = inst.mdp
    if args.data:
        ds = OfflineDataset.from_csv(args.data, mdp.n_states, mdp.n_actions, mdp.discount, source=args.data)
    else:
        ds = sample_dataset(mdp, inst.behavior, args.n, args.seed, stream=args.n,
                            exact_action_freq=args.exact_action_freq, source=args.instance)
    cfg = SolverConfig(beta=args.beta, k_iters=args.k, eta=args.eta, regularizer_kind=RUNNERS[args.algo], seed=args.seed)
    w = inst.w_class if args.algo == "acrab" else None
    j_target = j_value(mdp, inst.target)
    if args.best_response:
        res = solve_best_response(ds, list(inst.audit), inst.f_class, w, cfg)
        j_out = j_value(mdp, inst.audit[res.choice])
        print(f"mode=best_response algo={args.algo} beta={args.beta:g} choice={res.choice} J(choice)={j_out:.10f}")
    else:
        rec = run_algorithm(args.algo, ds, inst.f_class, w, cfg)
        rec.to_csv(args.trace, mdp)
        j_out = rec.mixture_j(mdp)
        print(rec.summary_line(mdp))
        print(f"trace written to {args.trace}")
    print(f"J(target)-J(output)={j_target - j_out:.10f} J(behavior)-J(output)={j_value(mdp, inst.behavior) - j_out:.10f}")
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    rows, sweep = ex.counterexample_report(args.n_grid, range(args.seeds), args.exact_action_freq, exact=not args.no_exact)
    ex.write_report(rows, args.out)
    if args.cells:
        sweep.to_csv(args.cells)
    for r in rows:
        print(f"n={r['n']} delta={r['delta']:.4g} event_freq={r['event_freq']:.4f} "
              f"atac_pi2={r['atac_pi2_rate']:.4f} atac_pi2|event={r['atac_pi2_rate_given_event']:.4f} "
              f"atac_subopt={r['atac_mean_subopt']:.3e} atac_expected={r['atac_expected_subopt']:.3e} "
              f"acrab_pi1={r['acrab_pi1_rate']:.4f} acrab_subopt={r['acrab_mean_subopt']:.3e}")
    for algo, (slope, se) in sweep.slopes.items():
        print(f"slope {algo}: {slope:.4f} (se {se:.4f})")
    print(f"report written to {args.out}")
    return EXIT_OK


def _family(args, kind: str) -> ex.FamilySpec:
    return ex.FamilySpec(kind, args.n_states, args.n_actions, args.instance_seed,
                         getattr(args, "exact_action_freq", False), args.behavior_mix)


def _cmd_rates(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    bad = [a for a in algos if a not in RUNNERS]
    if bad:
        raise ValidationError(f"unknown algorithm(s) {bad}; choose from {sorted(RUNNERS)}")
    cfg = SolverConfig(beta=args.beta, k_iters=args.k, eta=args.eta)
    res = ex.run_rate_experiment(_family(args, args.family), algos, args.n_grid, range(args.seeds), cfg)
    res.to_csv(args.out)
    for algo in algos:
        means = " ".join(f"n={n}:{m:.3e}" for n, m in res.mean_subopt(algo).items())
        slope, se = res.slopes[algo]
        print(f"{algo}: {means} slope={slope:.4f} (se {se:.4f})")
    if args.gnuplot:
        means_path = str(Path(args.gnuplot).with_suffix(".means.csv"))
        ex.write_means_csv(res, algos, means_path)
        png = str(Path(args.gnuplot).with_suffix(".png"))
        Path(args.gnuplot).write_text(ex.gnuplot_script(means_path, png, algos, title="mean suboptimality"))
        print(f"gnuplot script written to {args.gnuplot}")
    print(f"cells written to {args.out}")
    return EXIT_OK


def _cmd_beta_sweep(args) -> int:
    cfg = SolverConfig(k_iters=args.k, eta=args.eta)
    res = ex.run_beta_sweep(_family(args, "realizable"), args.beta_grid, args.n, range(args.seeds), cfg)
    res.to_csv(args.out)
    for row in ex.beta_sweep_summary(res):
        print(f"{row['algo']:>9} beta={row['beta']:<6g} mean J(mu)-J(out)={row['mean']:+.3e} worst={row['worst']:+.3e}")
    print(f"cells written to {args.out}")
    return EXIT_OK


COMMANDS = {
    "gen": _cmd_gen,
    "audit": _cmd_audit,
    "run": _cmd_run,
    "counterexample": _cmd_counterexample,
    "rates": _cmd_rates,
    "beta-sweep": _cmd_beta_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AcrabError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
