"""Command line: ``netinduce {solve,induce,stackelberg,adversary,bench}``.

Exit status 0 on success, 2 when the verdict is infeasible or none, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import FAMILIES, bench_suite, rows_to_csv, run_adversary, summarize
from .equilibrium import solve_epsilon_equilibrium, total_slack
from .scenario import METHODS, IncompatibleMethod, ScenarioError, load_scenario, run_method

EXIT_OK, EXIT_ERROR, EXIT_NONE = 0, 1, 2


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    eps = args.eps if args.eps is not None else float(sc.params["eps"])
    res = solve_epsilon_equilibrium(sc.game, sc.tolls, eps)
    _emit({
        "flow": res.flow.per_commodity.tolist(),
        "aggregate": res.flow.aggregate.tolist(),
        "slack": total_slack(sc.game, sc.tolls, res.flow),
        "eps_times_demand": eps * sc.game.total_demand,
        "iterations": res.iterations,
        "converged": res.converged,
    })
    return EXIT_OK if res.converged else EXIT_ERROR


def _report(res) -> int:
    _emit(res.summary())
    return EXIT_OK if res.ok else EXIT_NONE


def cmd_induce(args) -> int:
    sc = load_scenario(args.scenario)
    method = args.method or sc.method
    if method is None:
        raise IncompatibleMethod("no --method given and the scenario names none")
    return _report(run_method(sc, method, trace=args.trace))


def cmd_stackelberg(args) -> int:
    sc = load_scenario(args.scenario)
    if args.alpha is not None:
        sc.params["alpha"] = args.alpha
    return _report(run_method(sc, "stackelberg-sepa", trace=args.trace))


def cmd_adversary(args) -> int:
    methods = ["sepa", "ellipsoid", "linear1c"] if args.method == "all" else [args.method]
    out, ok = [], True
    for method in methods:
        q, consistent, verdict = run_adversary(args.m, method)
        ok &= consistent and q >= args.m
        out.append({"method": method, "m": args.m, "queries": q, "at_least_m": q >= args.m,
                    "replay_consistent": consistent, "verdict": verdict})
    _emit(out)
    return EXIT_OK if ok else EXIT_ERROR


def cmd_bench(args) -> int:
    rows = bench_suite(args.family, args.sizes, args.trials, args.seed, jobs=args.jobs)
    text = rows_to_csv(rows, deterministic=args.deterministic)
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    dest = sys.stderr if not args.out or args.out == "-" else sys.stdout
    print(f"# seed {args.seed}, family {args.family}", file=dest)
    print(f"# {'method':<16}{'m':>4}{'mean':>10}{'max':>7}{'bound':>12}", file=dest)
    for s in summarize(rows, args.family, args.seed):
        print(f"# {s['method']:<16}{s['m']:>4}{s['mean']:>10.1f}{s['max']:>7}{s['bound']:>12.1f}", file=dest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netinduce", description="Toll and Stackelberg induction of target flows from equilibrium queries.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="equilibrium of a scenario under its tolls")
    s.add_argument("scenario")
    s.add_argument("--eps", type=float, default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("induce", help="tolls inducing the scenario's target")
    s.add_argument("scenario")
    s.add_argument("--method", choices=[m for m in METHODS if m != "stackelberg-sepa"], default=None)
    s.add_argument("--trace", default=None, help="write the query log as CSV")
    s.set_defaults(func=cmd_induce)

    s = sub.add_parser("stackelberg", help="least-value Stackelberg flow inducing the target")
    s.add_argument("scenario")
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--trace", default=None)
    s.set_defaults(func=cmd_stackelberg)

    s = sub.add_parser("adversary", help="run induction against the adaptive m-link adversary")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--method", choices=["sepa", "ellipsoid", "linear1c", "all"], default="all")
    s.set_defaults(func=cmd_adversary)

    s = sub.add_parser("bench", help="query-count benchmark as CSV")
    s.add_argument("--family", choices=sorted(FAMILIES), required=True)
    s.add_argument("--sizes", type=int, nargs="*", default=[])
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--deterministic", action="store_true", help="zero the runtime column for byte-stable output")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, IncompatibleMethod, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
