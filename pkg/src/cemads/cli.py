"""Command-line interface: ``cemads {solve,ce,bench,profile,list-problems}``."""
from __future__ import annotations

import argparse
import logging
import shlex
import sys
from typing import List, Optional

import numpy as np

from . import bench, problems
from .blackbox import BoundBox, ConfigurationError, Evaluation, UsageError, spawn_external
from .cache import Cache
from .ce import CeParams, CeSearch, ce_optimize
from .mads import MadsConfig, solve


def _g(v: float) -> str:
    return f"{v:.6g}"


def _vec(x) -> str:
    return " ".join(_g(float(v)) for v in x)


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _add_problem_args(sp: argparse.ArgumentParser) -> None:
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", help="builtin problem name (see list-problems)")
    src.add_argument("--external", metavar="CMD", help="external blackbox command; {input} is replaced by the input file")
    sp.add_argument("--n", type=int, help="dimension of an external problem")
    sp.add_argument("--m", type=int, default=0, help="constraint count of an external problem")
    sp.add_argument("--lower", help="lower bounds, comma separated (external problems)")
    sp.add_argument("--upper", help="upper bounds, comma separated (external problems)")
    sp.add_argument("--x0", help="starting point, comma separated")
    sp.add_argument("--budget", type=int, help="evaluation budget (default 1000(n+1))")
    sp.add_argument("--seed", type=int, default=0)


def _add_ce_args(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--n-e", type=int, default=4, help="elite count")
    sp.add_argument("--n-s", type=int, help="sample size (default 2n)")
    sp.add_argument("--alpha", type=float, default=0.7, help="smoothing weight")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cemads", description="Derivative-free optimization with MADS and a cross-entropy search step.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run CE-MADS (or plain MADS) on one problem")
    _add_problem_args(sp)
    _add_ce_args(sp)
    sp.add_argument("--stall-limit", type=int, default=10)
    sp.add_argument("--no-ce", action="store_true", help="disable the CE search step")
    sp.add_argument("--workers", type=int, default=1, help="parallel evaluations per batch")
    sp.add_argument("--log", metavar="PATH", help="write the run history as JSON lines")
    sp.add_argument("--cache", metavar="PATH", help="write every evaluated point as CSV")

    sp = sub.add_parser("ce", help="run the standalone cross-entropy optimizer")
    _add_problem_args(sp)
    _add_ce_args(sp)
    sp.add_argument("--sigma0", type=float, default=1.0, help="initial standard deviation")
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--trace", metavar="PATH", help="write per-iteration mu, sigma, gamma as CSV")

    sp = sub.add_parser("bench", help="run a benchmark campaign")
    sp.add_argument("--config", required=True, help="campaign description (INI)")
    sp.add_argument("--out", help="history directory (overrides the config)")
    sp.add_argument("--workers", type=int, help="parallel runs (overrides the config)")
    sp.add_argument("--profile", metavar="PATH", help="also write data profiles as CSV")

    sp = sub.add_parser("profile", help="compute data profiles from stored histories")
    sp.add_argument("--histories", required=True, help="history directory")
    sp.add_argument("--tau", type=float, action="append", help="tolerance, repeatable (default 1e-3)")
    sp.add_argument("--out", help="CSV path (default stdout)")

    sub.add_parser("list-problems", help="print the problem catalog")
    return ap


def _problem_and_start(args):
    if args.problem is not None:
        try:
            spec = problems.get(args.problem)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        p = spec.make()
        x0 = spec.x0
    else:
        if args.n is None:
            raise UsageError("--external needs --n")
        lower = _floats(args.lower) if args.lower else [-np.inf] * args.n
        upper = _floats(args.upper) if args.upper else [np.inf] * args.n
        bounds = BoundBox(lower, upper)
        p = spawn_external(shlex.split(args.external), n=args.n, m=args.m, bounds=bounds)
        x0 = None
    if args.x0 is not None:
        x0 = np.array(_floats(args.x0))
    if x0 is None:
        raise UsageError("--x0 is required for external problems")
    if x0.shape != (p.n,):
        raise UsageError(f"--x0 has {x0.size} values, expected {p.n}")
    budget = args.budget if args.budget is not None else bench.budget_for(bench.DEFAULT_BUDGET_RULE, p.n)
    return p, x0, budget


def _ce_params(args, **extra) -> CeParams:
    params = CeParams(n_s=args.n_s, n_e=args.n_e, alpha=args.alpha, **extra)
    params.validate()
    return params


def cmd_solve(args) -> int:
    p, x0, budget = _problem_and_start(args)
    searches = [] if args.no_ce else [CeSearch(_ce_params(args, stall_limit=args.stall_limit))]
    if args.workers < 1:
        raise UsageError("--workers must be positive")
    hist, run_cache = _solve_with_cache(p, x0, MadsConfig(budget, args.seed, searches, workers=args.workers))
    hist.meta["algorithm"] = "MADS" if args.no_ce else "CE-MADS"
    if args.log:
        hist.save(args.log)
    if args.cache:
        run_cache.dump_csv(args.cache)
    best = hist.best
    print(f"problem {p.name}")
    print(f"x {_vec(best.x)}")
    print(f"f {_g(best.f)}")
    print(f"h {_g(best.h)}")
    print(f"evaluations {len(hist)}")
    print(f"stop {hist.stop_reason}")
    return 0


def _solve_with_cache(p, x0, cfg):
    """Run :func:`solve` and rebuild the cache from the history for CSV export."""
    hist = solve(p, x0, cfg)
    cache = Cache()
    for r in hist.records:
        cache.insert(Evaluation(r.x, r.f, r.h, np.zeros(0), r.status))
    return hist, cache


def cmd_ce(args) -> int:
    p, x0, budget = _problem_and_start(args)
    rng = np.random.default_rng(args.seed)
    res = ce_optimize(p, _ce_params(args), x0, args.sigma0, rng, budget, args.max_iter)
    if args.trace:
        res.write_trace(args.trace)
    print(f"problem {p.name}")
    print(f"x {_vec(res.best.x)}")
    print(f"f {_g(res.best.f)}")
    print(f"h {_g(res.best.h)}")
    print(f"iterations {len(res.trace)}")
    print(f"evaluations {res.evals}")
    if res.trace:
        print(f"mu {_vec(res.trace[-1].mu)}")
    return 0


def _emit_profiles(histories, taus, out) -> None:
    reports = [bench.profile_report(histories, tau) for tau in taus]
    for prob in reports[0].excluded:
        print(f"excluded {prob}: no feasible point in any run", file=sys.stderr)
    if out:
        with open(out, "w", newline="") as fh:
            for i, rep in enumerate(reports):
                rep.write_csv(fh, header=i == 0)
    else:
        for i, rep in enumerate(reports):
            rep.write_csv(sys.stdout, header=i == 0)


def cmd_bench(args) -> int:
    camp = bench.load_campaign(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be positive")
        camp.workers = args.workers
    out = args.out or camp.out_dir
    histories = camp.run(out)
    n_crash = sum(1 for h in histories.values() if h.stop_reason == "crash")
    print(f"runs {len(histories)}")
    if n_crash:
        print(f"crashed {n_crash}")
    for tau in camp.taus:
        rep = bench.profile_report(histories, tau)
        for alg in sorted(rep.curves):
            print(f"tau {_g(tau)} {alg} final_fraction {_g(rep.curves[alg].final)}")
    if args.profile:
        _emit_profiles(histories, camp.taus, args.profile)
    return 0


def cmd_profile(args) -> int:
    histories = bench.load_histories(args.histories)
    if not histories:
        raise UsageError(f"no histories under {args.histories}")
    _emit_profiles(histories, args.tau or [1e-3], args.out)
    return 0


def cmd_list_problems(args) -> int:
    print("name\tn\tm\tbounded\treference_best\tprovenance")
    for s in problems.catalog():
        ref = "" if s.reference_best is None else repr(float(s.reference_best))
        print(f"{s.name}\t{s.n}\t{s.m}\t{'yes' if s.bounded else 'no'}\t{ref}\t{s.provenance}")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "ce": cmd_ce,
    "bench": cmd_bench,
    "profile": cmd_profile,
    "list-problems": cmd_list_problems,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, OSError, RuntimeError, ValueError) as exc:
        print(f"{parser.prog}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
