"""Command-line front end.

Exit codes: 0 when every check passes, 2 when a verification check fails
(including an impossible derandomization), 1 on any other error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import adversary as adv
from ._jsonio import fmt, write_json
from .errors import ConfigError, DerandomizationError, EflotteryError
from .flow import SolverConfig, assemble_naive_lp, derandomize_naive, naive_marginals, solve_ef_lottery
from .lottery import Lottery, decompose, marginals
from .lp import solve_lp
from .rsd import expected_query_count, rsd_lottery
from .valuations import QueryLedger, discretize, dump_instance, grid_pieces, load_instance
from .verification import (
    CLASSES,
    Check,
    VerificationReport,
    check_eps_pareto,
    check_ex_ante_ef,
    check_ex_ante_proportional,
    check_ex_post,
    check_ex_post_pareto,
    expected_utilities,
    frontier_sweep,
)

log = logging.getLogger("eflottery")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
VERIFY_CHECKS = ("feasible", "ef", "proportional", "ex-post-ef", "ex-post-proportional", "ex-post-pareto", "pareto")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _epsilon(text: str) -> Fraction:
    try:
        eps = Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"cannot parse epsilon {text!r}") from exc
    if not 0 < eps <= 1:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 1]")
    return eps


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eflottery", description="Envy-free lotteries over divisible goods.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", type=Path, help="instance JSON file")
        sp.add_argument("--out", type=Path, help="directory for artifacts")
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="flow LP, decomposition and checks")
    common(s)
    s.add_argument("--epsilon", type=_epsilon, default=Fraction(1, 4))
    s.add_argument("--objective", default="welfare", help="welfare | leximin | weights=<csv>")
    s.add_argument("--fairness", default="ef", choices=("ef", "prop", "none"))

    s = sub.add_parser("naive-solve", help="single-item LP over per-agent amount distributions")
    common(s)
    s.add_argument("--epsilon", type=_epsilon, default=Fraction(1, 2))
    s.add_argument("--item", type=int, default=0)

    s = sub.add_parser("rsd", help="serial dictatorship with cut queries")
    common(s)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="enumerate all orders (default)")
    g.add_argument("--samples", type=_positive, help="sample this many seeded orders")
    s.add_argument("--epsilon", type=_epsilon, help="grid for the ex-post dominance search")

    s = sub.add_parser("verify", help="check a lottery file against an instance")
    common(s)
    s.add_argument("--lottery", type=Path, required=True)
    s.add_argument("--checks", default="feasible,ef", help=f"comma list of {', '.join(VERIFY_CHECKS)}")
    s.add_argument("--epsilon", type=_epsilon, default=Fraction(1, 4), help="grid for Pareto searches")
    s.add_argument("--pareto-epsilon", type=float, default=0.0)
    s.add_argument("--pareto-class", default="ef_lotteries", choices=CLASSES)

    s = sub.add_parser("frontier", help="weighted-welfare sweep and deterministic utility points")
    common(s)
    s.add_argument("--epsilon", type=_epsilon, default=Fraction(1, 8))
    s.add_argument("--directions", type=_positive, default=11)
    s.add_argument("--fairness", default="ef", choices=("ef", "prop", "none"))

    s = sub.add_parser("adversary-audit", help="forge indistinguishable instances and audit a lottery")
    common(s, instance=False)
    s.add_argument("--epsilon", type=float, default=0.2)
    s.add_argument("--x1", type=float)
    s.add_argument("--protocol", default="uniform", choices=("uniform", "solve", "lottery"))
    s.add_argument("--lottery", type=Path, help="lottery file for --protocol lottery")
    s.add_argument("--pieces", type=_positive, default=40, help="grid for the LP dominance fallback")
    return p


# ---------------------------------------------------------------- output


def _emit(out: Path | None, name: str, obj) -> None:
    if out is not None:
        write_json(out / name, obj)


def _summary(title: str, lines: list[str], report: VerificationReport | None, ledger: QueryLedger | None) -> None:
    print(f"== {title}")
    for ln in lines:
        print(ln)
    if ledger is not None:
        s = ledger.summary()
        print(f"queries: {s['total']} ({s['value_queries']} value, {s['cut_queries']} cut)")
    if report is not None:
        for c in report.checks:
            print(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}")
        print(f"result: {'pass' if report.passed else 'FAIL'}")


def _vec(x) -> str:
    return " ".join(fmt(v) for v in np.asarray(x).reshape(-1))


def _status(report: VerificationReport) -> int:
    return EXIT_OK if report.passed else EXIT_FAILED


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    config = SolverConfig(args.epsilon, args.objective, args.fairness)
    ledger = QueryLedger()
    sol = solve_ef_lottery(inst, config, ledger)
    lot = decompose(sol.graph, sol.flow, merge=True)
    u, U = expected_utilities(lot, inst)
    rep = check_ex_post(lot, inst, "feasible")
    rep.extend(check_ex_ante_ef(lot, inst) if args.fairness == "ef" else VerificationReport())
    if args.fairness == "prop":
        rep.extend(check_ex_ante_proportional(lot, inst))
    flow_err = float(np.abs(marginals(lot) - sol.expected_allocation()).max())
    rep.add(Check("marginals_match_flow", flow_err <= 1e-9, {"max_error": flow_err}))
    expected_q = inst.n * inst.m * config.pieces
    rep.add(Check("query_count", ledger.total == expected_q, {"queries": ledger.total, "budget": expected_q}))
    report = {
        "command": "solve",
        "epsilon": config.epsilon,
        "objective": config.objective if isinstance(config.objective, str) else list(config.objective),
        "fairness": config.fairness,
        "lp_objective": sol.objective,
        "lp_iterations": sol.iterations,
        "utilities": u,
        "cross_utilities": U,
        "support_size": lot.support_size,
        "queries": ledger.summary(),
        "verification": rep.to_dict(),
    }
    _emit(args.out, "flow.json", sol.to_dict())
    _emit(args.out, "lottery.json", lot.to_dict())
    _emit(args.out, "report.json", report)
    _summary(
        "solve",
        [f"objective: {fmt(sol.objective)}", f"utilities: {_vec(u)}", f"support: {lot.support_size} outcomes"],
        rep,
        ledger,
    )
    return _status(rep)


def cmd_naive(args) -> int:
    inst = load_instance(args.instance)
    ledger = QueryLedger()
    grid = discretize(inst, args.epsilon, ledger)
    lp = assemble_naive_lp(grid, args.item)
    sol = solve_lp(lp)
    if not sol.optimal:
        raise ConfigError(f"naive LP returned status {sol.status}")
    P = naive_marginals(grid, sol.x)
    report = {
        "command": "naive-solve",
        "epsilon": args.epsilon,
        "item": args.item,
        "lp_objective": float(lp.objective @ sol.x),
        "amount_distributions": {f"agent_{i}": {fmt(y / grid.pieces): P[i, y] for y in range(grid.pieces + 1) if P[i, y] > 1e-12} for i in range(grid.n)},
        "queries": ledger.summary(),
    }
    lines = [f"objective: {fmt(report['lp_objective'])}"]
    for i in range(grid.n):
        dist = ", ".join(f"{fmt(y / grid.pieces)} w.p. {fmt(P[i, y])}" for y in range(grid.pieces + 1) if P[i, y] > 1e-12)
        lines.append(f"agent {i}: {dist}")
    try:
        derandomize_naive(grid, P, args.item)
    except DerandomizationError as exc:
        report["derandomization"] = {"possible": False, "reason": str(exc)}
        lines.append("decomposition impossible: no lottery over feasible outcomes has these distributions")
        code = EXIT_FAILED
    else:
        report["derandomization"] = {"possible": True}
        lines.append("decomposition possible")
        code = EXIT_OK
    _emit(args.out, "naive.json", report)
    _summary("naive-solve", lines, None, ledger)
    print(f"result: {'pass' if code == EXIT_OK else 'FAIL'}")
    return code


def cmd_rsd(args) -> int:
    inst = load_instance(args.instance)
    ledger = QueryLedger()
    mode = "sampled" if args.samples else "exact"
    lot = rsd_lottery(inst, mode, seed=args.seed, samples=args.samples, ledger=ledger)
    u, U = expected_utilities(lot, inst)
    rep = check_ex_post(lot, inst, "feasible")
    rep.extend(check_ex_ante_ef(lot, inst))
    pieces = grid_pieces(args.epsilon) if args.epsilon is not None else None
    rep.extend(check_ex_post_pareto(lot, inst, pieces))
    report = {
        "command": "rsd",
        "mode": mode,
        "seed": args.seed,
        "samples": args.samples,
        "utilities": u,
        "cross_utilities": U,
        "queries": ledger.summary(),
        "expected_queries": expected_query_count(inst, mode, args.samples),
        "verification": rep.to_dict(),
    }
    _emit(args.out, "lottery.json", lot.to_dict())
    _emit(args.out, "report.json", report)
    _summary("rsd", [f"mode: {mode}", f"utilities: {_vec(u)}"], rep, ledger)
    return _status(rep)


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    lot = Lottery.load(args.lottery)
    wanted = [c.strip() for c in args.checks.split(",") if c.strip()]
    bad = [c for c in wanted if c not in VERIFY_CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; choose from {VERIFY_CHECKS}")
    pieces = grid_pieces(args.epsilon)
    rep = VerificationReport()
    for c in wanted:
        if c == "feasible":
            rep.extend(check_ex_post(lot, inst, "feasible"))
        elif c == "ef":
            rep.extend(check_ex_ante_ef(lot, inst))
        elif c == "proportional":
            rep.extend(check_ex_ante_proportional(lot, inst))
        elif c == "ex-post-ef":
            rep.extend(check_ex_post(lot, inst, "envy-free"))
        elif c == "ex-post-proportional":
            rep.extend(check_ex_post(lot, inst, "proportional"))
        elif c == "ex-post-pareto":
            rep.extend(check_ex_post_pareto(lot, inst, pieces))
        else:
            rep.extend(check_eps_pareto(lot, inst, args.pareto_epsilon, args.pareto_class, pieces))
    u, _ = expected_utilities(lot, inst)
    _emit(args.out, "report.json", {"command": "verify", "utilities": u, "verification": rep.to_dict()})
    _summary("verify", [f"utilities: {_vec(u)}"], rep, None)
    return _status(rep)


def cmd_frontier(args) -> int:
    inst = load_instance(args.instance)
    fr = frontier_sweep(inst, args.epsilon, args.directions, args.fairness)
    n = inst.n
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "frontier.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"w{i}" for i in range(n)] + [f"u{i}" for i in range(n)] + ["lottery"])
            for j, pt in enumerate(fr.points):
                ref = f"lotteries/lottery_{j:03d}.json"
                write_json(args.out / ref, pt.lottery.to_dict())
                w.writerow([fmt(v) for v in pt.weights] + [fmt(v) for v in pt.utilities] + [ref])
        with open(args.out / "deterministic.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"u{i}" for i in range(n)] + [f"x{i}_{k}" for i in range(n) for k in range(inst.m)])
            for u, x in zip(fr.deterministic, fr.deterministic_allocations):
                w.writerow([fmt(v) for v in u] + [fmt(v) for v in x.reshape(-1)])
    lines = [f"{len(fr.points)} weighted optima, {len(fr.deterministic)} deterministic grid outcomes"]
    lines += [f"w = {_vec(p.weights)} -> u = {_vec(p.utilities)}" for p in fr.points]
    _summary("frontier", lines, None, None)
    return EXIT_OK


def cmd_adversary(args) -> int:
    eps = args.epsilon
    if not 0 < eps < 0.5:
        raise ConfigError("adversary epsilon must lie in (0, 1/2)")
    budget = adv.query_budget(eps)
    oracle = adv.AdversaryOracle(eps, budget)
    if args.protocol == "uniform":
        lot = adv.uniform_lottery()
    elif args.protocol == "solve":
        k = budget // 4
        if k < 1:
            raise ConfigError(f"a query budget of {budget} cannot fund one grid pass over 2 agents x 2 items")
        sol = solve_ef_lottery(oracle, SolverConfig(Fraction(1, k)))
        lot = decompose(sol.graph, sol.flow, merge=True)
    else:
        if args.lottery is None:
            raise ConfigError("--protocol lottery needs --lottery")
        lot = Lottery.load(args.lottery)
    forged = adv.forge_instances(oracle.state, eps, args.x1)
    mismatches = adv.transcript_consistent(oracle.ledger, forged)
    rep = adv.audit_lottery(forged, lot, eps, args.pieces)
    rep.checks.insert(0, Check("transcript_indistinguishable", not any(mismatches.values()), {"queries": oracle.ledger.total, "budget": budget}, {"mismatches": mismatches} if any(mismatches.values()) else None))
    report = {
        "command": "adversary-audit",
        "protocol": args.protocol,
        "epsilon": eps,
        "interval": [forged.x1, forged.x2],
        "queries": oracle.ledger.summary(),
        "verification": rep.to_dict(),
    }
    if args.out is not None:
        for name, inst in forged.named().items():
            args.out.mkdir(parents=True, exist_ok=True)
            dump_instance(inst, args.out / f"{name}.json")
        write_json(args.out / "lottery.json", lot.to_dict())
        write_json(args.out / "audit.json", report)
    defeated = rep["undominated_in_I2_and_I3"].details["defeated_by"]
    lines = [
        f"protocol: {args.protocol}",
        f"interval: [{fmt(forged.x1)}, {fmt(forged.x2)}]",
        f"defeated by: {', '.join(defeated) if defeated else 'none'}",
    ]
    _summary("adversary-audit", lines, rep, oracle.ledger)
    return _status(rep)


COMMANDS = {
    "solve": cmd_solve,
    "naive-solve": cmd_naive,
    "rsd": cmd_rsd,
    "verify": cmd_verify,
    "frontier": cmd_frontier,
    "adversary-audit": cmd_adversary,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("EFLOTTERY_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (EflotteryError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
