# app/cli.py
"""infomech command line.

    python -m app.cli [global flags] <command> [options]

Reports go to stdout, JSON log lines to stderr. Exit codes: 0 success,
1 check failure, 2 input error, 3 numeric failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from app.core.config import settings
from app.core.exceptions import EXIT_CHECK_FAILURE, EXIT_OK, InfomechError, InvalidInput
from app.core.logging_config import setup_logging
from app.models.protocol import StrategyMode
from app.worker.logic import catalog
from app.worker.logic.context import load_context
from app.worker.logic.experiments import gap_experiment
from app.worker.logic.fixtures import run_fixtures
from app.worker.logic.lp import dump_lp
from app.worker.logic.mechanisms import mappings_program, outcomes_program, revenue_report
from app.worker.logic.protocol import optimal_strategies, parse_strategies, parse_tree, tree_to_dict
from app.worker.logic.protocol_transforms import (
    menu_to_protocol,
    required_deposit,
    to_pricing_mappings,
    to_pricing_outcomes,
    to_revelation,
    wrap_with_deposit,
)
from app.worker.logic.reporting import FORMATS, emit_report, to_payload
from app.worker.logic.solver import MECHANISMS, evaluate_protocol, posterior_set, solve_mechanism

logger = logging.getLogger("app.cli")

TRANSFORMS = ("revelation", "mappings", "outcomes", "deposit", "menu")


def _read_json(path: str) -> Any:
    try:
        if path == "-":
            return json.load(sys.stdin)
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise InvalidInput(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InvalidInput(f"{path} is not valid JSON: {e}") from e


def _context(args):
    if args.context:
        return load_context(_read_json(args.context), name=Path(args.context).stem)
    if args.fixture:
        if args.fixture not in catalog.CONTEXTS:
            raise InvalidInput(f"Unknown fixture context {args.fixture!r}; known: {sorted(catalog.CONTEXTS)}")
        return catalog.CONTEXTS[args.fixture]()
    raise InvalidInput("Give a context file (--context) or a fixture name (--fixture)")


def _dump_inputs(args, ctx, programs=()) -> None:
    if args.qstar_dump:
        Path(args.qstar_dump).write_text(json.dumps(to_payload(posterior_set(ctx, args.grid)), indent=2))
        logger.info(f"Posterior set written to {args.qstar_dump}")
    if args.lp_dump and programs:
        Path(args.lp_dump).write_text("\n\n".join(dump_lp(lp) for lp in programs) + "\n")
        logger.info(f"{len(programs)} linear program(s) written to {args.lp_dump}")


def cmd_solve(args) -> tuple[Any, int]:
    ctx = _context(args)
    programs = []
    if args.lp_dump and args.mechanism in ("mappings", "outcomes", "outcomes-npt"):
        posteriors = posterior_set(ctx, args.grid)
        programs = [
            mappings_program(ctx, posteriors)
            if args.mechanism == "mappings"
            else outcomes_program(ctx, posteriors, args.mechanism == "outcomes-npt")
        ]
    _dump_inputs(args, ctx, programs)
    result = solve_mechanism(
        ctx,
        args.mechanism,
        epsilon=args.epsilon,
        reduce=args.reduce_support,
        recover=args.recover_transfers,
        grid=args.grid,
        tolerance=args.tolerance,
    )
    return result, EXIT_OK if result["verification"].valid else EXIT_CHECK_FAILURE


def cmd_report(args) -> tuple[Any, int]:
    ctx = _context(args)
    posteriors = posterior_set(ctx, args.grid)
    programs = []
    if args.lp_dump:
        programs = [
            mappings_program(ctx, posteriors),
            outcomes_program(ctx, posteriors, nonnegative_transfers=True),
            outcomes_program(ctx, posteriors),
        ]
    _dump_inputs(args, ctx, programs)
    return revenue_report(ctx, posteriors), EXIT_OK


def cmd_eval_protocol(args) -> tuple[Any, int]:
    ctx = _context(args)
    strategies = _read_json(args.strategies) if args.strategies else None
    return evaluate_protocol(ctx, _read_json(args.tree), StrategyMode(args.mode), strategies), EXIT_OK


def cmd_transform(args) -> tuple[Any, int]:
    ctx = _context(args)
    if args.to == "menu":
        result = solve_mechanism(
            ctx, args.mechanism, epsilon=args.epsilon, recover=args.recover_transfers, grid=args.grid
        )
        return {"tree": tree_to_dict(menu_to_protocol(result["menu"]), ctx.omega_labels)}, EXIT_OK

    if not args.tree:
        raise InvalidInput(f"--to {args.to} needs a protocol tree (--tree)")
    tree = parse_tree(_read_json(args.tree), ctx)
    if args.to == "deposit":
        deposit = args.deposit if args.deposit is not None else required_deposit(tree)
        return {"deposit": deposit, "tree": tree_to_dict(wrap_with_deposit(tree, deposit), ctx.omega_labels)}, EXIT_OK

    if args.strategies:
        strategies = parse_strategies(_read_json(args.strategies), ctx, StrategyMode.COMMITTED)
    else:
        strategies = optimal_strategies(ctx, tree, StrategyMode.COMMITTED)
    if args.to == "revelation":
        return {"tree": tree_to_dict(to_revelation(ctx, tree, strategies), ctx.omega_labels)}, EXIT_OK
    if args.to == "mappings":
        return {"menu": to_pricing_mappings(ctx, tree, strategies)}, EXIT_OK
    return {"menu": to_pricing_outcomes(ctx, tree, strategies)}, EXIT_OK


def cmd_fixtures(args) -> tuple[Any, int]:
    run = run_fixtures(args.pattern)
    if not run.fixtures:
        raise InvalidInput(f"No fixture matches {args.pattern!r}")
    return run, EXIT_OK if run.passed else EXIT_CHECK_FAILURE


def cmd_gap(args) -> tuple[Any, int]:
    ctx = _context(args)
    if args.perturbation:
        eta = np.asarray(_read_json(args.perturbation), dtype=float)
    elif args.fixture == "iid-gap":
        eta = catalog.iid_gap_perturbation(ctx.n)
    else:
        raise InvalidInput("gap needs a perturbation matrix (--perturbation)")
    return gap_experiment(ctx, eta, args.t), EXIT_OK


def _add_context_options(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--context", help="Context JSON file ('-' for stdin).")
    source.add_argument("--fixture", help=f"Built-in context: {', '.join(catalog.CONTEXTS)}.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infomech", description="Revenue-optimal ways to sell information.")
    parser.add_argument("--tolerance", type=float, help="Tolerance for IR/IC/feasibility verification.")
    parser.add_argument("--grid", type=int, metavar="K", help="Add the resolution-K lattice to the posterior set.")
    parser.add_argument("--qstar-dump", metavar="PATH", help="Write the posterior set used to PATH.")
    parser.add_argument("--lp-dump", metavar="PATH", help="Write the linear programs solved to PATH.")
    parser.add_argument("--format", choices=FORMATS, default="json")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL.")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Optimal menu for one mechanism class.")
    _add_context_options(solve)
    solve.add_argument("--mechanism", choices=MECHANISMS, default="mappings")
    solve.add_argument("--epsilon", type=float, default=0.0, help="Scale payments by 1 - epsilon.")
    solve.add_argument("--reduce-support", action="store_true")
    solve.add_argument("--recover-transfers", action="store_true")
    solve.set_defaults(handler=cmd_solve)

    report = commands.add_parser("report", help="Re, Rc, Rp, R and the full surplus.")
    _add_context_options(report)
    report.set_defaults(handler=cmd_report)

    evaluate = commands.add_parser("eval-protocol", help="Best responses and revenue of a protocol tree.")
    _add_context_options(evaluate)
    evaluate.add_argument("--tree", required=True, help="Protocol tree JSON file.")
    evaluate.add_argument("--mode", choices=[m.value for m in StrategyMode], default=StrategyMode.COMMITTED.value)
    evaluate.add_argument("--strategies", help="Strategies JSON; best responses are used when omitted.")
    evaluate.set_defaults(handler=cmd_eval_protocol)

    transform = commands.add_parser("transform", help="Rewrite a protocol or menu into another form.")
    _add_context_options(transform)
    transform.add_argument("--to", choices=TRANSFORMS, required=True)
    transform.add_argument("--tree", help="Protocol tree JSON file.")
    transform.add_argument("--strategies", help="Committed strategies JSON; best responses when omitted.")
    transform.add_argument("--mechanism", choices=MECHANISMS, default="mappings", help="Menu source for --to menu.")
    transform.add_argument("--deposit", type=float, help="Deposit for --to deposit; the required one by default.")
    transform.add_argument("--epsilon", type=float, default=0.0, help="Strictness applied before --to menu.")
    transform.add_argument("--recover-transfers", action="store_true", help="Explicit payments before --to menu.")
    transform.set_defaults(handler=cmd_transform)

    fixtures = commands.add_parser("fixtures", help="Run the built-in regression fixtures.")
    fixtures.add_argument("pattern", nargs="?", default=None, help="Glob over fixture names.")
    fixtures.set_defaults(handler=cmd_fixtures)

    gap = commands.add_parser("gap", help="Revenues along mu + t * eta.")
    _add_context_options(gap)
    gap.add_argument("--perturbation", help="JSON matrix eta with zero total mass.")
    gap.add_argument("--t", type=float, nargs="+", default=[], help="Values of t (0 is always included).")
    gap.set_defaults(handler=cmd_gap)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    if args.tolerance is not None:
        settings.DERIVED_TOLERANCE = args.tolerance

    try:
        result, code = args.handler(args)
        sys.stdout.write(emit_report(result, args.format))
        if args.format == "json":
            sys.stdout.write("\n")
        return code
    except InfomechError as e:
        logger.error(f"{type(e).__name__}: {e.message}", exc_info=not e.is_input_error)
        sys.stdout.write(json.dumps(e.to_dict(), sort_keys=True, default=str) + "\n")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
