# app/worker/logic/solver.py
"""One-call entry points used by the CLI and the API."""
import logging
from typing import Any, Mapping

from app.core.exceptions import InvalidInput
from app.models.context import Context
from app.models.geometry import PosteriorSet
from app.models.protocol import StrategyMode
from app.worker.logic.geometry import grid_refinement, interesting_posteriors
from app.worker.logic.mechanisms import (
    envelope_menu,
    full_surplus_contract,
    full_surplus_menu,
    menu_revenue,
    solve_pricing_mappings,
    solve_pricing_outcomes,
    solve_sealed_envelope,
    verify_menu,
)
from app.worker.logic.menu_ops import make_strict, recover_transfers, reduce_support
from app.worker.logic.protocol import (
    best_response,
    evaluate,
    parse_strategies,
    parse_tree,
    strategy_to_dict,
)

logger = logging.getLogger(__name__)

MECHANISMS = ("envelope", "mappings", "outcomes", "outcomes-npt", "full-surplus")


def posterior_set(ctx: Context, grid: int | None = None) -> PosteriorSet:
    posteriors = interesting_posteriors(ctx)
    return grid_refinement(posteriors, grid) if grid else posteriors


def solve_mechanism(
    ctx: Context,
    mechanism: str,
    epsilon: float = 0.0,
    reduce: bool = False,
    recover: bool = False,
    grid: int | None = None,
    tolerance: float | None = None,
) -> dict[str, Any]:
    """Optimal menu of one mechanism class, post-processed and verified."""
    if mechanism not in MECHANISMS:
        raise InvalidInput(f"Unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
    log = logging.LoggerAdapter(logger, {"context_name": ctx.name, "mechanism": mechanism})
    warnings: list[str] = []
    extra: dict[str, Any] = {}

    if mechanism == "envelope":
        price, _ = solve_sealed_envelope(ctx)
        menu = envelope_menu(ctx, price)
        extra["price"] = price
    elif mechanism == "full-surplus":
        contract = full_surplus_contract(ctx)
        menu = full_surplus_menu(ctx, contract)
        warnings.extend(contract.warnings)
        extra["contract"] = contract
    else:
        posteriors = posterior_set(ctx, grid)
        extra["posterior_count"] = len(posteriors)
        if mechanism == "mappings":
            menu = solve_pricing_mappings(ctx, posteriors).menu
        else:
            menu = solve_pricing_outcomes(ctx, posteriors, nonnegative_transfers=mechanism == "outcomes-npt").menu

    if reduce:
        menu = reduce_support(ctx, menu)
    if epsilon:
        menu = make_strict(ctx, menu, epsilon)
    if recover:
        menu = recover_transfers(ctx, menu)

    report = verify_menu(ctx, menu, tolerance=tolerance)
    if not report.valid:
        log.warning(f"Solved menu fails verification: {[c.name for c in report.violated()]}")
    return {
        "context": ctx.name,
        "mechanism": mechanism,
        "revenue": menu_revenue(ctx, menu),
        "menu": menu,
        "verification": report,
        "warnings": warnings,
        **extra,
    }


def evaluate_protocol(
    ctx: Context,
    tree_data: Mapping,
    mode: StrategyMode,
    strategies_data: Mapping | None = None,
) -> dict[str, Any]:
    """Best responses of every type and the play they induce.

    With explicit strategies, those are evaluated instead of the best responses.
    """
    tree = parse_tree(tree_data, ctx)
    responses = {t: best_response(ctx, tree, t, mode) for t in range(ctx.n)}
    if strategies_data:
        strategies = parse_strategies(strategies_data, ctx, mode)
    else:
        strategies = {t: r.strategy for t, r in responses.items()}
    result = evaluate(ctx, tree, strategies)
    return {
        "context": ctx.name,
        "mode": mode.value,
        "nodes": len(tree),
        "best_responses": [
            {
                "theta": ctx.theta_labels[t],
                "strategy": strategy_to_dict(r.strategy),
                "utility": r.utility,
                "expected_transfer": r.expected_transfer,
            }
            for t, r in responses.items()
        ],
        "strategies": {ctx.theta_labels[t]: strategy_to_dict(s) for t, s in sorted(strategies.items())},
        "evaluation": result,
    }
