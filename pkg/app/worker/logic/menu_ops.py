# app/worker/logic/menu_ops.py
"""Post-processing of solved menus: support reduction, strict incentives and
recovery of explicit per-signal payments."""
import logging

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidInput, NumericFailure, SlackRequired
from app.models.context import Context
from app.models.lp import LinearProgram, Relation, Sense
from app.models.menu import Menu, MenuKind
from app.worker.logic.context import contract_values, prior_values
from app.worker.logic.geometry import decompose_through_prior
from app.worker.logic.lp import ProgramBuilder, restrict_and_vertex
from app.worker.logic.mechanisms import menu_revenue, menu_utilities, payment_matrix, verify_menu

logger = logging.getLogger(__name__)


def _support_program(
    ctx: Context,
    points: np.ndarray,
    values: np.ndarray,
    theta: int,
    earlier: list[int],
    threshold: float,
) -> LinearProgram:
    """Maximise t[theta] keeping theta's utility at `threshold` and every earlier
    type's incentive to stay with its own contract."""
    k = points.shape[0]
    builder = ProgramBuilder(Sense.MAX, name=f"support-reduction[{theta}]")
    x, price = {}, {}
    for t in [theta, *earlier]:
        x[t] = [builder.add_variable(f"x[{t}][{j}]") for j in range(k)]
        price[t] = builder.add_variable(f"t[{t}]", objective=1.0 if t == theta else 0.0)

    builder.add_constraint(f"keep[{theta}]", [*zip(x[theta], values[theta]), (price[theta], -1.0)], Relation.GE, threshold)
    for other in earlier:
        terms = [
            *zip(x[other], values[other]),
            (price[other], -1.0),
            *zip(x[theta], -values[other]),
            (price[theta], 1.0),
        ]
        builder.add_constraint(f"IC[{other}][{theta}]", terms, Relation.GE, 0.0)
    for w in ctx.support:
        builder.add_constraint(f"F[{theta}][{w}]", zip(x[theta], points[:, w]), Relation.EQ, ctx.prior[w])
    return builder.build()


def reduce_support(ctx: Context, menu: Menu) -> Menu:
    """Re-solve each type's contract at a vertex, highest price first.

    Each vertex has at most (support size + number of earlier types) nonzero
    entries, so per-type support stays within m + n - 1.
    """
    if menu.kind != MenuKind.MAPPINGS:
        raise InvalidInput("Support reduction applies to pricing-mappings menus")
    points = menu.posteriors
    values = contract_values(ctx, points)
    outside = prior_values(ctx)
    weights = menu.weights.copy()
    prices = menu.prices.copy()
    tol = settings.DERIVED_TOLERANCE * max(1.0, float(np.abs(values).max(initial=0.0)))
    order = [int(t) for t in np.argsort(-prices, kind="stable")]

    for position, theta in enumerate(order):
        earlier = order[:position]
        rivals = [values[theta] @ weights[o] - prices[o] for o in range(ctx.n) if o != theta]
        threshold = max([outside[theta], *rivals])
        fixed = {}
        for o in earlier:
            fixed.update({f"x[{o}][{j}]": weights[o, j] for j in range(points.shape[0])})
            fixed[f"t[{o}]"] = prices[o]
        lp = _support_program(ctx, points, values, theta, earlier, threshold)
        solution = restrict_and_vertex(lp, fixed)

        contract = np.clip([solution.primal[f"x[{theta}][{j}]"] for j in range(points.shape[0])], 0.0, None)
        contract[contract <= settings.SUPPORT_TOL] = 0.0
        weights[theta], prices[theta] = contract, solution.primal[f"t[{theta}]"]
        for later in order[position + 1 :]:
            current = values[later] @ weights[later] - prices[later]
            if current < values[later] @ contract - prices[theta] - tol:
                logger.debug(f"Type {later} now prefers the contract of type {theta}; copying it")
                weights[later], prices[later] = contract, prices[theta]

    reduced = Menu.mappings(points, weights, prices, menu.prior, menu.labels)
    before, after = menu_revenue(ctx, menu), menu_revenue(ctx, reduced)
    if after < before - 1e-8 * max(1.0, abs(before)):
        logger.warning(
            f"Support reduction lowered revenue from {before!r} to {after!r}",
            extra={"context_name": ctx.name},
        )
    logger.info(
        f"Support sizes after reduction: {reduced.support_sizes()}",
        extra={"context_name": ctx.name, "mechanism": "mappings"},
    )
    return reduced


def _copy_contract(menu: Menu, source: int, target: int) -> Menu:
    weights = menu.weights.copy()
    weights[target] = menu.weights[source]
    if menu.kind == MenuKind.MAPPINGS:
        prices = menu.prices.copy()
        prices[target] = menu.prices[source]
        return menu.with_changes(weights=weights, prices=prices)
    scaled = menu.scaled_payments.copy()
    scaled[target] = menu.scaled_payments[source]
    changes = {"weights": weights, "scaled_payments": scaled}
    if menu.payments is not None:
        payments = menu.payments.copy()
        payments[target] = menu.payments[source]
        changes["payments"] = payments
    return menu.with_changes(**changes)


def make_strict(ctx: Context, menu: Menu, epsilon: float) -> Menu:
    """Scale every payment by (1 - epsilon) so IR and IC hold strictly.

    A type indifferent between its contract and another one it would pay at
    least as much for is first moved onto that other contract.
    """
    if epsilon == 0:
        return menu
    if not 0 < epsilon < 1:
        raise InvalidInput(f"epsilon must lie in (0, 1), got {epsilon}")

    values = contract_values(ctx, menu.posteriors)
    for _ in range(ctx.n * ctx.n):
        utility = menu_utilities(ctx, menu)
        pay = payment_matrix(ctx, menu)
        scale = max(1.0, float(np.abs(values).max(initial=0.0)), float(np.abs(pay).max(initial=0.0)))
        tol = settings.DERIVED_TOLERANCE * scale
        merge = next(
            (
                (t, o)
                for t in range(ctx.n)
                for o in range(ctx.n)
                if o != t
                and not menu.same_contract(t, o)
                and abs(utility[t, t] - utility[t, o]) <= tol
                and pay[t, o] >= pay[t, t] - tol
            ),
            None,
        )
        if merge is None:
            break
        theta, other = merge
        logger.debug(f"Type {theta} is indifferent to contract {other} at no lower payment; merging")
        menu = _copy_contract(menu, other, theta)

    factor = 1.0 - epsilon
    if menu.kind == MenuKind.MAPPINGS:
        return menu.with_changes(prices=menu.prices * factor)
    payments = menu.payments * factor if menu.payments is not None else None
    return menu.with_changes(scaled_payments=menu.scaled_payments * factor, payments=payments)


def _explicit_payments(weights: np.ndarray, scaled: np.ndarray) -> np.ndarray:
    payments = np.full(weights.shape, np.nan)
    shown = weights > settings.SUPPORT_TOL
    payments[shown] = scaled[shown] / weights[shown]
    return payments


def recover_transfers(ctx: Context, menu: Menu, delta: float | None = None) -> Menu:
    """Turn scaled outcome payments into explicit t_theta(q).

    Posteriors no type uses are dropped. If some type gives a used posterior
    zero weight, a small share delta of every lottery is moved onto a
    mixture of used posteriors and their reflections through the prior,
    which keeps feasibility and leaves payments (hence revenue) untouched.
    """
    if menu.kind != MenuKind.OUTCOMES:
        raise InvalidInput("Transfer recovery applies to pricing-outcomes menus")

    used = np.flatnonzero(
        (menu.weights > settings.SUPPORT_TOL).any(axis=0) | (np.abs(menu.scaled_payments) > settings.SUPPORT_TOL).any(axis=0)
    )
    points = menu.posteriors[used]
    weights = menu.weights[:, used]
    scaled = menu.scaled_payments[:, used]
    trimmed = Menu.outcomes(points, weights, scaled, menu.prior, labels=menu.labels)
    if np.all(weights > settings.SUPPORT_TOL):
        return trimmed.with_changes(payments=_explicit_payments(weights, scaled))

    baseline = verify_menu(ctx, trimmed)
    incentive = [c for c in baseline.checks if c.kind in ("IR", "IC") and not c.identical]
    tight = [c.name for c in incentive if c.status != "slack"]
    if tight:
        raise SlackRequired(f"Constraints must be slack before blending: {', '.join(tight)}", constraints=tight)
    required = {c.name: 0.5 * c.margin for c in incentive}

    count = len(points)
    extra: list[np.ndarray] = []
    blend = np.zeros(count)
    reflected: list[tuple[int, float]] = []
    for j, q in enumerate(points):
        gamma, r = decompose_through_prior(menu.prior, q)
        blend[j] += gamma / count
        candidates = [*points, *extra]
        distance = np.abs(np.array(candidates) - r).max(axis=1)
        index = int(np.argmin(distance))
        if distance[index] > 1e-12:
            extra.append(r)
            index = count + len(extra) - 1
        reflected.append((index, (1.0 - gamma) / count))
    blend = np.append(blend, np.zeros(len(extra)))
    for index, share in reflected:
        blend[index] += share

    all_points = np.vstack([points, *extra]) if extra else points
    padded_weights = np.hstack([weights, np.zeros((ctx.n, len(extra)))])
    padded_scaled = np.hstack([scaled, np.zeros((ctx.n, len(extra)))])

    step = settings.RECOVER_DELTA if delta is None else delta
    for _ in range(settings.RECOVER_MAX_HALVINGS + 1):
        blended = (1.0 - step) * padded_weights + step * blend[None, :]
        candidate = Menu.outcomes(all_points, blended, padded_scaled, menu.prior, labels=menu.labels)
        report = verify_menu(ctx, candidate)
        margins = {c.name: c.margin for c in report.checks}
        if report.valid and all(margins[name] >= floor for name, floor in required.items()):
            logger.info(
                f"Recovered explicit payments with blend weight {step:.3g} over {len(all_points)} posteriors",
                extra={"context_name": ctx.name, "mechanism": "outcomes"},
            )
            return candidate.with_changes(payments=_explicit_payments(blended, padded_scaled))
        step /= 2.0
    raise NumericFailure(
        f"Blending could not preserve half of the input slack after {settings.RECOVER_MAX_HALVINGS} halvings"
    )
