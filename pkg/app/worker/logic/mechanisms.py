# app/worker/logic/mechanisms.py
"""Revenue-maximising menus for each mechanism class.

All programs are written in the observer frame over a finite posterior set
Q. For a contract that draws observer posterior q with probability x(q):

    V_theta(q)  = v_theta(D_theta q) / mu(theta)   value to type theta
    pi_theta(q) = 1' D_theta q / mu(theta)        relative likelihood of q

so type theta values contract x at V_theta . x, and pays pi_theta . s for
scaled outcome payments s(q) = x(q) t(q).
"""
import logging
from typing import NamedTuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import NumericFailure, RankDeficient
from app.core.metrics import REVENUE_REPORTS
from app.models.context import Context
from app.models.geometry import PosteriorSet
from app.models.lp import LinearProgram, LpSolution, LpStatus, Relation, Sense
from app.models.menu import ConstraintCheck, FullSurplusContract, Menu, MenuKind, MenuReport, RevenueReport
from app.worker.logic.context import (
    contract_values,
    full_surplus,
    likelihood_ratios,
    prior_values,
    surpluses,
)
from app.worker.logic.geometry import interesting_posteriors
from app.worker.logic.lp import ProgramBuilder, solve

logger = logging.getLogger(__name__)


class EnvelopeResult(NamedTuple):
    price: float
    revenue: float


class MechanismResult(NamedTuple):
    menu: Menu
    revenue: float


def solve_sealed_envelope(ctx: Context) -> EnvelopeResult:
    """Best single price for full information; only surplus values need checking."""
    zeta = surpluses(ctx)
    best = EnvelopeResult(0.0, 0.0)
    for price in np.unique(zeta):
        if price <= 0:
            continue
        buyers = zeta >= price - settings.DERIVED_TOLERANCE
        revenue = float(price * ctx.type_marginal[buyers].sum())
        if revenue > best.revenue + settings.DERIVED_TOLERANCE:
            best = EnvelopeResult(float(price), revenue)
    return best


def _full_information(ctx: Context) -> tuple[np.ndarray, np.ndarray]:
    """Support corners plus the prior, and the full-disclosure lottery over them."""
    corners = np.zeros((len(ctx.support), ctx.m))
    corners[np.arange(len(ctx.support)), list(ctx.support)] = 1.0
    posteriors = np.vstack([corners, ctx.prior[None, :]])
    lottery = np.append(ctx.prior[list(ctx.support)], 0.0)
    return posteriors, lottery


def envelope_menu(ctx: Context, price: float) -> Menu:
    zeta = surpluses(ctx)
    posteriors, lottery = _full_information(ctx)
    declined = np.zeros_like(lottery)
    declined[-1] = 1.0
    served = zeta >= price - settings.DERIVED_TOLERANCE
    weights = np.where(served[:, None], lottery[None, :], declined[None, :])
    prices = np.where(served, price, 0.0)
    return Menu.mappings(posteriors, weights, prices, ctx.prior, ctx.theta_labels)


def _lottery_variables(builder: ProgramBuilder, n: int, k: int) -> np.ndarray:
    return np.array([[builder.add_variable(f"x[{t}][{j}]") for j in range(k)] for t in range(n)])


def _feasibility_rows(builder: ProgramBuilder, ctx: Context, points: np.ndarray, x: np.ndarray) -> None:
    for t in range(ctx.n):
        for w in ctx.support:
            builder.add_constraint(
                f"F[{t}][{w}]",
                zip(x[t], points[:, w]),
                Relation.EQ,
                ctx.prior[w],
            )


def mappings_program(ctx: Context, posteriors: PosteriorSet) -> LinearProgram:
    """Revenue program for fixed-price contracts (one price t[theta] per type)."""
    points = posteriors.points
    n, k = ctx.n, len(posteriors)
    values = contract_values(ctx, points)
    outside = prior_values(ctx)

    builder = ProgramBuilder(Sense.MAX, name="pricing-mappings")
    x = _lottery_variables(builder, n, k)
    price = [builder.add_variable(f"t[{t}]", objective=ctx.type_marginal[t]) for t in range(n)]

    for t in range(n):
        builder.add_constraint(f"IR[{t}]", [*zip(x[t], values[t]), (price[t], -1.0)], Relation.GE, outside[t])
    for t in range(n):
        for other in range(n):
            if other == t:
                continue
            terms = [*zip(x[t], values[t]), (price[t], -1.0), *zip(x[other], -values[t]), (price[other], 1.0)]
            builder.add_constraint(f"IC[{t}][{other}]", terms, Relation.GE, 0.0)
    _feasibility_rows(builder, ctx, points, x)
    return builder.build()


def outcomes_program(ctx: Context, posteriors: PosteriorSet, nonnegative_transfers: bool = False) -> LinearProgram:
    """Revenue program for signal-contingent payments, in scaled form s = x * t."""
    points = posteriors.points
    n, k = ctx.n, len(posteriors)
    values = contract_values(ctx, points)
    ratios = likelihood_ratios(ctx, points)
    outside = prior_values(ctx)

    name = "pricing-outcomes-npt" if nonnegative_transfers else "pricing-outcomes"
    builder = ProgramBuilder(Sense.MAX, name=name)
    x = _lottery_variables(builder, n, k)
    lower = 0.0 if nonnegative_transfers else -np.inf
    s = np.array(
        [
            [
                builder.add_variable(f"s[{t}][{j}]", lower=lower, objective=ctx.type_marginal[t] * ratios[t, j])
                for j in range(k)
            ]
            for t in range(n)
        ]
    )

    for t in range(n):
        builder.add_constraint(f"IR[{t}]", [*zip(x[t], values[t]), *zip(s[t], -ratios[t])], Relation.GE, outside[t])
    for t in range(n):
        for other in range(n):
            if other == t:
                continue
            terms = [
                *zip(x[t], values[t]),
                *zip(s[t], -ratios[t]),
                *zip(x[other], -values[t]),
                *zip(s[other], ratios[t]),
            ]
            builder.add_constraint(f"IC[{t}][{other}]", terms, Relation.GE, 0.0)
    _feasibility_rows(builder, ctx, points, x)
    return builder.build()


def _lottery_matrix(solution: LpSolution, n: int, k: int, prefix: str) -> np.ndarray:
    values = np.array([[solution.primal[f"{prefix}[{t}][{j}]"] for j in range(k)] for t in range(n)])
    return values.reshape(n, k)


def _checked(solution: LpSolution, lp: LinearProgram) -> LpSolution:
    if solution.status != LpStatus.OPTIMAL:
        raise NumericFailure(f"{lp.name} returned {solution.status.value}", program=lp.name)
    return solution


def menu_from_mappings_solution(ctx: Context, posteriors: PosteriorSet, solution: LpSolution) -> Menu:
    n, k = ctx.n, len(posteriors)
    weights = np.clip(_lottery_matrix(solution, n, k, "x"), 0.0, None)
    prices = np.array([solution.primal[f"t[{t}]"] for t in range(n)])
    return Menu.mappings(posteriors.points, weights, prices, ctx.prior, ctx.theta_labels)


def menu_from_outcomes_solution(ctx: Context, posteriors: PosteriorSet, solution: LpSolution) -> Menu:
    n, k = ctx.n, len(posteriors)
    weights = np.clip(_lottery_matrix(solution, n, k, "x"), 0.0, None)
    scaled = _lottery_matrix(solution, n, k, "s")
    return Menu.outcomes(posteriors.points, weights, scaled, ctx.prior, labels=ctx.theta_labels)


def solve_pricing_mappings(ctx: Context, posteriors: PosteriorSet) -> MechanismResult:
    lp = mappings_program(ctx, posteriors)
    solution = _checked(solve(lp), lp)
    logger.info(
        f"Pricing mappings revenue {solution.objective:.12g} over {len(posteriors)} posteriors",
        extra={"context_name": ctx.name, "mechanism": "mappings"},
    )
    return MechanismResult(menu_from_mappings_solution(ctx, posteriors, solution), solution.objective)


def solve_pricing_outcomes(
    ctx: Context, posteriors: PosteriorSet, nonnegative_transfers: bool = False
) -> MechanismResult:
    lp = outcomes_program(ctx, posteriors, nonnegative_transfers)
    solution = _checked(solve(lp), lp)
    logger.info(
        f"Pricing outcomes revenue {solution.objective:.12g} (nonnegative transfers: {nonnegative_transfers})",
        extra={"context_name": ctx.name, "mechanism": lp.name},
    )
    return MechanismResult(menu_from_outcomes_solution(ctx, posteriors, solution), solution.objective)


def full_surplus_contract(ctx: Context) -> FullSurplusContract:
    """Signal-contingent charges t(w) under which every type pays exactly its surplus.

    Solves sum_w t(w) mu(w, theta) = mu(theta) zeta(theta); the minimum-norm
    solution is taken when there are more signals than types.
    """
    if ctx.numeric_rank < ctx.n:
        raise RankDeficient(
            f"Joint matrix has numeric rank {ctx.numeric_rank} < {ctx.n} types",
            rank=ctx.numeric_rank,
        )
    target = ctx.type_marginal * surpluses(ctx)
    payments, *_ = np.linalg.lstsq(ctx.mu.T, target, rcond=None)
    sigma = ctx.singular_values
    condition = float(sigma[0] / sigma[ctx.n - 1])
    warnings = ()
    if condition > settings.CONDITION_WARNING:
        warnings = (f"ill-conditioned joint matrix (condition number {condition:.6g})",)
        logger.warning(
            f"Full-surplus payments come from an ill-conditioned system (condition number {condition:.6g})",
            extra={"context_name": ctx.name, "mechanism": "full-surplus"},
        )
    revenue = float((ctx.mu.T @ payments).sum())
    return FullSurplusContract(payments=payments, revenue=revenue, condition_number=condition, warnings=warnings)


def full_surplus_menu(ctx: Context, contract: FullSurplusContract) -> Menu:
    """Full disclosure to every type, charging t(w) when signal w is shown."""
    support = list(ctx.support)
    posteriors = np.zeros((len(support), ctx.m))
    posteriors[np.arange(len(support)), support] = 1.0
    weights = np.tile(ctx.prior[support], (ctx.n, 1))
    payments = np.tile(contract.payments[support], (ctx.n, 1))
    return Menu.outcomes(posteriors, weights, weights * payments, ctx.prior, payments, ctx.theta_labels)


def payment_matrix(ctx: Context, menu: Menu) -> np.ndarray:
    """pay[theta, other]: what type theta expects to pay under contract `other`."""
    if menu.kind == MenuKind.MAPPINGS:
        return np.tile(menu.prices, (menu.n_types, 1))
    ratios = likelihood_ratios(ctx, menu.posteriors)
    return ratios @ menu.scaled_payments.T


def menu_utilities(ctx: Context, menu: Menu) -> np.ndarray:
    """util[theta, other]: type theta's expected utility from contract `other`."""
    values = contract_values(ctx, menu.posteriors)
    return values @ menu.weights.T - payment_matrix(ctx, menu)


def menu_revenue(ctx: Context, menu: Menu) -> float:
    return float(ctx.type_marginal @ np.diag(payment_matrix(ctx, menu)))


def _status(margin: float, slack: float, tol: float) -> str:
    if margin < slack - tol:
        return "violated"
    if margin <= slack + tol:
        return "binding"
    return "slack"


def verify_menu(ctx: Context, menu: Menu, slack: float = 0.0, tolerance: float | None = None) -> MenuReport:
    values = contract_values(ctx, menu.posteriors)
    pay = payment_matrix(ctx, menu)
    utility = values @ menu.weights.T - pay
    own = np.diag(utility).copy()
    outside = prior_values(ctx)
    scale = max(1.0, float(np.abs(values).max(initial=0.0)), float(np.abs(pay).max(initial=0.0)))
    tol = (tolerance if tolerance is not None else settings.DERIVED_TOLERANCE) * scale

    checks: list[ConstraintCheck] = []
    residual = float(np.abs(menu.weights @ menu.posteriors - menu.prior).max(initial=0.0))
    for t in range(ctx.n):
        row_residual = float(np.abs(menu.weights[t] @ menu.posteriors - menu.prior).max(initial=0.0))
        checks.append(
            ConstraintCheck(
                f"F[{t}]", "F", t, None, -row_residual, "binding" if row_residual <= 1e-8 else "violated"
            )
        )
    for t in range(ctx.n):
        margin = float(own[t] - outside[t])
        checks.append(ConstraintCheck(f"IR[{t}]", "IR", t, None, margin, _status(margin, slack, tol)))
    for t in range(ctx.n):
        for other in range(ctx.n):
            if other == t:
                continue
            margin = float(own[t] - utility[t, other])
            identical = menu.same_contract(t, other)
            status = "binding" if identical else _status(margin, slack, tol)
            checks.append(
                ConstraintCheck(f"IC[{t}][{other}]", "IC", t, other, margin, status, identical=identical)
            )

    consistency = 0.0
    if menu.kind == MenuKind.OUTCOMES and menu.payments is not None:
        shown = menu.weights > settings.SUPPORT_TOL
        consistency = float(
            np.abs(menu.scaled_payments[shown] - menu.weights[shown] * menu.payments[shown]).max(initial=0.0)
        )

    expected = np.diag(pay).copy()
    valid = (
        not any(c.status == "violated" for c in checks)
        and float(menu.weights.min(initial=0.0)) >= -tol
        and consistency <= settings.DERIVED_TOLERANCE * scale
    )
    return MenuReport(
        valid=valid,
        checks=tuple(checks),
        utilities=own,
        prior_values=outside,
        expected_payments=expected,
        observer_payments=ctx.type_marginal * expected,
        revenue=float(ctx.type_marginal @ expected),
        feasibility_residual=residual,
        consistency_residual=consistency,
    )


def revenue_report(ctx: Context, posteriors: PosteriorSet | None = None) -> RevenueReport:
    log = logging.LoggerAdapter(logger, {"context_name": ctx.name})
    posteriors = posteriors if posteriors is not None else interesting_posteriors(ctx)

    price, re = solve_sealed_envelope(ctx)
    mappings = solve_pricing_mappings(ctx, posteriors)
    outcomes_npt = solve_pricing_outcomes(ctx, posteriors, nonnegative_transfers=True)
    outcomes = solve_pricing_outcomes(ctx, posteriors)
    total = full_surplus(ctx)

    diagnostics: list[str] = []
    chain = [
        ("Re", re),
        ("Rc", mappings.revenue),
        ("Rp", outcomes_npt.revenue),
        ("R", outcomes.revenue),
        ("fullSurplus", total),
    ]
    for (low_name, low), (high_name, high) in zip(chain, chain[1:]):
        if low > high + settings.DUALITY_TOL * (1.0 + abs(high)):
            log.error(f"Revenue ordering broken: {low_name}={low!r} > {high_name}={high!r}")
            raise NumericFailure(
                f"Revenue ordering broken: {low_name}={low:.12g} exceeds {high_name}={high:.12g}",
                context=ctx.name,
            )

    fraction = outcomes.revenue / ctx.n
    for name, value in (("Rc", mappings.revenue), ("Re", re)):
        if value < fraction - settings.DUALITY_TOL * (1.0 + abs(fraction)):
            log.error(f"{name}={value!r} is below R/n={fraction!r}")
            raise NumericFailure(
                f"{name}={value:.12g} is below R/n={fraction:.12g}",
                context=ctx.name,
            )
        diagnostics.append(f"{name} >= R/n holds ({value:.12g} vs {fraction:.12g})")

    payments = None
    try:
        contract = full_surplus_contract(ctx)
        payments = contract.payments
        diagnostics.append(f"full-surplus contract condition number {contract.condition_number:.6g}")
        diagnostics.extend(contract.warnings)
    except RankDeficient as e:
        diagnostics.append(f"no full-surplus contract: {e.message}")

    menus = {
        "envelope": envelope_menu(ctx, price),
        "mappings": mappings.menu,
        "outcomes_npt": outcomes_npt.menu,
        "outcomes": outcomes.menu,
    }
    menu_reports = {key: verify_menu(ctx, menu) for key, menu in menus.items()}
    for key, check in menu_reports.items():
        if not check.valid:
            log.warning(f"{key} menu fails verification: {[c.name for c in check.violated()]}")

    REVENUE_REPORTS.inc()
    log.info(
        f"Revenue report: Re={re:.12g} Rc={mappings.revenue:.12g} Rp={outcomes_npt.revenue:.12g} "
        f"R={outcomes.revenue:.12g} fullSurplus={total:.12g}"
    )
    return RevenueReport(
        envelope_price=price,
        envelope_revenue=re,
        mappings_revenue=mappings.revenue,
        outcomes_npt_revenue=outcomes_npt.revenue,
        outcomes_revenue=outcomes.revenue,
        full_surplus=total,
        surpluses=surpluses(ctx),
        envelope_menu=menus["envelope"],
        mappings_menu=menus["mappings"],
        outcomes_npt_menu=menus["outcomes_npt"],
        outcomes_menu=menus["outcomes"],
        posterior_count=len(posteriors),
        full_surplus_payments=payments,
        diagnostics=tuple(diagnostics),
        menu_reports=menu_reports,
    )
