# app/worker/logic/fixtures.py
"""Hermetic regression suite over the reference contexts.

Each fixture bundles a context (and sometimes a protocol tree) with
expected values. A check passes when |actual - expected| is within
`tolerance * max(1, |expected|)`, or when the one-sided comparison holds
within that slack.
"""
import fnmatch
import functools
import logging
from typing import Callable, Iterable

import numpy as np

from app.core.exceptions import InfomechError
from app.models.fixtures import CheckOutcome, Comparison, Expectation, FixtureCase, FixtureRun, Source
from app.models.protocol import StrategyMode
from app.worker.logic import catalog
from app.worker.logic.context import surpluses
from app.worker.logic.experiments import gap_experiment
from app.worker.logic.geometry import grid_refinement, interesting_posteriors
from app.worker.logic.lp import duality_gap
from app.worker.logic.mechanisms import (
    full_surplus_contract,
    full_surplus_menu,
    mappings_program,
    menu_revenue,
    outcomes_program,
    revenue_report,
    solve_pricing_mappings,
    solve_pricing_outcomes,
    verify_menu,
)
from app.worker.logic.menu_ops import make_strict, reduce_support
from app.worker.logic.protocol import best_response, evaluate, node_likelihood, node_posterior
from app.worker.logic.protocol_transforms import menu_to_protocol, required_deposit, wrap_with_deposit

logger = logging.getLogger(__name__)

# Every fixture the suite must carry; dropping one fails the manifest test.
FIXTURE_MANIFEST = (
    "two-key-box",
    "two-key-box-uniform",
    "two-key-box-perturbed",
    "interactive-gap",
    "quadratic-support",
    "envelope-gap",
    "side-channel-gap",
    "iid-gap",
)

GRID_RESOLUTIONS = (8, 16, 32)
# six signals: finer lattices run to tens of thousands of posteriors
COARSE_GRID_RESOLUTIONS = (2, 4)


def _expect(label, expected, compute, tolerance=1e-9, source=Source.DERIVED, comparison=Comparison.EQ) -> Expectation:
    return Expectation(label, float(expected), compute, tolerance, source, comparison)


def _lp_checks(ctx, posteriors: Callable) -> list[Expectation]:
    """Strong duality on both menu programs and support reduction that keeps revenue."""

    def gap(program) -> float:
        primal, dual = duality_gap(program)
        return abs(primal - dual) / max(1.0, abs(primal))

    @functools.cache
    def mappings():
        return solve_pricing_mappings(ctx, posteriors())

    checks = [
        _expect("mappings duality gap", 0.0, lambda: gap(mappings_program(ctx, posteriors())), 1e-7),
        _expect("outcomes duality gap", 0.0, lambda: gap(outcomes_program(ctx, posteriors())), 1e-7),
        _expect(
            "support reduction keeps revenue",
            0.0,
            lambda: menu_revenue(ctx, reduce_support(ctx, mappings().menu)) - mappings().revenue,
            1e-8,
        ),
        _expect(
            "support within m + n - 1",
            ctx.m + ctx.n - 1,
            lambda: max(reduce_support(ctx, mappings().menu).support_sizes()),
            0.0,
            comparison=Comparison.LE,
        ),
    ]
    return checks


def _grid_checks(ctx, posteriors: Callable, resolutions: Iterable[int] = GRID_RESOLUTIONS) -> list[Expectation]:
    """The grid never beats the interesting posteriors."""

    def excess(resolution: int, nonnegative: bool | None) -> float:
        base = posteriors()
        grid = grid_refinement(base, resolution)
        if nonnegative is None:
            return solve_pricing_mappings(ctx, grid).revenue - solve_pricing_mappings(ctx, base).revenue
        return (
            solve_pricing_outcomes(ctx, grid, nonnegative).revenue
            - solve_pricing_outcomes(ctx, base, nonnegative).revenue
        )

    checks = []
    for resolution in resolutions:
        for label, flag in (("mappings", None), ("outcomes", False)):
            checks.append(
                _expect(
                    f"grid K={resolution} adds no {label} revenue",
                    0.0,
                    functools.partial(excess, resolution, flag),
                    1e-6,
                    comparison=Comparison.LE,
                )
            )
    return checks


def _deposit_check(ctx, menu: Callable) -> Expectation:
    """Deposit-wrapped menu protocol keeps each type's utility in uncommitted play."""

    def difference() -> float:
        tree = menu_to_protocol(menu())
        wrapped = wrap_with_deposit(tree, required_deposit(tree))
        worst = 0.0
        for t in range(ctx.n):
            committed = best_response(ctx, tree, t, StrategyMode.COMMITTED).utility
            uncommitted = best_response(ctx, wrapped, t, StrategyMode.UNCOMMITTED).utility
            worst = max(worst, abs(committed - uncommitted))
        return worst

    return _expect("deposit wrapping keeps utilities", 0.0, difference, 1e-9)


def two_key_box_fixture() -> FixtureCase:
    ctx = catalog.two_key_box()
    contract = functools.cache(lambda: full_surplus_contract(ctx))
    menu = functools.cache(lambda: full_surplus_menu(ctx, contract()))
    report = functools.cache(lambda: revenue_report(ctx))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))

    def binding_ir() -> float:
        return float(sum(c.status == "binding" for c in verify_menu(ctx, menu()).by_kind("IR")))

    expectations = [
        _expect("surplus theta1", 1.2, lambda: surpluses(ctx)[0], source=Source.PUBLISHED),
        _expect("surplus theta2", 2.0, lambda: surpluses(ctx)[1], source=Source.PUBLISHED),
        _expect("buyer posterior theta1 on omega1", 0.6, lambda: ctx.conditional[1, 0], source=Source.TRIVIAL),
        _expect("full-surplus payment omega0", 3.6, lambda: contract().payments[0], source=Source.PUBLISHED),
        _expect("full-surplus payment omega1", -0.4, lambda: contract().payments[1], source=Source.PUBLISHED),
        _expect("full-surplus revenue", 1.6, lambda: contract().revenue, source=Source.PUBLISHED),
        _expect("binding IR under full surplus", 2, binding_ir),
        _expect("strict menu revenue at epsilon 0.1", 1.44, lambda: menu_revenue(ctx, make_strict(ctx, menu(), 0.1))),
        _expect("Re", 1.2, lambda: report().re),
        _expect("R", 1.6, lambda: report().r),
        _deposit_check(ctx, menu),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase("two-key-box", ctx, tuple(expectations), description="Correlated two-door prize")


def two_key_box_uniform_fixture() -> FixtureCase:
    ctx = catalog.two_key_box_uniform()
    report = functools.cache(lambda: revenue_report(ctx))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    expectations = [
        _expect("surplus theta1", 1.5, lambda: surpluses(ctx)[0], source=Source.DERIVED),
        _expect("surplus theta2", 2.5, lambda: surpluses(ctx)[1], source=Source.DERIVED),
        _expect("Rc", 1.5, lambda: report().rc, 1e-8, Source.PUBLISHED),
        _expect("Re", 1.5, lambda: report().re, 1e-8),
        _expect("R", 1.5, lambda: report().r, 1e-8),
        _expect("full surplus", 2.0, lambda: report().full_surplus, 1e-8, Source.PUBLISHED),
        _deposit_check(ctx, lambda: report().envelope_menu),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase("two-key-box-uniform", ctx, tuple(expectations), description="Independent two-door prize")


def _cramer_payments(ctx) -> np.ndarray:
    """Independent 2 x 2 solve of sum_w t(w) mu(w, theta) = mu(theta) zeta(theta)."""
    (a, b), (c, d) = ctx.mu.T
    e, f = ctx.type_marginal * surpluses(ctx)
    det = a * d - b * c
    return np.array([(e * d - b * f) / det, (a * f - e * c) / det])


def two_key_box_perturbed_fixture() -> FixtureCase:
    ctx = catalog.two_key_box_perturbed()
    contract = functools.cache(lambda: full_surplus_contract(ctx))
    menu = functools.cache(lambda: full_surplus_menu(ctx, contract()))
    expected = _cramer_payments(ctx)

    def binding_ir() -> float:
        return float(sum(c.status == "binding" for c in verify_menu(ctx, menu()).by_kind("IR")))

    posteriors = functools.cache(lambda: interesting_posteriors(ctx))

    def gap_revenue() -> float:
        eta = np.array([[1.0, -1.0], [-1.0, 1.0]])
        return gap_experiment(catalog.two_key_box_uniform(), eta, [1e-5]).rows[-1].outcomes_revenue

    expectations = [
        _expect("full-surplus revenue", 1.99992, lambda: contract().revenue, 1e-6),
        _expect("full-surplus payment omega0", expected[0], lambda: contract().payments[0], 1e-6),
        _expect("full-surplus payment omega1", expected[1], lambda: contract().payments[1], 1e-6),
        _expect("binding IR under full surplus", 2, binding_ir),
        _expect(
            "condition number warning",
            1e4,
            lambda: contract().condition_number if contract().warnings else 0.0,
            0.0,
            comparison=Comparison.GE,
        ),
        _expect("R along the perturbation ray", 1.99992, gap_revenue, 1e-5),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase(
        "two-key-box-perturbed", ctx, tuple(expectations), description="Nearly independent two-door prize"
    )


def interactive_gap_fixture() -> FixtureCase:
    ctx = catalog.interactive_gap_context()
    tree = catalog.interactive_gap_tree(ctx)
    play = functools.cache(lambda: evaluate(ctx, tree, catalog.interactive_gap_strategies(tree)))
    report = functools.cache(lambda: revenue_report(ctx))
    contract = functools.cache(lambda: full_surplus_contract(ctx))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    root, t2 = tree.find(catalog.ROOT_NAME), tree.find("t2")

    def reach(theta: int) -> float:
        return float(ctx.conditional[:, theta] @ node_likelihood(tree, t2))

    def root_choice(theta: int) -> float:
        return float(best_response(ctx, tree, theta, StrategyMode.UNCOMMITTED).strategy.choice(root))

    expectations = [
        _expect("protocol revenue", 0.4665, lambda: play().revenue, source=Source.PUBLISHED),
        _expect("theta0 utility", 0.467, lambda: play().utilities[0]),
        _expect("theta1 utility", 0.6, lambda: play().utilities[1]),
        _expect("best-response revenue", 0.4665, lambda: sum(
            ctx.type_marginal[t] * best_response(ctx, tree, t, StrategyMode.UNCOMMITTED).expected_transfer
            for t in range(ctx.n)
        )),
        _expect("theta0 takes the left branch", 0, lambda: root_choice(0)),
        _expect("theta1 takes the right branch", 1, lambda: root_choice(1)),
        _expect("theta1 reaches t2", 0.5, lambda: reach(1)),
        _expect("theta0 posterior on omega1 at t2", 0.1, lambda: node_posterior(ctx, tree, 0, t2)[1], source=Source.PUBLISHED),
        _expect("theta1 posterior on omega1 at t2", 0.2, lambda: node_posterior(ctx, tree, 1, t2)[1], source=Source.PUBLISHED),
        _expect("Re", 0.4, lambda: report().re),
        _expect("Rc", 0.4, lambda: report().rc, source=Source.PUBLISHED),
        _expect("Rp", 0.5, lambda: report().rp, source=Source.PUBLISHED),
        _expect("R", 0.5, lambda: report().r),
        _expect("full-surplus payment omega0", 1.0, lambda: contract().payments[0], source=Source.PUBLISHED),
        _expect("full-surplus payment omega1", 0.0, lambda: contract().payments[1], source=Source.PUBLISHED),
        _deposit_check(ctx, lambda: full_surplus_menu(ctx, contract())),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase(
        "interactive-gap", ctx, tuple(expectations), tree=tree, description="Interactive protocol beats every menu"
    )


def quadratic_support_fixture() -> FixtureCase:
    ctx = catalog.quadratic_support()
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    reduced = functools.cache(lambda: reduce_support(ctx, solve_pricing_mappings(ctx, posteriors()).menu))

    def contains(q1: float) -> float:
        return float(posteriors().contains([1.0 - q1, q1]))

    expectations = [
        *(_expect(f"breakpoint {q:g} is interesting", 1, functools.partial(contains, q), 0.0, Source.TRIVIAL)
          for q in (0.0, 0.85, 0.9, 0.95, 1.0)),
        *(_expect(f"support size theta{t + 1}", t + 2, functools.partial(lambda t: reduced().support_sizes()[t], t), 0.0)
          for t in range(ctx.n)),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase(
        "quadratic-support", ctx, tuple(expectations), description="Optimal menu needs theta+1 posteriors per type"
    )


def envelope_gap_fixture() -> FixtureCase:
    ctx = catalog.envelope_gap()
    report = functools.cache(lambda: revenue_report(ctx))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    expectations = [
        _expect("Re", 1.0, lambda: report().re),
        _expect("Rc / Re", 2.0, lambda: report().rc / report().re, 0.0, comparison=Comparison.GE),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase("envelope-gap", ctx, tuple(expectations), description="Menus beat a posted price")


def side_channel_gap_fixture() -> FixtureCase:
    ctx = catalog.side_channel_gap()
    report = functools.cache(lambda: revenue_report(ctx))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    full = 3.0 / 0.111
    expectations = [
        _expect("full surplus", full, lambda: report().full_surplus),
        _expect("Rp", full, lambda: report().rp, 1e-8),
        _expect("R", full, lambda: report().r, 1e-8),
        _expect("Rp / Rc", 2.0, lambda: report().rp / report().rc, 0.0, comparison=Comparison.GE),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors, COARSE_GRID_RESOLUTIONS),
    ]
    return FixtureCase(
        "side-channel-gap", ctx, tuple(expectations), description="Signal-contingent charges beat fixed prices"
    )


def iid_gap_fixture() -> FixtureCase:
    ctx = catalog.iid_gap()
    table = functools.cache(lambda: gap_experiment(ctx, catalog.iid_gap_perturbation(ctx.n), [1e-5]))
    posteriors = functools.cache(lambda: interesting_posteriors(ctx))
    expectations = [
        _expect("R equals Rc without correlation", 0.0, lambda: table().rows[0].outcomes_revenue - table().rows[0].mappings_revenue, 1e-7),
        _expect("R reaches full surplus at t=1e-5", 0.0, lambda: table().rows[1].outcomes_revenue - table().rows[1].full_surplus, 1e-6),
        _expect(
            "Rc moves continuously",
            1e-3,
            lambda: abs(table().rows[1].mappings_revenue - table().rows[0].mappings_revenue),
            0.0,
            comparison=Comparison.LE,
        ),
        *_lp_checks(ctx, posteriors),
        *_grid_checks(ctx, posteriors),
    ]
    return FixtureCase("iid-gap", ctx, tuple(expectations), description="A tiny correlation unlocks full surplus")


FIXTURE_BUILDERS: dict[str, Callable[[], FixtureCase]] = {
    "two-key-box": two_key_box_fixture,
    "two-key-box-uniform": two_key_box_uniform_fixture,
    "two-key-box-perturbed": two_key_box_perturbed_fixture,
    "interactive-gap": interactive_gap_fixture,
    "quadratic-support": quadratic_support_fixture,
    "envelope-gap": envelope_gap_fixture,
    "side-channel-gap": side_channel_gap_fixture,
    "iid-gap": iid_gap_fixture,
}


def _judge(fixture: str, expectation: Expectation) -> CheckOutcome:
    try:
        actual = float(expectation.compute())
    except (InfomechError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logger.error(f"{fixture}: {expectation.label} raised {e}", exc_info=True, extra={"context_name": fixture})
        return CheckOutcome(
            fixture, expectation.label, expectation.expected, None, None, expectation.tolerance,
            expectation.source, expectation.comparison, False, error=f"{type(e).__name__}: {e}",
        )
    slack = expectation.tolerance * max(1.0, abs(expectation.expected))
    delta = actual - expectation.expected
    if expectation.comparison == Comparison.GE:
        passed = delta >= -slack
    elif expectation.comparison == Comparison.LE:
        passed = delta <= slack
    else:
        passed = abs(delta) <= slack
    return CheckOutcome(
        fixture, expectation.label, expectation.expected, actual, delta, expectation.tolerance,
        expectation.source, expectation.comparison, bool(passed and np.isfinite(actual)),
    )


# Alternative names accepted by select_fixtures, matched like fixture names.
FIXTURE_ALIASES: dict[str, str] = {
    "example-4.2": "two-key-box",
    "example-4.3": "two-key-box-uniform",
    "example-4.3-perturbed": "two-key-box-perturbed",
    "example-5.2": "interactive-gap",
    "example-b.2": "quadratic-support",
    "app-b-envelope": "envelope-gap",
    "app-d-rcrp": "side-channel-gap",
    "app-d-iid": "iid-gap",
}


def select_fixtures(pattern: str | None = None) -> list[str]:
    """Fixture names matching the glob `pattern` directly or through an alias."""
    if not pattern:
        return list(FIXTURE_BUILDERS)
    chosen = {name for name in FIXTURE_BUILDERS if fnmatch.fnmatchcase(name, pattern)}
    chosen.update(target for alias, target in FIXTURE_ALIASES.items() if fnmatch.fnmatchcase(alias, pattern))
    return [name for name in FIXTURE_BUILDERS if name in chosen]


def run_fixtures(pattern: str | None = None, cases: Iterable[FixtureCase] | None = None) -> FixtureRun:
    """Run every fixture whose name matches the glob `pattern` (all when empty)."""
    if cases is None:
        cases = [FIXTURE_BUILDERS[name]() for name in select_fixtures(pattern)]
    checks: list[CheckOutcome] = []
    names: list[str] = []
    for case in cases:
        log = logging.LoggerAdapter(logger, {"context_name": case.name})
        names.append(case.name)
        outcomes = [_judge(case.name, e) for e in case.expectations]
        failed = [o.label for o in outcomes if not o.passed]
        if failed:
            log.warning(f"Fixture {case.name}: {len(failed)} of {len(outcomes)} checks failed: {failed}")
        else:
            log.info(f"Fixture {case.name}: all {len(outcomes)} checks passed")
        checks.extend(outcomes)
    return FixtureRun(checks=tuple(checks), fixtures=tuple(names))
