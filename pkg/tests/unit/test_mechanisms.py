# tests/unit/test_mechanisms.py
import numpy as np
import pytest

from app.core.exceptions import NumericFailure, RankDeficient
from app.models.menu import Menu, MenuKind
from app.worker.logic.catalog import two_key_box_uniform
from app.worker.logic.context import full_surplus, prior_values
from app.worker.logic.experiments import perturbed_context
from app.worker.logic.geometry import interesting_posteriors
from app.worker.logic.lp import solve
from app.worker.logic.mechanisms import (
    envelope_menu,
    full_surplus_contract,
    full_surplus_menu,
    menu_revenue,
    mappings_program,
    menu_utilities,
    outcomes_program,
    revenue_report,
    solve_pricing_mappings,
    solve_pricing_outcomes,
    solve_sealed_envelope,
    verify_menu,
)
from tests.conftest import random_context


def test_full_surplus_contract_of_two_key_box(two_key_box):
    contract = full_surplus_contract(two_key_box)
    np.testing.assert_allclose(contract.payments, [3.6, -0.4], atol=1e-9)
    assert contract.revenue == pytest.approx(1.6, abs=1e-9)
    assert contract.warnings == ()

    report = verify_menu(two_key_box, full_surplus_menu(two_key_box, contract))
    assert report.valid
    assert [c.status for c in report.by_kind("IR")] == ["binding", "binding"]
    np.testing.assert_allclose(report.utilities, prior_values(two_key_box), atol=1e-9)


def test_full_surplus_needs_full_rank(uniform_two_key_box):
    with pytest.raises(RankDeficient):
        full_surplus_contract(uniform_two_key_box)


def test_ill_conditioned_contract_warns():
    from app.worker.logic.catalog import two_key_box_perturbed

    contract = full_surplus_contract(two_key_box_perturbed())
    assert contract.condition_number > 1e4
    assert contract.warnings
    assert contract.revenue == pytest.approx(1.99992, rel=1e-6)


def test_sealed_envelope_on_uniform_box(uniform_two_key_box):
    price, revenue = solve_sealed_envelope(uniform_two_key_box)
    assert (price, revenue) == pytest.approx((1.5, 1.5))
    menu = envelope_menu(uniform_two_key_box, price)
    assert menu.kind == MenuKind.MAPPINGS
    assert menu_revenue(uniform_two_key_box, menu) == pytest.approx(1.5)
    assert verify_menu(uniform_two_key_box, menu).valid


def test_pricing_mappings_on_uniform_box(uniform_two_key_box):
    posteriors = interesting_posteriors(uniform_two_key_box)
    menu, revenue = solve_pricing_mappings(uniform_two_key_box, posteriors)
    assert revenue == pytest.approx(1.5, abs=1e-8)
    assert full_surplus(uniform_two_key_box) == pytest.approx(2.0)
    assert verify_menu(uniform_two_key_box, menu).valid


def test_nonnegative_transfers_stay_nonnegative(interactive_gap_context):
    posteriors = interesting_posteriors(interactive_gap_context)
    menu, revenue = solve_pricing_outcomes(interactive_gap_context, posteriors, nonnegative_transfers=True)
    assert revenue == pytest.approx(0.5, abs=1e-9)
    assert menu.scaled_payments.min() >= -1e-12
    program = outcomes_program(interactive_gap_context, posteriors, nonnegative_transfers=True)
    assert not any(v.is_free for v in program.variables)


def test_revenue_chain_is_ordered(two_key_box):
    report = revenue_report(two_key_box)
    chain = [report.re, report.rc, report.rp, report.r, report.full_surplus]
    assert all(low <= high + 1e-9 for low, high in zip(chain, chain[1:]))
    assert report.re == pytest.approx(1.2)
    assert report.r == pytest.approx(1.6)
    assert set(report.menu_reports) == {"envelope", "mappings", "outcomes_npt", "outcomes"}
    assert all(r.valid for r in report.menu_reports.values())
    assert any("condition number" in line for line in report.diagnostics)


def test_verify_menu_flags_overcharging(two_key_box):
    contract = full_surplus_contract(two_key_box)
    menu = full_surplus_menu(two_key_box, contract)
    greedy = Menu.outcomes(
        menu.posteriors, menu.weights, menu.scaled_payments + 0.1, menu.prior, labels=menu.labels
    )
    report = verify_menu(two_key_box, greedy)
    assert not report.valid
    assert {c.name for c in report.violated()} == {"IR[0]", "IR[1]"}


def test_verify_menu_reports_both_payment_frames(two_key_box):
    report = verify_menu(two_key_box, full_surplus_menu(two_key_box, full_surplus_contract(two_key_box)))
    np.testing.assert_allclose(report.expected_payments, [1.2, 2.0], atol=1e-9)
    np.testing.assert_allclose(report.observer_payments, [0.6, 1.0], atol=1e-9)
    assert report.revenue == pytest.approx(1.6)


def test_menu_utilities_diagonal_is_own_contract(two_key_box):
    menu = full_surplus_menu(two_key_box, full_surplus_contract(two_key_box))
    utility = menu_utilities(two_key_box, menu)
    # both types receive the same contract
    np.testing.assert_allclose(utility[:, 0], utility[:, 1])


def test_broken_revenue_chain_raises(two_key_box, monkeypatch):
    from app.worker.logic import mechanisms

    monkeypatch.setattr(mechanisms, "full_surplus", lambda ctx: 0.0)
    with pytest.raises(NumericFailure, match="Revenue ordering broken"):
        revenue_report(two_key_box)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_full_rank_contexts_extract_full_surplus(seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(2, 5))
    ctx = random_context(rng, n=size, m=size, actions=int(rng.integers(2, 4)), full_rank=True)
    _, revenue = solve_pricing_outcomes(ctx, interesting_posteriors(ctx))
    assert abs(revenue - full_surplus(ctx)) <= 1e-6
    assert abs(full_surplus_contract(ctx).revenue - revenue) <= 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_independent_contexts_gain_nothing_from_outcome_pricing(seed):
    rng = np.random.default_rng(1000 + seed)
    ctx = random_context(
        rng,
        n=int(rng.integers(2, 5)),
        m=int(rng.integers(2, 4)),
        actions=int(rng.integers(2, 5)),
        independent=True,
    )
    posteriors = interesting_posteriors(ctx)
    _, mappings = solve_pricing_mappings(ctx, posteriors)
    _, outcomes = solve_pricing_outcomes(ctx, posteriors)
    assert abs(mappings - outcomes) <= 1e-7


def test_mappings_program_layout(two_key_box):
    posteriors = interesting_posteriors(two_key_box)
    program = mappings_program(two_key_box, posteriors)
    k = len(posteriors)
    assert program.num_variables == 2 * k + 2
    assert {"IR[0]", "IR[1]", "IC[0][1]", "IC[1][0]", "F[0][0]", "F[1][1]"} <= set(program.row_names)
    assert program.objective[program.column("t[0]")] == pytest.approx(0.5)
    assert not any(v.is_free for v in program.variables)

    _, rc = solve_pricing_mappings(two_key_box, posteriors)
    assert solve(program).objective == pytest.approx(rc, abs=1e-9)


def test_envelope_below_a_type_share_of_revenue_raises(two_key_box, monkeypatch):
    from app.worker.logic import mechanisms

    monkeypatch.setattr(mechanisms, "solve_sealed_envelope", lambda ctx: (0.0, 0.0))
    with pytest.raises(NumericFailure, match="below R/n"):
        revenue_report(two_key_box)


def test_near_uniform_box_reaches_full_surplus_along_the_perturbation():
    eta = np.array([[1.0, -1.0], [-1.0, 1.0]])
    ctx = perturbed_context(two_key_box_uniform(), eta, 1e-5)
    report = revenue_report(ctx)
    assert report.full_surplus == pytest.approx(1.99992, rel=1e-9)
    assert report.r == pytest.approx(report.full_surplus, rel=1e-7)
    assert report.rc == pytest.approx(1.5, abs=1e-3)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_simple_mechanisms_keep_a_type_share_of_revenue(seed):
    rng = np.random.default_rng(2000 + seed)
    n = int(rng.integers(2, 4))
    ctx = random_context(rng, n=n, m=int(rng.integers(2, 4)), actions=int(rng.integers(2, 4)))
    report = revenue_report(ctx)
    assert report.rc >= report.r / n - 1e-7
    assert report.re >= report.r / n - 1e-7
    assert any("Rc >= R/n holds" in line for line in report.diagnostics)
