# tests/unit/test_menu_ops.py
import numpy as np
import pytest

from app.core.exceptions import InvalidInput, SlackRequired
from app.models.menu import Menu
from app.worker.logic import catalog
from app.worker.logic.geometry import interesting_posteriors
from app.worker.logic.mechanisms import (
    envelope_menu,
    full_surplus_contract,
    full_surplus_menu,
    menu_revenue,
    solve_pricing_mappings,
    solve_pricing_outcomes,
    verify_menu,
)
from app.worker.logic.menu_ops import make_strict, recover_transfers, reduce_support

CORNERS_AND_PRIOR = [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]


@pytest.fixture
def full_surplus_box_menu(two_key_box):
    return full_surplus_menu(two_key_box, full_surplus_contract(two_key_box))


@pytest.fixture
def gapped_outcomes_menu(two_key_box):
    """theta1 keeps the prior for a rebate, theta2 sees the door for 1.
    Every IR and IC margin is slack, but both contracts skip a posterior."""
    weights = [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]]
    scaled = [[0.0, 0.0, -0.5], [0.5, 0.5, 0.0]]
    return Menu.outcomes(CORNERS_AND_PRIOR, weights, scaled, two_key_box.prior, labels=two_key_box.theta_labels)


def test_reduce_support_keeps_revenue_and_bounds_support(two_key_box):
    menu, revenue = solve_pricing_mappings(two_key_box, interesting_posteriors(two_key_box))
    reduced = reduce_support(two_key_box, menu)
    assert max(reduced.support_sizes()) <= two_key_box.m + two_key_box.n - 1
    assert menu_revenue(two_key_box, reduced) >= revenue - 1e-8
    assert verify_menu(two_key_box, reduced).valid


def test_reduce_support_rejects_outcomes_menus(two_key_box, full_surplus_box_menu):
    with pytest.raises(InvalidInput):
        reduce_support(two_key_box, full_surplus_box_menu)


def test_make_strict_scales_payments(two_key_box, full_surplus_box_menu):
    strict = make_strict(two_key_box, full_surplus_box_menu, 0.1)
    assert menu_revenue(two_key_box, strict) == pytest.approx(1.44)
    report = verify_menu(two_key_box, strict)
    assert report.valid
    assert [c.margin > 0 for c in report.by_kind("IR")] == [True, True]
    np.testing.assert_allclose(strict.payments, 0.9 * full_surplus_box_menu.payments)


def test_make_strict_with_zero_epsilon_is_identity(two_key_box, full_surplus_box_menu):
    assert make_strict(two_key_box, full_surplus_box_menu, 0.0) is full_surplus_box_menu


@pytest.mark.parametrize("epsilon", [1.0, -0.2, 1.5])
def test_make_strict_rejects_epsilon_outside_unit_interval(two_key_box, full_surplus_box_menu, epsilon):
    with pytest.raises(InvalidInput):
        make_strict(two_key_box, full_surplus_box_menu, epsilon)


def test_recover_transfers_divides_when_every_weight_is_positive(two_key_box, full_surplus_box_menu):
    recovered = recover_transfers(two_key_box, full_surplus_box_menu)
    np.testing.assert_allclose(recovered.payments, [[3.6, -0.4], [3.6, -0.4]], atol=1e-9)


def test_recover_transfers_drops_unused_posteriors(two_key_box, full_surplus_box_menu):
    weights = np.hstack([full_surplus_box_menu.weights, np.zeros((2, 1))])
    scaled = np.hstack([full_surplus_box_menu.scaled_payments, np.zeros((2, 1))])
    padded = Menu.outcomes(CORNERS_AND_PRIOR, weights, scaled, two_key_box.prior)
    recovered = recover_transfers(two_key_box, padded)
    assert recovered.n_posteriors == 2
    assert np.all(np.isfinite(recovered.payments))


def test_recover_transfers_blends_toward_the_prior(two_key_box, gapped_outcomes_menu):
    before = menu_revenue(two_key_box, gapped_outcomes_menu)
    recovered = recover_transfers(two_key_box, gapped_outcomes_menu)
    assert before == pytest.approx(0.25)
    assert np.all(recovered.weights > 0)
    assert np.all(np.isfinite(recovered.payments))
    assert menu_revenue(two_key_box, recovered) == pytest.approx(before, abs=1e-12)
    report = verify_menu(two_key_box, recovered)
    assert report.valid
    assert report.consistency_residual <= 1e-12


def test_recover_transfers_needs_slack(two_key_box, gapped_outcomes_menu):
    scaled = gapped_outcomes_menu.scaled_payments.copy()
    scaled[0, 2] = 0.0  # theta1 now gets exactly its prior value
    tight = gapped_outcomes_menu.with_changes(scaled_payments=scaled)
    with pytest.raises(SlackRequired) as excinfo:
        recover_transfers(two_key_box, tight)
    assert "IR[0]" in excinfo.value.details["constraints"]


def test_recover_transfers_rejects_mappings_menus(uniform_two_key_box):
    with pytest.raises(InvalidInput):
        recover_transfers(uniform_two_key_box, envelope_menu(uniform_two_key_box, 1.5))


@pytest.mark.parametrize("name", ["two-key-box", "two-key-box-uniform", "interactive-gap", "quadratic-support"])
@pytest.mark.parametrize("solver", [solve_pricing_mappings, solve_pricing_outcomes])
def test_make_strict_leaves_every_incentive_constraint_slack(name, solver):
    ctx = catalog.CONTEXTS[name]()
    menu, revenue = solver(ctx, interesting_posteriors(ctx))
    strict = make_strict(ctx, menu, 0.01)
    assert menu_revenue(ctx, strict) == pytest.approx(0.99 * revenue, abs=1e-9)
    for check in verify_menu(ctx, strict).by_kind("IC"):
        assert check.identical or check.margin > 0, check.name


def test_make_strict_moves_an_indifferent_type_onto_the_dearer_contract(two_key_box):
    """theta1 pays 0 for nothing or 1.2 for the door and values both equally."""
    weights = [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]]
    cheap = Menu.outcomes(CORNERS_AND_PRIOR, weights, [[0.0, 0.0, 0.0], [0.6, 0.6, 0.0]], two_key_box.prior)
    strict = make_strict(two_key_box, cheap, 0.1)
    assert strict.same_contract(0, 1)
    assert menu_revenue(two_key_box, strict) == pytest.approx(0.9 * 1.2)
