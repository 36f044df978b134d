# tests/unit/test_transforms.py
import numpy as np
import pytest

from app.core.exceptions import InvalidInput, RequiresIndependence
from app.models.menu import Menu
from app.models.protocol import NodeKind, StrategyMode
from app.worker.logic import catalog
from app.worker.logic.mechanisms import (
    envelope_menu,
    full_surplus_contract,
    full_surplus_menu,
    menu_utilities,
    payment_matrix,
    verify_menu,
)
from app.worker.logic.protocol import best_response, evaluate, optimal_strategies, parse_tree
from app.worker.logic.protocol_transforms import (
    menu_to_protocol,
    required_deposit,
    to_pricing_mappings,
    to_pricing_outcomes,
    to_revelation,
    truthful_strategies,
    wrap_with_deposit,
)
from tests.conftest import random_context, random_tree_spec


@pytest.fixture
def interactive_gap_tree(interactive_gap_context):
    return catalog.interactive_gap_tree(interactive_gap_context)


def _committed_play(ctx, tree):
    strategies = optimal_strategies(ctx, tree, StrategyMode.COMMITTED)
    return strategies, evaluate(ctx, tree, strategies)


def test_revelation_tree_preserves_outcomes(interactive_gap_context, interactive_gap_tree):
    strategies, original = _committed_play(interactive_gap_context, interactive_gap_tree)
    revelation = to_revelation(interactive_gap_context, interactive_gap_tree, strategies)
    assert revelation.root.labels == interactive_gap_context.theta_labels

    truthful = evaluate(interactive_gap_context, revelation, truthful_strategies(interactive_gap_context))
    np.testing.assert_allclose(truthful.utilities, original.utilities, atol=1e-12)
    np.testing.assert_allclose(truthful.expected_transfers, original.expected_transfers, atol=1e-12)
    for theta in range(interactive_gap_context.n):
        response = best_response(interactive_gap_context, revelation, theta, StrategyMode.COMMITTED)
        assert response.utility == pytest.approx(original.utilities[theta], abs=1e-12)


def test_transforms_need_committed_strategies(interactive_gap_context, interactive_gap_tree):
    uncommitted = optimal_strategies(interactive_gap_context, interactive_gap_tree, StrategyMode.UNCOMMITTED)
    with pytest.raises(InvalidInput):
        to_pricing_outcomes(interactive_gap_context, interactive_gap_tree, uncommitted)


def test_mappings_form_needs_independence(interactive_gap_context, interactive_gap_tree):
    strategies, _ = _committed_play(interactive_gap_context, interactive_gap_tree)
    with pytest.raises(RequiresIndependence):
        to_pricing_mappings(interactive_gap_context, interactive_gap_tree, strategies)


def test_outcomes_form_of_interactive_gap(interactive_gap_context, interactive_gap_tree):
    strategies, original = _committed_play(interactive_gap_context, interactive_gap_tree)
    menu = to_pricing_outcomes(interactive_gap_context, interactive_gap_tree, strategies)
    np.testing.assert_allclose(np.diag(menu_utilities(interactive_gap_context, menu)), original.utilities, atol=1e-12)
    report = verify_menu(interactive_gap_context, menu)
    assert report.revenue == pytest.approx(original.revenue)
    assert report.feasibility_residual <= 1e-12


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(15))
def test_independent_protocols_become_fixed_price_menus(seed):
    rng = np.random.default_rng(500 + seed)
    ctx = random_context(rng, n=int(rng.integers(2, 4)), m=int(rng.integers(2, 4)), actions=3, independent=True)
    tree = parse_tree(random_tree_spec(rng, ctx.omega_labels, max_depth=3, max_decisions=4), ctx)
    strategies, original = _committed_play(ctx, tree)
    menu = to_pricing_mappings(ctx, tree, strategies)
    assert np.max(np.abs(np.diag(menu_utilities(ctx, menu)) - original.utilities)) <= 1e-10
    assert np.max(np.abs(np.diag(payment_matrix(ctx, menu)) - original.expected_transfers)) <= 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(15))
def test_correlated_protocols_become_outcome_menus(seed):
    rng = np.random.default_rng(700 + seed)
    ctx = random_context(rng, n=int(rng.integers(2, 4)), m=int(rng.integers(2, 4)), actions=3)
    tree = parse_tree(random_tree_spec(rng, ctx.omega_labels, max_depth=3, max_decisions=4), ctx)
    strategies, original = _committed_play(ctx, tree)
    menu = to_pricing_outcomes(ctx, tree, strategies)
    assert np.max(np.abs(np.diag(menu_utilities(ctx, menu)) - original.utilities)) <= 1e-10
    assert np.max(np.abs(np.diag(payment_matrix(ctx, menu)) - original.expected_transfers)) <= 1e-10


def test_full_surplus_menu_as_a_protocol(two_key_box):
    menu = full_surplus_menu(two_key_box, full_surplus_contract(two_key_box))
    tree = menu_to_protocol(menu)
    assert tree.root.labels == ("contract[theta1]", "decline")
    result = evaluate(two_key_box, tree, optimal_strategies(two_key_box, tree, StrategyMode.COMMITTED))
    np.testing.assert_allclose(result.utilities, verify_menu(two_key_box, menu).utilities, atol=1e-9)
    assert result.revenue == pytest.approx(1.6)


def test_envelope_menu_as_a_protocol(uniform_two_key_box):
    tree = menu_to_protocol(envelope_menu(uniform_two_key_box, 1.5))
    first = tree.node(tree.root.children[0])
    assert first.kind == NodeKind.TRANSFER
    assert first.amount == 1.5
    result = evaluate(uniform_two_key_box, tree, optimal_strategies(uniform_two_key_box, tree, StrategyMode.COMMITTED))
    assert result.revenue == pytest.approx(1.5)


def test_hidden_charges_cannot_become_a_protocol(two_key_box):
    menu = Menu.outcomes(
        [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
        [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]],
        [[0.1, 0.0, -0.5], [0.5, 0.5, 0.0]],
        two_key_box.prior,
    )
    with pytest.raises(InvalidInput, match="never shows"):
        menu_to_protocol(menu)


def test_required_deposit_covers_the_costliest_path(interactive_gap_tree):
    assert required_deposit(interactive_gap_tree) == pytest.approx(1.8)


def test_deposit_makes_walking_away_pointless(interactive_gap_context, interactive_gap_tree):
    _, committed = _committed_play(interactive_gap_context, interactive_gap_tree)
    wrapped = wrap_with_deposit(interactive_gap_tree, required_deposit(interactive_gap_tree))
    assert wrapped.root.name == "deposit"
    assert len(wrapped.leaves) == len(interactive_gap_tree.leaves)

    strategies = optimal_strategies(interactive_gap_context, wrapped, StrategyMode.UNCOMMITTED)
    result = evaluate(interactive_gap_context, wrapped, strategies)
    np.testing.assert_allclose(result.utilities, committed.utilities, atol=1e-9)
    np.testing.assert_allclose(result.expected_transfers, committed.expected_transfers, atol=1e-9)
    assert not any(stop.defected for outcome in result.outcomes for stop in outcome.stops)
