# app/worker/logic/protocol_transforms.py
"""Constructive rewrites between protocols and menus."""
import logging
from typing import Mapping

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidInput, RequiresIndependence
from app.models.context import Context
from app.models.menu import Menu, MenuKind
from app.models.protocol import BuyerStrategy, NodeKind, ProtocolTree, StrategyMode, TreeAssembler

logger = logging.getLogger(__name__)

_POSTERIOR_TOL = 1e-12


def _signal_count(tree: ProtocolTree, default: int = 1) -> int:
    return next((node.psi.shape[0] for node in tree.nodes if node.psi is not None), default)


def _committed(strategies: Mapping[int, BuyerStrategy], n: int) -> Mapping[int, BuyerStrategy]:
    for t in range(n):
        if t not in strategies:
            raise InvalidInput(f"No strategy supplied for type {t}")
        if strategies[t].mode != StrategyMode.COMMITTED:
            raise InvalidInput("Transforms need committed strategies")
    return strategies


def to_revelation(ctx: Context, tree: ProtocolTree, strategies: Mapping[int, BuyerStrategy]) -> ProtocolTree:
    """Root buyer node whose branch theta replays the protocol with theta's choices baked in."""
    strategies = _committed(strategies, ctx.n)
    assembler = TreeAssembler(ctx.m)

    def simulate(node_id: int, strategy: BuyerStrategy) -> int:
        node = tree.node(node_id)
        if node.kind == NodeKind.LEAF:
            return assembler.leaf(node.name)
        if node.kind == NodeKind.TRANSFER:
            return assembler.transfer(node.amount, simulate(node.children[0], strategy), node.name)
        if node.kind == NodeKind.SELLER:
            return assembler.seller(node.psi, [simulate(c, strategy) for c in node.children], node.name)
        choice = strategy.choice(node_id)
        return simulate(node.children[choice if choice is not None else 0], strategy)

    branches = [simulate(0, strategies[t]) for t in range(ctx.n)]
    return assembler.build(assembler.buyer(branches, ctx.theta_labels, name="report"))


def truthful_strategies(ctx: Context) -> dict[int, BuyerStrategy]:
    """Type theta reports theta at the root of a revelation tree."""
    return {t: BuyerStrategy(StrategyMode.COMMITTED, {0: t}) for t in range(ctx.n)}


def _leaf_distribution(tree: ProtocolTree, strategy: BuyerStrategy, m: int) -> list[tuple[np.ndarray, float]]:
    """(lambda, tau) for every leaf reached under the strategy, lambda per signal."""
    reached: list[tuple[np.ndarray, float]] = []

    def walk(node_id: int, likelihood: np.ndarray, paid: float) -> None:
        node = tree.node(node_id)
        if node.kind == NodeKind.LEAF:
            reached.append((likelihood, paid))
        elif node.kind == NodeKind.SELLER:
            for j, child in enumerate(node.children):
                walk(child, likelihood * node.psi[:, j], paid)
        elif node.kind == NodeKind.TRANSFER:
            walk(node.children[0], likelihood, paid + node.amount)
        else:
            choice = strategy.choice(node_id)
            walk(node.children[choice if choice is not None else 0], likelihood, paid)

    walk(0, np.ones(m), 0.0)
    return reached


class _PosteriorCollector:
    def __init__(self, m: int):
        self.points = np.empty((0, m))

    def index(self, q: np.ndarray) -> int:
        if self.points.shape[0]:
            distance = np.abs(self.points - q).max(axis=1)
            best = int(np.argmin(distance))
            if distance[best] <= _POSTERIOR_TOL:
                return best
        self.points = np.vstack([self.points, q])
        return self.points.shape[0] - 1


def _leaf_lotteries(ctx: Context, tree: ProtocolTree, strategies: Mapping[int, BuyerStrategy]):
    """Observer posteriors of reached leaves, with per-type weights and scaled payments."""
    collector = _PosteriorCollector(ctx.m)
    entries = []
    for t in range(ctx.n):
        for likelihood, paid in _leaf_distribution(tree, strategies[t], ctx.m):
            weight = float(ctx.prior @ likelihood)
            if weight <= 0:
                continue
            entries.append((t, collector.index(ctx.prior * likelihood / weight), weight, paid))
    weights = np.zeros((ctx.n, collector.points.shape[0]))
    scaled = np.zeros_like(weights)
    for t, j, weight, paid in entries:
        weights[t, j] += weight
        scaled[t, j] += weight * paid
    return collector.points, weights, scaled


def to_pricing_mappings(ctx: Context, tree: ProtocolTree, strategies: Mapping[int, BuyerStrategy]) -> Menu:
    """Each type buys the leaf distribution it induced, at its expected payment.

    Sound only for independent types: the same lottery then looks the same to
    every type.
    """
    if not ctx.is_independent:
        raise RequiresIndependence("Pricing-mappings form needs independent types and signals")
    strategies = _committed(strategies, ctx.n)
    points, weights, scaled = _leaf_lotteries(ctx, tree, strategies)
    prices = scaled.sum(axis=1)
    return Menu.mappings(points, weights, prices, ctx.prior, ctx.theta_labels)


def to_pricing_outcomes(ctx: Context, tree: ProtocolTree, strategies: Mapping[int, BuyerStrategy]) -> Menu:
    """Each type gets its leaf distribution and pays the leaf's path total on arrival."""
    strategies = _committed(strategies, ctx.n)
    points, weights, scaled = _leaf_lotteries(ctx, tree, strategies)
    payments = np.full(weights.shape, np.nan)
    shown = weights > 0
    payments[shown] = scaled[shown] / weights[shown]
    return Menu.outcomes(points, weights, scaled, ctx.prior, payments, ctx.theta_labels)


def _prescriptions(menu: Menu, theta: int, support: np.ndarray) -> np.ndarray:
    """psi[w, j] = P(show posterior j | w) for the lottery of `theta` on `support`."""
    prior = menu.prior
    weights = menu.weights[theta, support]
    psi = np.empty((prior.size, support.size))
    positive = prior > 0
    psi[positive] = (menu.posteriors[support][:, positive] * weights[:, None]).T / prior[positive, None]
    psi[~positive] = weights / weights.sum()
    return psi / psi.sum(axis=1, keepdims=True)


def _is_null(menu: Menu, theta: int) -> bool:
    support = menu.support(theta)
    if support.size != 1 or np.abs(menu.posteriors[support[0]] - menu.prior).max() > settings.DERIVED_TOLERANCE:
        return False
    if menu.kind == MenuKind.MAPPINGS:
        return abs(menu.prices[theta]) <= settings.SUPPORT_TOL
    return abs(menu.scaled_payments[theta, support[0]]) <= settings.SUPPORT_TOL


def _outcome_payments(menu: Menu, theta: int, support: np.ndarray) -> np.ndarray:
    hidden = np.setdiff1d(np.arange(menu.n_posteriors), support)
    if np.any(np.abs(menu.scaled_payments[theta, hidden]) > settings.SUPPORT_TOL):
        raise InvalidInput(
            f"Contract {menu.labels[theta]} charges at posteriors it never shows; recover explicit transfers first"
        )
    if menu.payments is not None and np.all(np.isfinite(menu.payments[theta, support])):
        return menu.payments[theta, support]
    return menu.scaled_payments[theta, support] / menu.weights[theta, support]


def menu_to_protocol(menu: Menu) -> ProtocolTree:
    """Root buyer choice among the distinct contracts, plus a way out.

    Mappings contracts charge first and then draw the signal; outcomes
    contracts draw first and charge according to what was shown.
    """
    m = menu.prior.size
    assembler = TreeAssembler(m)
    branches, labels = [], []
    representatives: list[int] = []
    has_exit = False
    for theta in range(menu.n_types):
        if any(menu.same_contract(theta, r) for r in representatives):
            continue
        representatives.append(theta)
        label = f"contract[{menu.labels[theta]}]"
        if _is_null(menu, theta):
            branches.append(assembler.leaf(name=label))
            labels.append(label)
            has_exit = True
            continue

        support = menu.support(theta)
        psi = _prescriptions(menu, theta, support)
        if menu.kind == MenuKind.MAPPINGS:
            node = assembler.seller(psi, [assembler.leaf() for _ in support])
            price = float(menu.prices[theta])
            if price != 0.0:
                node = assembler.transfer(price, node)
        else:
            payments = _outcome_payments(menu, theta, support)
            children = [assembler.transfer(t, assembler.leaf()) if t != 0.0 else assembler.leaf() for t in payments]
            node = assembler.seller(psi, children)
        branches.append(node)
        labels.append(label)

    if not has_exit:
        branches.append(assembler.leaf(name="decline"))
        labels.append("decline")
    return assembler.build(assembler.buyer(branches, labels, name="menu"))


def wrap_with_deposit(tree: ProtocolTree, deposit: float) -> ProtocolTree:
    """Collect `deposit` up front and hand it back just before every leaf."""
    assembler = TreeAssembler(_signal_count(tree))

    def copy(node_id: int) -> int:
        node = tree.node(node_id)
        if node.kind == NodeKind.LEAF:
            return assembler.transfer(-deposit, assembler.leaf(node.name), name="rebate")
        children = [copy(c) for c in node.children]
        if node.kind == NodeKind.TRANSFER:
            return assembler.transfer(node.amount, children[0], node.name)
        if node.kind == NodeKind.SELLER:
            return assembler.seller(node.psi, children, node.name)
        return assembler.buyer(children, node.labels, node.name)

    return assembler.build(assembler.transfer(deposit, copy(0), name="deposit"))


def required_deposit(tree: ProtocolTree) -> float:
    """One more than the largest total of positive transfers along any path."""

    def worst(node_id: int) -> float:
        node = tree.node(node_id)
        below = max((worst(c) for c in node.children), default=0.0)
        return below + max(node.amount, 0.0) if node.kind == NodeKind.TRANSFER else below

    return 1.0 + worst(0)
