# app/worker/logic/protocol.py
"""Exact evaluation of interactive protocols.

Every routine walks the tree depth-first carrying the unnormalised buyer
belief b(w) = mu(w | theta) * lambda(w), where lambda(w) is the probability
that the seller's draws lead to the current node given signal w. Since
v_theta is homogeneous, v_theta(b) is the expected value of acting at a node
weighted by the probability of reaching it, and 1'b is that probability.
"""
import itertools
import logging
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from app.core.config import settings
from app.core.exceptions import ComplexityLimit, InvalidInput, MissingDecision, NumericFailure, ZeroMass
from app.models.context import Context
from app.models.protocol import (
    DEFECT,
    BuyerStrategy,
    EvaluationResult,
    NodeKind,
    ProtocolTree,
    StopRecord,
    StrategyMode,
    TreeAssembler,
    TypeOutcome,
)

logger = logging.getLogger(__name__)


def parse_tree(data: Mapping, ctx: Context) -> ProtocolTree:
    """Build a tree from nested JSON node objects."""
    assembler = TreeAssembler(ctx.m)

    def build(node: Mapping, path: str) -> int:
        if not isinstance(node, Mapping) or "kind" not in node:
            raise InvalidInput(f"Node at {path} must be an object with a 'kind'")
        try:
            kind = NodeKind(node["kind"])
        except ValueError as e:
            raise InvalidInput(f"Unknown node kind {node['kind']!r} at {path}") from e
        name = node.get("name")

        if kind == NodeKind.LEAF:
            return assembler.leaf(name)
        if kind == NodeKind.TRANSFER:
            if "child" not in node:
                raise InvalidInput(f"Transfer node at {path} needs exactly one child")
            amount = float(node.get("amount", 0.0))
            if not np.isfinite(amount):
                raise InvalidInput(f"Transfer amount at {path} must be finite")
            return assembler.transfer(amount, build(node["child"], f"{path}/child"), name)
        if kind == NodeKind.BUYER:
            children = node.get("children")
            if isinstance(children, Mapping):
                labels, subtrees = list(children.keys()), list(children.values())
            elif isinstance(children, Sequence) and not isinstance(children, str):
                labels, subtrees = [str(i) for i in range(len(children))], list(children)
            else:
                raise InvalidInput(f"Buyer node at {path} needs children")
            if not subtrees:
                raise InvalidInput(f"Buyer node at {path} has no children")
            ids = [build(child, f"{path}/{label}") for label, child in zip(labels, subtrees)]
            return assembler.buyer(ids, labels, name)

        children = node.get("children")
        if not isinstance(children, Sequence) or not children:
            raise InvalidInput(f"Seller node at {path} needs a non-empty child list")
        psi_spec = node.get("psi")
        if not isinstance(psi_spec, Mapping) or set(psi_spec) != set(ctx.omega_labels):
            raise InvalidInput(f"Seller node at {path} needs one prescription per signal {list(ctx.omega_labels)}")
        psi = np.array([psi_spec[w] for w in ctx.omega_labels], dtype=float)
        if psi.shape != (ctx.m, len(children)):
            raise InvalidInput(f"Seller prescriptions at {path} must have {len(children)} entries per signal")
        if np.any(psi < 0) or np.any(np.abs(psi.sum(axis=1) - 1.0) > settings.LOAD_TOLERANCE):
            raise InvalidInput(f"Seller prescriptions at {path} must be distributions")
        ids = [build(child, f"{path}/{i}") for i, child in enumerate(children)]
        return assembler.seller(psi, ids, name)

    return assembler.build(build(data, "root"))


def tree_to_dict(tree: ProtocolTree, omega_labels: Sequence[str]) -> dict:
    def render(node_id: int) -> dict:
        node = tree.node(node_id)
        out: dict = {"kind": node.kind.value}
        if node.name:
            out["name"] = node.name
        if node.kind == NodeKind.TRANSFER:
            out["amount"] = node.amount
            out["child"] = render(node.children[0])
        elif node.kind == NodeKind.BUYER:
            out["children"] = {label: render(child) for label, child in zip(node.labels, node.children)}
        elif node.kind == NodeKind.SELLER:
            out["psi"] = {w: node.psi[i].tolist() for i, w in enumerate(omega_labels)}
            out["children"] = [render(child) for child in node.children]
        return out

    return render(0)


def _value(ctx: Context, theta: int, belief: np.ndarray) -> float:
    return float((belief @ ctx.u[theta]).max())


class BestResponse(NamedTuple):
    strategy: BuyerStrategy
    utility: float
    expected_transfer: float


def _pick(options: list[tuple[int, float, float]]) -> tuple[int, float, float]:
    """Highest utility; near-ties go to higher seller revenue, then lower child
    index with DEFECT ranked last."""
    top = max(u for _, u, _ in options)
    tol = settings.TIE_TOLERANCE * max(1.0, abs(top))
    near = [o for o in options if o[1] >= top - tol]
    richest = max(r for _, _, r in near)
    near = [o for o in near if o[2] >= richest - tol]
    return min(near, key=lambda o: (o[0] == DEFECT, o[0]))


def best_response(ctx: Context, tree: ProtocolTree, theta: int, mode: StrategyMode) -> BestResponse:
    prior = ctx.conditional[:, theta]
    choices: dict[int, int] = {}
    uncommitted = mode == StrategyMode.UNCOMMITTED

    def optimise(node_id: int, belief: np.ndarray) -> tuple[float, float]:
        node = tree.node(node_id)
        if node.kind == NodeKind.LEAF:
            return _value(ctx, theta, belief), 0.0
        if node.kind == NodeKind.SELLER:
            utility = revenue = 0.0
            for j, child in enumerate(node.children):
                u, r = optimise(child, belief * node.psi[:, j])
                utility, revenue = utility + u, revenue + r
            return utility, revenue

        if node.kind == NodeKind.TRANSFER:
            mass = float(belief.sum())
            u, r = optimise(node.children[0], belief)
            if not uncommitted:
                return u - node.amount * mass, r + node.amount * mass
            options = [(0, u - node.amount * mass, r + node.amount * mass)]
        else:
            options = [(j, *optimise(child, belief)) for j, child in enumerate(node.children)]
        if uncommitted:
            options.append((DEFECT, _value(ctx, theta, belief), 0.0))
        choice, utility, revenue = _pick(options)
        choices[node_id] = choice
        return utility, revenue

    utility, revenue = optimise(0, prior)
    return BestResponse(BuyerStrategy(mode, choices), utility, revenue)


def _play(ctx: Context, tree: ProtocolTree, theta: int, strategy: BuyerStrategy) -> TypeOutcome:
    prior = ctx.conditional[:, theta]
    stops: list[StopRecord] = []
    uncommitted = strategy.mode == StrategyMode.UNCOMMITTED

    def choose(node_id: int, mass: float, width: int) -> int:
        choice = strategy.choice(node_id)
        if choice is None:
            if mass > 0:
                raise MissingDecision(
                    f"Strategy for type {ctx.theta_labels[theta]} has no choice at reachable node {node_id}",
                    node=node_id,
                    theta=theta,
                )
            return 0
        if choice != DEFECT and not 0 <= choice < width:
            raise InvalidInput(f"Choice {choice} at node {node_id} is not a child index")
        if choice == DEFECT and not uncommitted:
            raise InvalidInput("Committed strategies cannot defect")
        return choice

    def walk(node_id: int, likelihood: np.ndarray) -> tuple[float, float]:
        node = tree.node(node_id)
        belief = prior * likelihood
        mass = float(belief.sum())
        if node.kind == NodeKind.LEAF:
            stops.append(StopRecord(node_id, mass, likelihood))
            return _value(ctx, theta, belief), 0.0
        if node.kind == NodeKind.SELLER:
            split = likelihood[:, None] * node.psi
            if np.max(np.abs(split.sum(axis=1) - likelihood)) > settings.LOAD_TOLERANCE:
                raise NumericFailure(f"Likelihood not conserved at seller node {node_id}")
            utility = transfer = 0.0
            for j, child in enumerate(node.children):
                u, t = walk(child, split[:, j])
                utility, transfer = utility + u, transfer + t
            return utility, transfer
        if node.kind == NodeKind.BUYER or uncommitted:
            choice = choose(node_id, mass, len(node.children))
            if choice == DEFECT:
                stops.append(StopRecord(node_id, mass, likelihood, defected=True))
                return _value(ctx, theta, belief), 0.0
        else:
            choice = 0
        u, t = walk(node.children[choice], likelihood)
        if node.kind == NodeKind.TRANSFER:
            return u - node.amount * mass, t + node.amount * mass
        return u, t

    utility, transfer = walk(0, np.ones(ctx.m))
    return TypeOutcome(theta, utility, transfer, tuple(stops))


def evaluate(ctx: Context, tree: ProtocolTree, strategies: Mapping[int, BuyerStrategy] | Sequence[BuyerStrategy]) -> EvaluationResult:
    if not isinstance(strategies, Mapping):
        strategies = dict(enumerate(strategies))
    missing = [t for t in range(ctx.n) if t not in strategies]
    if missing:
        raise MissingDecision(f"No strategy supplied for types {missing}", types=missing)
    outcomes = tuple(_play(ctx, tree, t, strategies[t]) for t in range(ctx.n))
    revenue = float(sum(ctx.type_marginal[o.theta] * o.expected_transfer for o in outcomes))
    return EvaluationResult(outcomes, revenue)


def optimal_strategies(ctx: Context, tree: ProtocolTree, mode: StrategyMode) -> dict[int, BuyerStrategy]:
    return {t: best_response(ctx, tree, t, mode).strategy for t in range(ctx.n)}


def _pure_plans(tree: ProtocolTree, node_id: int, mode: StrategyMode) -> Iterator[dict[int, int]]:
    """Every pure strategy below `node_id`, fixed only at the nodes it can reach."""
    node = tree.node(node_id)
    uncommitted = mode == StrategyMode.UNCOMMITTED
    if node.kind == NodeKind.LEAF:
        yield {}
        return
    if node.kind == NodeKind.SELLER:
        branches = [list(_pure_plans(tree, child, mode)) for child in node.children]
        for parts in itertools.product(*branches):
            yield {key: value for part in parts for key, value in part.items()}
        return
    if node.kind == NodeKind.TRANSFER and not uncommitted:
        yield from _pure_plans(tree, node.children[0], mode)
        return
    for choice, child in enumerate(node.children):
        for plan in _pure_plans(tree, child, mode):
            yield {node_id: choice, **plan}
    if uncommitted:
        yield {node_id: DEFECT}


def enumerate_strategies_oracle(ctx: Context, tree: ProtocolTree, theta: int, mode: StrategyMode) -> float:
    """Best utility by trying every pure strategy; for cross-checking best_response.

    Strategies that differ only at nodes they never reach play identically, so
    each is tried once.
    """
    decisions = tree.decision_nodes(mode)
    if len(decisions) > settings.ORACLE_MAX_DECISIONS:
        raise ComplexityLimit(
            f"{len(decisions)} decision nodes exceed the oracle limit of {settings.ORACLE_MAX_DECISIONS}"
        )
    best = -np.inf
    for plan in _pure_plans(tree, 0, mode):
        best = max(best, _play(ctx, tree, theta, BuyerStrategy(mode, plan)).utility)
    return float(best)


def node_likelihood(tree: ProtocolTree, node_id: int) -> np.ndarray:
    """P(reach node | w) from the seller's prescriptions alone."""
    path = tree.path_to(node_id)
    m = next((node.psi.shape[0] for node in tree.nodes if node.psi is not None), None)
    likelihood = np.ones(m) if m is not None else np.ones(1)
    for parent, child in zip(path, path[1:]):
        node = tree.node(parent)
        if node.kind == NodeKind.SELLER:
            likelihood = likelihood * node.psi[:, node.children.index(child)]
    return likelihood


def node_posterior(ctx: Context, tree: ProtocolTree, theta: int, node_id: int) -> np.ndarray:
    belief = ctx.conditional[:, theta] * np.broadcast_to(node_likelihood(tree, node_id), (ctx.m,))
    mass = belief.sum()
    if mass <= 0:
        raise ZeroMass(f"Type {ctx.theta_labels[theta]} never reaches node {node_id}", node=node_id, theta=theta)
    return belief / mass


def strategy_to_dict(strategy: BuyerStrategy) -> dict:
    return {
        "mode": strategy.mode.value,
        "choices": {str(node): ("defect" if choice == DEFECT else choice) for node, choice in sorted(strategy.choices.items())},
    }


def parse_strategies(data: Mapping, ctx: Context, mode: StrategyMode) -> dict[int, BuyerStrategy]:
    """{theta label: {node id: child index or "defect"}} to strategies keyed by type index."""
    if not isinstance(data, Mapping):
        raise InvalidInput("Strategies must be an object keyed by type label")
    unknown = set(data) - set(ctx.theta_labels)
    if unknown:
        raise InvalidInput(f"Strategies for unknown types {sorted(unknown)}")
    strategies = {}
    for label, choices in data.items():
        if isinstance(choices, Mapping) and "choices" in choices:
            choices = choices["choices"]
        try:
            parsed = {int(node): (DEFECT if choice == "defect" else int(choice)) for node, choice in choices.items()}
        except (AttributeError, TypeError, ValueError) as e:
            raise InvalidInput(f"Malformed strategy for type {label}: {e}") from e
        strategies[ctx.theta_labels.index(label)] = BuyerStrategy(mode, parsed)
    return strategies
