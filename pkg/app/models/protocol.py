# app/models/protocol.py
import enum
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from app.core.exceptions import InvalidInput

DEFECT = -1


class NodeKind(str, enum.Enum):
    BUYER = "buyer"
    SELLER = "seller"
    TRANSFER = "transfer"
    LEAF = "leaf"


class StrategyMode(str, enum.Enum):
    COMMITTED = "committed"
    UNCOMMITTED = "uncommitted"


@dataclass(frozen=True, eq=False)
class ProtocolNode:
    id: int
    kind: NodeKind
    children: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()
    psi: np.ndarray | None = None  # (m, len(children)) seller prescriptions
    amount: float = 0.0  # positive: buyer pays the seller
    name: str | None = None


@dataclass(frozen=True, eq=False)
class ProtocolTree:
    """Flat node list in preorder; node 0 is the root."""

    nodes: tuple[ProtocolNode, ...]

    @property
    def root(self) -> ProtocolNode:
        return self.nodes[0]

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> ProtocolNode:
        return self.nodes[node_id]

    @cached_property
    def parents(self) -> dict[int, int]:
        return {child: node.id for node in self.nodes for child in node.children}

    def path_to(self, node_id: int) -> list[int]:
        path = [node_id]
        while path[-1] != 0:
            path.append(self.parents[path[-1]])
        return path[::-1]

    def find(self, name: str) -> int:
        for node in self.nodes:
            if node.name == name:
                return node.id
        raise InvalidInput(f"No node named {name!r}")

    def decision_nodes(self, mode: StrategyMode) -> list[int]:
        kinds = {NodeKind.BUYER}
        if mode == StrategyMode.UNCOMMITTED:
            kinds.add(NodeKind.TRANSFER)
        return [node.id for node in self.nodes if node.kind in kinds]

    @property
    def leaves(self) -> list[int]:
        return [node.id for node in self.nodes if node.kind == NodeKind.LEAF]


class TreeAssembler:
    """Collects nodes bottom-up, then renumbers them in preorder."""

    def __init__(self, m: int):
        self.m = m
        self._nodes: list[dict] = []

    def _add(self, **spec) -> int:
        self._nodes.append(spec)
        return len(self._nodes) - 1

    def leaf(self, name: str | None = None) -> int:
        return self._add(kind=NodeKind.LEAF, children=(), name=name)

    def transfer(self, amount: float, child: int, name: str | None = None) -> int:
        return self._add(kind=NodeKind.TRANSFER, children=(child,), amount=float(amount), name=name)

    def seller(self, psi, children: Sequence[int], name: str | None = None) -> int:
        psi = np.array(psi, dtype=float).reshape(self.m, len(children))
        return self._add(kind=NodeKind.SELLER, children=tuple(children), psi=psi, name=name)

    def buyer(self, children: Sequence[int], labels: Sequence[str] | None = None, name: str | None = None) -> int:
        labels = tuple(labels) if labels else tuple(str(i) for i in range(len(children)))
        return self._add(kind=NodeKind.BUYER, children=tuple(children), labels=labels, name=name)

    def build(self, root: int) -> ProtocolTree:
        order: list[int] = []
        stack = [root]
        while stack:
            current = stack.pop()
            order.append(current)
            stack.extend(reversed(self._nodes[current]["children"]))
        renumber = {old: new for new, old in enumerate(order)}
        nodes = []
        for old in order:
            spec = self._nodes[old]
            psi = spec.get("psi")
            if psi is not None:
                psi = psi.copy()
                psi.setflags(write=False)
            nodes.append(
                ProtocolNode(
                    id=renumber[old],
                    kind=spec["kind"],
                    children=tuple(renumber[c] for c in spec["children"]),
                    labels=spec.get("labels", ()),
                    psi=psi,
                    amount=spec.get("amount", 0.0),
                    name=spec.get("name"),
                )
            )
        return ProtocolTree(tuple(nodes))


@dataclass(frozen=True)
class BuyerStrategy:
    """Pure strategy: decision node id -> chosen child index, or DEFECT."""

    mode: StrategyMode
    choices: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        choices = {int(k): int(v) for k, v in dict(self.choices).items()}
        if self.mode == StrategyMode.COMMITTED and DEFECT in choices.values():
            raise InvalidInput("Committed strategies cannot defect")
        object.__setattr__(self, "choices", MappingProxyType(choices))

    def choice(self, node_id: int) -> int | None:
        return self.choices.get(node_id)


@dataclass(frozen=True)
class StopRecord:
    node_id: int
    probability: float
    likelihood: np.ndarray
    defected: bool = False


@dataclass(frozen=True)
class TypeOutcome:
    theta: int
    utility: float
    expected_transfer: float
    stops: tuple[StopRecord, ...] = ()


@dataclass(frozen=True)
class EvaluationResult:
    outcomes: tuple[TypeOutcome, ...]
    revenue: float

    @property
    def utilities(self) -> np.ndarray:
        return np.array([o.utility for o in self.outcomes])

    @property
    def expected_transfers(self) -> np.ndarray:
        return np.array([o.expected_transfer for o in self.outcomes])
