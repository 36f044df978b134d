# app/models/lp.py
import enum
from dataclasses import dataclass, field

import numpy as np


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"


class Relation(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="

    def flipped(self) -> "Relation":
        if self is Relation.LE:
            return Relation.GE
        if self is Relation.GE:
            return Relation.LE
        return self


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0  # 0 or -inf

    @property
    def is_free(self) -> bool:
        return self.lower == -np.inf


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Dense LP: optimise `objective . x + objective_constant` subject to
    `matrix[i] . x  relations[i]  rhs[i]` for every row."""

    sense: Sense
    variables: tuple[Variable, ...]
    objective: np.ndarray
    matrix: np.ndarray
    relations: tuple[Relation, ...]
    rhs: np.ndarray
    row_names: tuple[str, ...]
    objective_constant: float = 0.0
    name: str = "lp"

    def __post_init__(self):
        for attr in ("objective", "matrix", "rhs"):
            array = np.array(getattr(self, attr), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, attr, array)
        if self.matrix.ndim != 2:
            object.__setattr__(self, "matrix", self.matrix.reshape(len(self.row_names), len(self.variables)))

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def column(self, name: str) -> int:
        return self.variable_names.index(name)

    def row(self, name: str) -> int:
        return self.row_names.index(name)


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    objective: float = float("nan")
    primal: dict[str, float] = field(default_factory=dict)
    dual: dict[str, float] = field(default_factory=dict)
    basic_variables: tuple[str, ...] = ()
    active_rows: tuple[str, ...] = ()
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    def values(self, names) -> np.ndarray:
        return np.array([self.primal[name] for name in names])
