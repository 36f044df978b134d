# app/models/geometry.py
import enum
from dataclasses import dataclass

import numpy as np


class Provenance(str, enum.Enum):
    QSTAR = "qstar"
    GRID = "grid"
    UNION = "union"


class GeometryFrame(str, enum.Enum):
    INDEPENDENT = "independent"
    CORRELATED = "correlated"


@dataclass(frozen=True, eq=False)
class PosteriorSet:
    """Finite, deduplicated list of observer posteriors.

    `points` is (k, m) in full signal coordinates; coordinates outside
    `support` are zero for every point.
    """

    points: np.ndarray
    provenance: Provenance
    support: tuple[int, ...]

    def __post_init__(self):
        points = np.array(self.points, dtype=float, ndmin=2)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "support", tuple(int(i) for i in self.support))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def index_of(self, q, tol: float = 1e-9) -> int | None:
        if len(self) == 0:
            return None
        distance = np.abs(self.points - np.asarray(q, dtype=float)).max(axis=1)
        best = int(np.argmin(distance))
        return best if distance[best] <= tol else None

    def contains(self, q, tol: float = 1e-9) -> bool:
        return self.index_of(q, tol) is not None

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance.value,
            "support": list(self.support),
            "points": self.points.tolist(),
        }


@dataclass(frozen=True)
class IndifferenceHyperplane:
    theta: int
    actions: tuple[int, int]
    normal: np.ndarray
