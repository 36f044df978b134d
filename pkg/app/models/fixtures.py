# app/models/fixtures.py
import enum
from dataclasses import dataclass, field
from typing import Callable

from app.models.context import Context
from app.models.protocol import ProtocolTree


class Source(str, enum.Enum):
    """Where an expected value comes from: quoted from the published worked
    example, derived here by an independent computation, or trivially true."""

    PUBLISHED = "published"
    DERIVED = "derived"
    TRIVIAL = "trivial"


class Comparison(str, enum.Enum):
    EQ = "eq"
    GE = "ge"
    LE = "le"


@dataclass(frozen=True)
class Expectation:
    label: str
    expected: float
    compute: Callable[[], float]
    tolerance: float = 1e-9
    source: Source = Source.DERIVED
    comparison: Comparison = Comparison.EQ


@dataclass(frozen=True)
class FixtureCase:
    name: str
    context: Context
    expectations: tuple[Expectation, ...]
    tree: ProtocolTree | None = None
    description: str = ""


@dataclass(frozen=True)
class CheckOutcome:
    fixture: str
    label: str
    expected: float
    actual: float | None
    delta: float | None
    tolerance: float
    source: Source
    comparison: Comparison
    passed: bool
    error: str | None = None


@dataclass(frozen=True)
class FixtureRun:
    checks: tuple[CheckOutcome, ...] = ()
    fixtures: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckOutcome]:
        return [c for c in self.checks if not c.passed]


@dataclass(frozen=True)
class GapRow:
    t: float
    outcomes_revenue: float
    mappings_revenue: float
    outcomes_npt_revenue: float
    envelope_revenue: float
    full_surplus: float


@dataclass(frozen=True)
class GapTable:
    context_name: str
    rows: tuple[GapRow, ...] = field(default=())
