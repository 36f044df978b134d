# app/models/menu.py
import enum
from dataclasses import dataclass, field, replace

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidInput


class MenuKind(str, enum.Enum):
    MAPPINGS = "mappings"
    OUTCOMES = "outcomes"


def _readonly(values) -> np.ndarray | None:
    if values is None:
        return None
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Menu:
    """One contract per buyer type, all in the observer frame.

    Contract theta is the lottery `weights[theta]` over `posteriors` plus
    either a fixed price (`prices[theta]`, mappings) or per-posterior scaled
    payments `scaled_payments[theta, q] = weights[theta, q] * t_theta(q)`
    (outcomes). `payments` holds explicit t_theta(q) once they are known;
    entries at zero-weight posteriors are NaN.
    """

    kind: MenuKind
    posteriors: np.ndarray
    weights: np.ndarray
    prior: np.ndarray
    prices: np.ndarray | None = None
    scaled_payments: np.ndarray | None = None
    payments: np.ndarray | None = None
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for attr in ("posteriors", "weights", "prior", "prices", "scaled_payments", "payments"):
            object.__setattr__(self, attr, _readonly(getattr(self, attr)))
        n, k = self.weights.shape
        if self.posteriors.shape[0] != k:
            raise InvalidInput(f"Menu has {k} weight columns but {self.posteriors.shape[0]} posteriors")
        if self.kind == MenuKind.MAPPINGS and (self.prices is None or self.prices.shape != (n,)):
            raise InvalidInput("A mappings menu needs one price per type")
        if self.kind == MenuKind.OUTCOMES and (
            self.scaled_payments is None or self.scaled_payments.shape != (n, k)
        ):
            raise InvalidInput("An outcomes menu needs scaled payments for every (type, posterior)")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"theta{i}" for i in range(n)))

    @classmethod
    def mappings(cls, posteriors, weights, prices, prior, labels=()) -> "Menu":
        return cls(MenuKind.MAPPINGS, posteriors, weights, prior, prices=prices, labels=tuple(labels))

    @classmethod
    def outcomes(cls, posteriors, weights, scaled_payments, prior, payments=None, labels=()) -> "Menu":
        return cls(
            MenuKind.OUTCOMES,
            posteriors,
            weights,
            prior,
            scaled_payments=scaled_payments,
            payments=payments,
            labels=tuple(labels),
        )

    @classmethod
    def null(cls, prior, n: int, kind: MenuKind = MenuKind.MAPPINGS, labels=()) -> "Menu":
        """Every type keeps the prior and pays nothing."""
        prior = np.asarray(prior, dtype=float)
        posteriors = prior[None, :]
        weights = np.ones((n, 1))
        if kind == MenuKind.MAPPINGS:
            return cls.mappings(posteriors, weights, np.zeros(n), prior, labels)
        return cls.outcomes(posteriors, weights, np.zeros((n, 1)), prior, np.zeros((n, 1)), labels)

    @property
    def n_types(self) -> int:
        return self.weights.shape[0]

    @property
    def n_posteriors(self) -> int:
        return self.weights.shape[1]

    def support(self, theta: int) -> np.ndarray:
        return np.flatnonzero(self.weights[theta] > settings.SUPPORT_TOL)

    def support_sizes(self) -> list[int]:
        return [int(self.support(t).size) for t in range(self.n_types)]

    def same_contract(self, a: int, b: int, tol: float = 1e-12) -> bool:
        if np.max(np.abs(self.weights[a] - self.weights[b])) > tol:
            return False
        if self.kind == MenuKind.MAPPINGS:
            return abs(self.prices[a] - self.prices[b]) <= tol
        return bool(np.max(np.abs(self.scaled_payments[a] - self.scaled_payments[b])) <= tol)

    def with_changes(self, **changes) -> "Menu":
        return replace(self, **changes)


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    kind: str  # "IR", "IC" or "F"
    theta: int
    other: int | None
    margin: float
    status: str  # "binding", "slack" or "violated"
    identical: bool = False


@dataclass(frozen=True)
class MenuReport:
    valid: bool
    checks: tuple[ConstraintCheck, ...]
    utilities: np.ndarray
    prior_values: np.ndarray
    expected_payments: np.ndarray
    observer_payments: np.ndarray
    revenue: float
    feasibility_residual: float
    consistency_residual: float = 0.0

    def binding(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if c.status == "binding"]

    def violated(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if c.status == "violated"]

    def by_kind(self, kind: str) -> list[ConstraintCheck]:
        return [c for c in self.checks if c.kind == kind]


@dataclass(frozen=True)
class FullSurplusContract:
    payments: np.ndarray
    revenue: float
    condition_number: float
    warnings: tuple[str, ...] = ()

    def __iter__(self):
        # unpacks as (payments, revenue)
        return iter((self.payments, self.revenue))


@dataclass(frozen=True)
class RevenueReport:
    envelope_price: float
    envelope_revenue: float
    mappings_revenue: float
    outcomes_npt_revenue: float
    outcomes_revenue: float
    full_surplus: float
    surpluses: np.ndarray
    envelope_menu: Menu
    mappings_menu: Menu
    outcomes_npt_menu: Menu
    outcomes_menu: Menu
    posterior_count: int
    full_surplus_payments: np.ndarray | None = None
    diagnostics: tuple[str, ...] = ()
    # verification of each menu above, keyed envelope|mappings|outcomes_npt|outcomes
    menu_reports: dict[str, MenuReport] = field(default_factory=dict)

    @property
    def re(self) -> float:
        return self.envelope_revenue

    @property
    def rc(self) -> float:
        return self.mappings_revenue

    @property
    def rp(self) -> float:
        return self.outcomes_npt_revenue

    @property
    def r(self) -> float:
        return self.outcomes_revenue
