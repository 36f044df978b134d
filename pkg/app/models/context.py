# app/models/context.py
"""Immutable description of a selling problem: who the buyer types are, what
the seller's signal can be, and what each type earns from each action."""
import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from app.core.config import settings


class Frame(str, enum.Enum):
    """Whose posterior a vector is: the buyer's own, or an outside observer's."""

    BUYER = "buyer"
    OBSERVER = "observer"


def _frozen(values, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        array = array.reshape((0,) * ndim) if array.size == 0 else array
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Context:
    """The pair (u, mu) together with its label sets.

    `mu[w, t]` is the joint probability of seller signal w and buyer type t.
    `u[t, w, a]` is the payoff of type t taking action a when the signal is w.
    Shape agreement is checked by `validate_context`, not here, so malformed
    inputs can still be inspected and reported on.
    """

    theta_labels: tuple[str, ...]
    omega_labels: tuple[str, ...]
    action_labels: tuple[str, ...]
    mu: np.ndarray
    u: np.ndarray
    name: str = field(default="context", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "theta_labels", tuple(str(t) for t in self.theta_labels))
        object.__setattr__(self, "omega_labels", tuple(str(w) for w in self.omega_labels))
        object.__setattr__(self, "action_labels", tuple(str(a) for a in self.action_labels))
        object.__setattr__(self, "mu", _frozen(self.mu, 2))
        object.__setattr__(self, "u", _frozen(self.u, 3))

    @classmethod
    def from_arrays(
        cls,
        mu,
        u,
        theta_labels: Sequence[str] | None = None,
        omega_labels: Sequence[str] | None = None,
        action_labels: Sequence[str] | None = None,
        name: str = "context",
    ) -> "Context":
        mu = np.asarray(mu, dtype=float)
        u = np.asarray(u, dtype=float)
        m, n = mu.shape
        actions = u.shape[2]
        return cls(
            theta_labels=tuple(theta_labels or (f"theta{i}" for i in range(n))),
            omega_labels=tuple(omega_labels or (f"omega{i}" for i in range(m))),
            action_labels=tuple(action_labels or (f"a{i}" for i in range(actions))),
            mu=mu,
            u=u,
            name=name,
        )

    @property
    def n(self) -> int:
        return len(self.theta_labels)

    @property
    def m(self) -> int:
        return len(self.omega_labels)

    @property
    def num_actions(self) -> int:
        return len(self.action_labels)

    @cached_property
    def prior(self) -> np.ndarray:
        """p(w) = mu(w), the outside observer's prior over signals."""
        return self.mu.sum(axis=1)

    @cached_property
    def type_marginal(self) -> np.ndarray:
        return self.mu.sum(axis=0)

    @cached_property
    def conditional(self) -> np.ndarray:
        """mu(w | t) as an m x n matrix; column t is type t's prior over signals."""
        return self.mu / self.type_marginal

    @cached_property
    def type_given_signal(self) -> np.ndarray:
        """mu(t | w) as an m x n matrix; zero rows for zero-mass signals."""
        out = np.zeros_like(self.mu)
        positive = self.prior > 0
        out[positive] = self.mu[positive] / self.prior[positive, None]
        return out

    @cached_property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.prior > 0))

    @cached_property
    def zero_mass_states(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.prior <= 0))

    @cached_property
    def is_independent(self) -> bool:
        """True when mu factorizes as p x mu(theta) within the load tolerance."""
        product = np.outer(self.prior, self.type_marginal)
        return bool(np.max(np.abs(self.mu - product)) <= settings.LOAD_TOLERANCE)

    @cached_property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.mu, compute_uv=False)

    @cached_property
    def numeric_rank(self) -> int:
        sigma = self.singular_values
        if sigma.size == 0 or sigma[0] == 0:
            return 0
        return int(np.sum(sigma > settings.RANK_TOLERANCE * sigma[0]))

    def with_mu(self, mu, name: str | None = None) -> "Context":
        return Context(
            theta_labels=self.theta_labels,
            omega_labels=self.omega_labels,
            action_labels=self.action_labels,
            mu=mu,
            u=self.u,
            name=name or self.name,
        )

    def __repr__(self) -> str:
        return f"<Context(name={self.name!r}, n={self.n}, m={self.m}, actions={self.num_actions})>"


@dataclass(frozen=True)
class BeliefTransform:
    """Diagonal D_theta with entries mu(theta | w); maps observer posteriors to
    (unnormalized) buyer posteriors."""

    theta: int
    diag: np.ndarray

    def apply(self, q: np.ndarray) -> np.ndarray:
        return self.diag * np.asarray(q, dtype=float)


class Valuation(NamedTuple):
    value: float
    actions: tuple[int, ...]


@dataclass(frozen=True)
class Violation:
    invariant: str
    message: str
    index: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "invariant": self.invariant,
            "message": self.message,
            "index": list(self.index) if self.index is not None else None,
        }
