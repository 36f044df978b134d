# app/worker/logic/context.py
"""Derived quantities of a context: value functions, surpluses and the
observer/buyer frame transforms."""
import logging
from typing import Mapping

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidInput, ZeroMass
from app.models.context import BeliefTransform, Context, Frame, Valuation, Violation

logger = logging.getLogger(__name__)


def validate_context(ctx: Context) -> list[Violation]:
    violations: list[Violation] = []
    mu, u = ctx.mu, ctx.u
    n, m, actions = ctx.n, ctx.m, ctx.num_actions

    if n < 1 or m < 1 or actions < 1:
        violations.append(
            Violation("dimensions", f"need at least one type, signal and action (got n={n}, m={m}, |A|={actions})")
        )
        return violations
    if mu.shape != (m, n):
        violations.append(Violation("dimensions", f"mu has shape {mu.shape}, expected {(m, n)}"))
    if u.shape != (n, m, actions):
        violations.append(Violation("dimensions", f"u has shape {u.shape}, expected {(n, m, actions)}"))
    if violations:
        return violations

    if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(u)):
        violations.append(Violation("finite", "mu and u must be finite"))
        return violations

    for w, t in zip(*np.nonzero(mu < 0)):
        violations.append(
            Violation("nonnegative", f"mu[{w}][{t}] = {mu[w, t]} is negative", (int(w), int(t)))
        )
    total = float(mu.sum())
    if abs(total - 1.0) > settings.LOAD_TOLERANCE:
        violations.append(Violation("mass", f"mass ≠ 1 (total {total!r})"))
    for t in np.flatnonzero(mu.sum(axis=0) <= 0):
        violations.append(Violation("zero-mass type", f"type {ctx.theta_labels[t]} has zero mass", (int(t),)))

    for label_set, name in (
        (ctx.theta_labels, "theta"),
        (ctx.omega_labels, "omega"),
        (ctx.action_labels, "actions"),
    ):
        if len(set(label_set)) != len(label_set):
            violations.append(Violation("labels", f"duplicate labels in {name}"))
    return violations


def load_context(data: Mapping, name: str = "context") -> Context:
    """Build a context from its JSON form, rejecting anything that fails validation."""
    try:
        ctx = Context(
            theta_labels=tuple(data["theta"]),
            omega_labels=tuple(data["omega"]),
            action_labels=tuple(data["actions"]),
            mu=data["mu"],
            u=data["u"],
            name=str(data.get("name", name)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidInput(f"Malformed context: {e}") from e

    violations = validate_context(ctx)
    if violations:
        raise InvalidInput(
            f"Context {ctx.name!r} failed validation: " + "; ".join(v.message for v in violations),
            violations=[v.to_dict() for v in violations],
        )
    if ctx.zero_mass_states:
        logger.warning(
            f"Signals with zero mass: {[ctx.omega_labels[w] for w in ctx.zero_mass_states]}",
            extra={"context_name": ctx.name},
        )
    return ctx


def context_to_dict(ctx: Context) -> dict:
    return {
        "name": ctx.name,
        "theta": list(ctx.theta_labels),
        "omega": list(ctx.omega_labels),
        "actions": list(ctx.action_labels),
        "mu": ctx.mu.tolist(),
        "u": ctx.u.tolist(),
    }


def belief_transform(ctx: Context, theta: int) -> BeliefTransform:
    return BeliefTransform(theta=theta, diag=ctx.type_given_signal[:, theta].copy())


def value_function(ctx: Context, theta: int, q, frame: Frame = Frame.BUYER) -> Valuation:
    """v_theta(q) with its argmax set. `q` may be unnormalized."""
    b = np.asarray(q, dtype=float)
    if frame == Frame.OBSERVER:
        b = belief_transform(ctx, theta).apply(b)
    payoffs = b @ ctx.u[theta]
    best = float(payoffs.max())
    scale = max(1.0, abs(best))
    winners = np.flatnonzero(payoffs >= best - settings.LOAD_TOLERANCE * scale)
    return Valuation(best, tuple(int(a) for a in winners))


def surplus(ctx: Context, theta: int) -> float:
    belief = ctx.conditional[:, theta]
    informed = float(belief @ ctx.u[theta].max(axis=1))
    uninformed = float((belief @ ctx.u[theta]).max())
    return max(0.0, informed - uninformed)


def surpluses(ctx: Context) -> np.ndarray:
    return np.array([surplus(ctx, t) for t in range(ctx.n)])


def full_surplus(ctx: Context) -> float:
    return float(ctx.type_marginal @ surpluses(ctx))


def posterior_for_type(ctx: Context, theta: int, q) -> tuple[np.ndarray, float]:
    """Bayesian update of an observer posterior for type `theta`."""
    scaled = belief_transform(ctx, theta).apply(q)
    mass = float(scaled.sum())
    if mass <= 0.0:
        raise ZeroMass(
            f"Posterior is impossible for type {ctx.theta_labels[theta]}",
            theta=theta,
        )
    return scaled / mass, mass


def prior_values(ctx: Context) -> np.ndarray:
    """v_theta evaluated at each type's own prior mu(.|theta)."""
    return np.array([(ctx.conditional[:, t] @ ctx.u[t]).max() for t in range(ctx.n)])


def likelihood_ratios(ctx: Context, points: np.ndarray) -> np.ndarray:
    """pi_theta(q) = 1'D_theta q / mu(theta) as an (n, k) array.

    For a signal inducing observer posterior q, this is the ratio between the
    probability type theta sees it and the unconditional probability.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return (points @ ctx.type_given_signal / ctx.type_marginal).T


def contract_values(ctx: Context, points: np.ndarray) -> np.ndarray:
    """V_theta(q) = v_theta(D_theta q) / mu(theta) as an (n, k) array."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.empty((ctx.n, points.shape[0]))
    for t in range(ctx.n):
        beliefs = points * ctx.type_given_signal[:, t]
        values[t] = (beliefs @ ctx.u[t]).max(axis=1) / ctx.type_marginal[t]
    return values
