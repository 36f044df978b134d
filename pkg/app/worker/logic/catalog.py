# app/worker/logic/catalog.py
"""Reference contexts and protocols with known closed-form answers."""
import numpy as np

from app.models.context import Context
from app.models.protocol import BuyerStrategy, ProtocolTree, StrategyMode
from app.worker.logic.protocol import parse_tree

ROOT_NAME = "root"


def two_key_box(mu=((0.2, 0.3), (0.3, 0.2)), values=(3.0, 5.0), name: str = "two-key-box") -> Context:
    """A prize sits behind one of two doors; type theta wins values[theta] by
    opening the right one. Types hold different beliefs about the door."""
    mu = np.asarray(mu, dtype=float)
    u = np.array([[[z if w == a else 0.0 for a in range(2)] for w in range(2)] for z in values])
    return Context.from_arrays(
        mu,
        u,
        theta_labels=("theta1", "theta2"),
        omega_labels=("omega0", "omega1"),
        action_labels=("open0", "open1"),
        name=name,
    )


def two_key_box_uniform() -> Context:
    return two_key_box(mu=((0.25, 0.25), (0.25, 0.25)), name="two-key-box-uniform")


def two_key_box_perturbed() -> Context:
    return two_key_box(mu=((0.25001, 0.24999), (0.24999, 0.25001)), name="two-key-box-perturbed")


def interactive_gap_context() -> Context:
    """Acting safely (a0) pays the signal; the risky action a1 pays 1 or loses 8."""
    mu = np.array([[0.3, 0.2], [0.2, 0.3]])
    per_state = np.array([[0.0, 1.0], [1.0, -8.0]])  # rows: signal, columns: action
    u = np.stack([per_state, per_state])
    return Context.from_arrays(
        mu,
        u,
        theta_labels=("theta0", "theta1"),
        omega_labels=("omega0", "omega1"),
        action_labels=("safe", "risky"),
        name="interactive-gap",
    )


def interactive_gap_tree_spec() -> dict:
    full_information = {
        "kind": "seller",
        "psi": {"omega0": [1.0, 0.0], "omega1": [0.0, 1.0]},
        "children": [{"kind": "leaf"}, {"kind": "leaf"}],
    }
    return {
        "kind": "buyer",
        "name": ROOT_NAME,
        "children": {
            "left": {"kind": "transfer", "name": "t1", "amount": 0.533, "child": full_information},
            "right": {
                "kind": "seller",
                "name": "s2",
                "psi": {"omega0": [1.0, 0.0], "omega1": [1.0 / 6.0, 5.0 / 6.0]},
                "children": [
                    {"kind": "transfer", "name": "t2", "amount": 0.8, "child": full_information},
                    {"kind": "leaf", "name": "l5"},
                ],
            },
        },
    }


def interactive_gap_tree(ctx: Context | None = None) -> ProtocolTree:
    return parse_tree(interactive_gap_tree_spec(), ctx or interactive_gap_context())


def interactive_gap_strategies(tree: ProtocolTree) -> dict[int, BuyerStrategy]:
    """Uncommitted play: theta0 buys outright, theta1 takes the cheap hint and pays at t2."""
    root, t1, t2 = tree.find(ROOT_NAME), tree.find("t1"), tree.find("t2")
    return {
        0: BuyerStrategy(StrategyMode.UNCOMMITTED, {root: 0, t1: 0, t2: 0}),
        1: BuyerStrategy(StrategyMode.UNCOMMITTED, {root: 1, t1: 0, t2: 0}),
    }


def _segment_actions(points: list[tuple[float, float]], size: int) -> np.ndarray:
    """Actions whose payoff lines are the pieces of the given convex curve,
    padded with zero actions. Columns: (payoff at signal 0, payoff at signal 1)."""
    actions = []
    for (q0, f0), (q1, f1) in zip(points, points[1:]):
        slope = (f1 - f0) / (q1 - q0)
        at_zero = f0 - slope * q0
        actions.append((at_zero, at_zero + slope))
    actions += [(0.0, 0.0)] * (size - len(actions))
    return np.array(actions).T


def quadratic_support(n: int = 3, delta: float = 0.05, epsilon: float = 1e-4) -> Context:
    """Independent instance whose optimal menu needs theta+1 posteriors for type theta.

    Type masses fall geometrically (ratio epsilon); type theta's value curve
    is flat up to 1 - theta*delta and then bends at every multiple of delta.
    """
    masses = np.array([epsilon ** (t - 1) for t in range(1, n + 1)])
    masses /= masses.sum()
    u = np.empty((n, 2, n + 1))
    for t in range(1, n + 1):
        curve = [(0.0, 0.0), (1.0 - t * delta, 0.0)]
        curve += [(1.0 - j * delta, delta ** (t - 1 + j)) for j in range(t - 1, -1, -1)]
        u[t - 1] = _segment_actions(curve, n + 1)
    mu = np.outer([0.5, 0.5], masses)
    return Context.from_arrays(
        mu,
        u,
        theta_labels=tuple(f"theta{t}" for t in range(1, n + 1)),
        name="quadratic-support",
    )


def envelope_gap(n: int = 5, threshold: float = 10.0) -> Context:
    """Type theta gains 2^theta only when nearly certain of signal 1; a single
    posted price for full information earns far less than a menu."""
    masses = np.array([2.0 ** -t for t in range(1, n + 1)])
    masses /= masses.sum()
    u = np.empty((n, 2, 2))
    for t in range(1, n + 1):
        u[t - 1] = np.array([[0.0, -(2.0**t) * (threshold**t - 1.0)], [0.0, 2.0**t]])
    return Context.from_arrays(
        np.outer([0.5, 0.5], masses),
        u,
        theta_labels=tuple(f"theta{t}" for t in range(1, n + 1)),
        action_labels=("stay", "bet"),
        name="envelope-gap",
    )


SIDE_CHANNEL_KERNEL = np.array([[1.0, 0.0, 0.0], [0.99, 0.01, 0.0], [0.98, 0.01, 0.01]])


def side_channel_gap(scale: float = 10.0, kernel: np.ndarray = SIDE_CHANNEL_KERNEL) -> Context:
    """The signal is a fair payoff bit plus a side reading k that is almost
    uninformative about the type. Charges contingent on k extract the full
    surplus; fixed prices cannot."""
    n, channels = kernel.shape
    masses = np.array([scale ** -t for t in range(1, n + 1)])
    masses /= masses.sum()
    omega = [(b, k) for b in range(2) for k in range(channels)]
    mu = np.array([[masses[t] * kernel[t, k] / 2.0 for t in range(n)] for b, k in omega])
    u = np.array(
        [[[scale ** (t + 1) if a == b else -(scale ** (t + 1)) for a in range(2)] for b, _ in omega] for t in range(n)]
    )
    return Context.from_arrays(
        mu,
        u,
        theta_labels=tuple(f"theta{t}" for t in range(1, n + 1)),
        omega_labels=tuple(f"b{b}k{k + 1}" for b, k in omega),
        action_labels=("guess0", "guess1"),
        name="side-channel-gap",
    )


def iid_gap(n: int = 3) -> Context:
    """Guess the signal: type theta earns 2^theta for a correct guess.
    Signals are uniform and independent of the type."""
    masses = np.array([2.0 ** -t for t in range(1, n + 1)])
    masses /= masses.sum()
    u = np.array([np.eye(n) * 2.0 ** (t + 1) for t in range(n)])
    return Context.from_arrays(
        np.outer(np.full(n, 1.0 / n), masses),
        u,
        theta_labels=tuple(f"theta{t}" for t in range(1, n + 1)),
        action_labels=tuple(f"guess{w}" for w in range(n)),
        name="iid-gap",
    )


def iid_gap_perturbation(n: int = 3) -> np.ndarray:
    """Zero-mass direction correlating signal w with type w; mu + t * eta has
    full rank for small t > 0."""
    return np.eye(n) - np.full((n, n), 1.0 / n)


CONTEXTS = {
    "two-key-box": two_key_box,
    "two-key-box-uniform": two_key_box_uniform,
    "two-key-box-perturbed": two_key_box_perturbed,
    "interactive-gap": interactive_gap_context,
    "quadratic-support": quadratic_support,
    "envelope-gap": envelope_gap,
    "side-channel-gap": side_channel_gap,
    "iid-gap": iid_gap,
}
