# tests/conftest.py
import os

# Jobs run inline against an in-memory job store during tests
os.environ.setdefault("DATABASE_URL", "sqlite://")
os.environ.setdefault("CELERY_TASK_ALWAYS_EAGER", "true")
os.environ.setdefault("CELERY_BROKER_URL", "memory://")
os.environ.setdefault("CELERY_RESULT_BACKEND", "cache+memory://")
os.environ.setdefault("LOG_LEVEL", "WARNING")

import numpy as np
import pytest

from app.core.config import settings
from app.models.context import Context
from app.worker.logic import catalog
from app.worker.logic.context import context_to_dict


def random_context(
    rng: np.random.Generator,
    n: int,
    m: int,
    actions: int,
    independent: bool = False,
    full_rank: bool = False,
    name: str = "random",
) -> Context:
    """Small integer payoffs keep the posterior geometry tractable."""
    if independent:
        mu = np.outer(rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n)))
    elif full_rank:
        # diagonally dominant, so comfortably conditioned
        mu = rng.uniform(0.1, 1.0, size=(m, n)) + 2.0 * np.eye(m, n)
    else:
        mu = rng.uniform(0.05, 1.0, size=(m, n))
    mu = mu / mu.sum()
    u = rng.integers(-4, 6, size=(n, m, actions)).astype(float)
    return Context.from_arrays(mu, u, name=name)


def random_tree_spec(
    rng: np.random.Generator,
    omega_labels,
    max_depth: int = 4,
    max_decisions: int = 5,
) -> dict:
    """Nested tree JSON with at most `max_decisions` buyer and transfer nodes."""
    budget = {"decisions": max_decisions}

    def grow(depth: int) -> dict:
        kinds = ["leaf"] if depth >= max_depth else ["leaf", "seller", "seller", "buyer", "transfer"]
        if budget["decisions"] <= 0:
            kinds = [k for k in kinds if k not in ("buyer", "transfer")]
        kind = str(rng.choice(kinds))
        if kind == "leaf":
            return {"kind": "leaf"}
        if kind == "transfer":
            budget["decisions"] -= 1
            return {"kind": "transfer", "amount": float(np.round(rng.uniform(-1.0, 2.0), 3)), "child": grow(depth + 1)}
        width = int(rng.integers(2, 4))
        if kind == "buyer":
            budget["decisions"] -= 1
            return {"kind": "buyer", "children": [grow(depth + 1) for _ in range(width)]}
        psi = {w: rng.dirichlet(np.ones(width)).tolist() for w in omega_labels}
        return {"kind": "seller", "psi": psi, "children": [grow(depth + 1) for _ in range(width)]}

    return grow(0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def two_key_box():
    return catalog.two_key_box()


@pytest.fixture
def uniform_two_key_box():
    return catalog.two_key_box_uniform()


@pytest.fixture
def interactive_gap_context():
    return catalog.interactive_gap_context()


@pytest.fixture
def two_key_box_payload(two_key_box):
    return context_to_dict(two_key_box)


@pytest.fixture
def derived_tolerance_restored():
    """Undo CLI --tolerance overrides of the global setting."""
    saved = settings.DERIVED_TOLERANCE
    yield
    settings.DERIVED_TOLERANCE = saved
