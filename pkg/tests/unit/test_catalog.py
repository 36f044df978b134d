# tests/unit/test_catalog.py
import numpy as np
import pytest

from app.worker.logic import catalog
from app.worker.logic.context import validate_context


@pytest.mark.parametrize("name", sorted(catalog.CONTEXTS))
def test_catalogued_contexts_are_valid(name):
    ctx = catalog.CONTEXTS[name]()
    assert validate_context(ctx) == []
    assert ctx.name == name


def test_side_channel_signals_pair_a_bit_with_a_reading():
    ctx = catalog.side_channel_gap()
    assert ctx.m == 6
    assert ctx.omega_labels[:3] == ("b0k1", "b0k2", "b0k3")
    assert not ctx.is_independent


def test_iid_perturbation_moves_no_mass():
    eta = catalog.iid_gap_perturbation(3)
    assert eta.sum() == pytest.approx(0.0)
    ctx = catalog.iid_gap()
    assert ctx.is_independent
    assert np.linalg.matrix_rank(ctx.mu + 1e-5 * eta) == 3


def test_quadratic_support_is_independent():
    ctx = catalog.quadratic_support()
    assert ctx.is_independent
    assert ctx.num_actions == ctx.n + 1
