# tests/unit/test_context.py
import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.core.exceptions import InvalidInput, ZeroMass
from app.models.context import Context, Frame
from app.worker.logic.context import (
    belief_transform,
    context_to_dict,
    contract_values,
    full_surplus,
    likelihood_ratios,
    load_context,
    posterior_for_type,
    prior_values,
    surplus,
    surpluses,
    validate_context,
    value_function,
)
from tests.conftest import random_context


def test_load_context_accepts_valid_payload(two_key_box_payload):
    ctx = load_context(two_key_box_payload)
    assert (ctx.n, ctx.m, ctx.num_actions) == (2, 2, 2)
    assert ctx.theta_labels == ("theta1", "theta2")
    np.testing.assert_allclose(ctx.prior, [0.5, 0.5])
    np.testing.assert_allclose(context_to_dict(ctx)["mu"], two_key_box_payload["mu"])


def test_load_context_rejects_mass_not_one(two_key_box_payload):
    two_key_box_payload["mu"] = [[0.2, 0.3], [0.3, 0.3]]
    with pytest.raises(InvalidInput) as excinfo:
        load_context(two_key_box_payload)
    assert any(v["invariant"] == "mass" for v in excinfo.value.details["violations"])


def test_load_context_rejects_negative_entry(two_key_box_payload):
    two_key_box_payload["mu"] = [[-0.1, 0.6], [0.3, 0.2]]
    with pytest.raises(InvalidInput) as excinfo:
        load_context(two_key_box_payload)
    negative = [v for v in excinfo.value.details["violations"] if v["invariant"] == "nonnegative"]
    assert negative[0]["index"] == [0, 0]


def test_load_context_rejects_shape_mismatch(two_key_box_payload):
    two_key_box_payload["u"] = [[[3.0, 0.0]], [[5.0, 0.0]]]
    with pytest.raises(InvalidInput, match="u has shape"):
        load_context(two_key_box_payload)


def test_load_context_rejects_duplicate_labels(two_key_box_payload):
    two_key_box_payload["actions"] = ["open", "open"]
    with pytest.raises(InvalidInput, match="duplicate labels"):
        load_context(two_key_box_payload)


def test_load_context_rejects_missing_key(two_key_box_payload):
    del two_key_box_payload["mu"]
    with pytest.raises(InvalidInput, match="Malformed context"):
        load_context(two_key_box_payload)


def test_zero_mass_type_is_a_violation():
    ctx = Context.from_arrays([[0.5, 0.0], [0.5, 0.0]], np.zeros((2, 2, 1)))
    assert [v.invariant for v in validate_context(ctx)] == ["zero-mass type"]


def test_zero_mass_signal_loads_with_reduced_support(two_key_box_payload):
    two_key_box_payload["omega"] = ["omega0", "omega1", "never"]
    two_key_box_payload["mu"] = [[0.2, 0.3], [0.3, 0.2], [0.0, 0.0]]
    two_key_box_payload["u"] = [
        [[3.0, 0.0], [0.0, 3.0], [1.0, 1.0]],
        [[5.0, 0.0], [0.0, 5.0], [1.0, 1.0]],
    ]
    ctx = load_context(two_key_box_payload)
    assert ctx.support == (0, 1)
    assert ctx.zero_mass_states == (2,)


def test_surpluses_of_two_key_box(two_key_box):
    np.testing.assert_allclose(surpluses(two_key_box), [1.2, 2.0], atol=1e-12)
    assert full_surplus(two_key_box) == pytest.approx(1.6)


def test_value_function_is_homogeneous_and_reports_ties(two_key_box):
    q = np.array([0.3, 0.7])
    assert value_function(two_key_box, 0, 2 * q).value == pytest.approx(2 * value_function(two_key_box, 0, q).value)
    tie = value_function(two_key_box, 0, [0.5, 0.5])
    assert tie.value == pytest.approx(1.5)
    assert tie.actions == (0, 1)


def test_observer_frame_applies_belief_transform(two_key_box):
    observer = value_function(two_key_box, 0, [0.5, 0.5], Frame.OBSERVER)
    # D_theta1 (0.5, 0.5) = (0.2, 0.3)
    assert observer.value == pytest.approx(0.9)
    assert observer.actions == (1,)


def test_posterior_for_type_updates_prior(two_key_box):
    posterior, mass = posterior_for_type(two_key_box, 0, two_key_box.prior)
    np.testing.assert_allclose(posterior, [0.4, 0.6])
    assert mass == pytest.approx(0.5)


def test_posterior_for_type_rejects_impossible_signal():
    ctx = Context.from_arrays([[0.5, 0.0], [0.25, 0.25]], np.zeros((2, 2, 1)))
    with pytest.raises(ZeroMass):
        posterior_for_type(ctx, 1, [1.0, 0.0])


def test_likelihood_ratio_is_one_at_the_prior(two_key_box):
    np.testing.assert_allclose(likelihood_ratios(two_key_box, two_key_box.prior)[:, 0], [1.0, 1.0])


def test_contract_values_at_prior_are_prior_values(rng):
    ctx = random_context(rng, n=3, m=3, actions=3)
    np.testing.assert_allclose(contract_values(ctx, ctx.prior)[:, 0], prior_values(ctx), atol=1e-12)


def test_independence_and_rank(two_key_box, uniform_two_key_box):
    assert uniform_two_key_box.is_independent
    assert uniform_two_key_box.numeric_rank == 1
    assert not two_key_box.is_independent
    assert two_key_box.numeric_rank == 2


def test_context_arrays_are_read_only(two_key_box):
    with pytest.raises(ValueError):
        two_key_box.mu[0, 0] = 1.0


def _random_simplex_point(rng, m):
    return rng.dirichlet(np.ones(m))


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=30, deadline=None)
def test_value_function_is_convex(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, n=2, m=3, actions=3)
    q1, q2 = _random_simplex_point(rng, 3), _random_simplex_point(rng, 3)
    weight = float(rng.uniform())
    for theta in range(ctx.n):
        for frame in Frame:
            mixed = value_function(ctx, theta, weight * q1 + (1.0 - weight) * q2, frame).value
            ends = weight * value_function(ctx, theta, q1, frame).value
            ends += (1.0 - weight) * value_function(ctx, theta, q2, frame).value
            assert mixed <= ends + 1e-9


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=30, deadline=None)
def test_belief_transforms_partition_each_signal(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, n=int(rng.integers(2, 5)), m=int(rng.integers(2, 5)), actions=2)
    total = sum(belief_transform(ctx, theta).diag for theta in range(ctx.n))
    np.testing.assert_allclose(total, np.ones(ctx.m), atol=1e-12)


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=30, deadline=None)
def test_positive_rescaling_keeps_the_argmax(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, n=2, m=3, actions=4)
    factor = float(rng.uniform(0.1, 10.0))
    scaled = Context.from_arrays(ctx.mu, ctx.u * factor)
    q = _random_simplex_point(rng, 3)
    for theta in range(ctx.n):
        assert value_function(scaled, theta, q).actions == value_function(ctx, theta, q).actions


def _has_dominant_action(ctx, theta):
    seen = ctx.conditional[:, theta] > 0
    payoffs = ctx.u[theta][seen]
    return bool(np.any(np.all(payoffs == payoffs.max(axis=1, keepdims=True), axis=0)))


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=40, deadline=None)
def test_surplus_vanishes_exactly_when_one_action_is_always_best(seed):
    rng = np.random.default_rng(seed)
    n, m, actions = 2, int(rng.integers(2, 5)), int(rng.integers(2, 4))
    mu = rng.uniform(0.05, 1.0, size=(m, n))
    # coarse payoffs so that dominant actions actually occur
    u = rng.integers(0, 2, size=(n, m, actions)).astype(float)
    ctx = Context.from_arrays(mu / mu.sum(), u)
    for theta in range(n):
        assert (surplus(ctx, theta) <= 1e-12) == _has_dominant_action(ctx, theta)
