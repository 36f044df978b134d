# tests/unit/test_geometry.py
import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from app.core.config import settings
from app.core.exceptions import ComplexityLimit, DegeneratePrior, InvalidInput
from app.models.context import Context
from app.models.geometry import GeometryFrame, Provenance
from app.worker.logic.geometry import (
    active_constraint_count,
    decompose_through_prior,
    default_frame,
    grid_refinement,
    interesting_posteriors,
)
from tests.conftest import random_context


def test_two_key_box_posteriors(two_key_box):
    posteriors = interesting_posteriors(two_key_box)
    assert default_frame(two_key_box) == GeometryFrame.CORRELATED
    assert posteriors.provenance == Provenance.QSTAR
    # corners, the prior and one indifference point per type
    np.testing.assert_allclose(
        posteriors.points,
        [[0.0, 1.0], [0.4, 0.6], [0.5, 0.5], [0.6, 0.4], [1.0, 0.0]],
        atol=1e-12,
    )


def test_independent_context_uses_unscaled_hyperplanes(uniform_two_key_box):
    posteriors = interesting_posteriors(uniform_two_key_box)
    assert default_frame(uniform_two_key_box) == GeometryFrame.INDEPENDENT
    assert len(posteriors) == 3
    assert posteriors.contains([0.5, 0.5])


def test_vertices_are_tight_on_enough_constraints(rng):
    ctx = random_context(rng, n=2, m=3, actions=3)
    posteriors = interesting_posteriors(ctx)
    dim = len(ctx.support)
    prior = ctx.prior
    for q in posteriors:
        if np.allclose(q, prior):
            continue
        assert active_constraint_count(ctx, q) >= dim - 1


def test_zero_mass_signal_stays_outside_support():
    mu = [[0.25, 0.25], [0.3, 0.2], [0.0, 0.0]]
    u = np.array([[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], [[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]]])
    posteriors = interesting_posteriors(Context.from_arrays(mu, u))
    assert posteriors.support == (0, 1)
    assert np.all(posteriors.points[:, 2] == 0.0)


def test_vertex_enumeration_respects_system_cap(rng, monkeypatch):
    monkeypatch.setattr(settings, "QSTAR_MAX_SYSTEMS", 1)
    with pytest.raises(ComplexityLimit):
        interesting_posteriors(random_context(rng, n=2, m=3, actions=3))


def test_grid_refinement_adds_lattice(two_key_box):
    base = interesting_posteriors(two_key_box)
    refined = grid_refinement(base, 8)
    assert refined.provenance == Provenance.UNION
    # 9 lattice points plus the two off-lattice indifference points
    assert len(refined) == 11
    for q in base:
        assert refined.contains(q)
    assert refined.contains([0.125, 0.875])


@pytest.mark.parametrize(
    "resolution, error",
    [(0, InvalidInput), (201, ComplexityLimit)],
)
def test_grid_refinement_rejects_bad_resolution(two_key_box, resolution, error):
    with pytest.raises(error):
        grid_refinement(interesting_posteriors(two_key_box), resolution)


def test_decompose_through_prior_lands_on_boundary():
    p = np.array([0.5, 0.3, 0.2])
    q = np.array([0.2, 0.4, 0.4])
    gamma, r = decompose_through_prior(p, q)
    assert 0.0 < gamma < 1.0
    assert r.min() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(gamma * q + (1.0 - gamma) * r, p, atol=1e-12)


def test_decompose_through_prior_needs_positive_prior():
    with pytest.raises(DegeneratePrior):
        decompose_through_prior([1.0, 0.0], [0.5, 0.5])


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=25, deadline=None)
def test_posteriors_are_distinct_points_of_the_simplex(seed):
    ctx = random_context(np.random.default_rng(seed), n=3, m=3, actions=3)
    points = interesting_posteriors(ctx).points
    assert np.all(points >= 0.0)
    np.testing.assert_allclose(points.sum(axis=1), 1.0, atol=1e-9)
    gaps = np.abs(points[:, None, :] - points[None, :, :]).max(axis=2)
    np.fill_diagonal(gaps, np.inf)
    assert gaps.min() > settings.QSTAR_DEDUP_TOL


def test_decompose_through_prior_at_the_prior_itself():
    p = np.array([0.2, 0.5, 0.3])
    gamma, r = decompose_through_prior(p, p.copy())
    assert gamma == 0.0
    np.testing.assert_allclose(r, p)


def test_decompose_through_prior_is_symmetric_on_two_signals():
    p = np.array([0.5, 0.5])
    gamma, r = decompose_through_prior(p, [0.7, 0.3])
    mirrored_gamma, mirrored_r = decompose_through_prior(p, [0.3, 0.7])
    assert gamma == pytest.approx(5.0 / 7.0)
    assert mirrored_gamma == pytest.approx(gamma)
    np.testing.assert_allclose(r, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(mirrored_r, r[::-1], atol=1e-12)


@given(seed=st.integers(min_value=0, max_value=10_000))
@hypothesis_settings(max_examples=20, deadline=None)
def test_independent_contexts_get_the_same_posteriors_in_both_frames(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, n=int(rng.integers(2, 4)), m=3, actions=3, independent=True)
    observer = interesting_posteriors(ctx, GeometryFrame.CORRELATED).points
    own = interesting_posteriors(ctx, GeometryFrame.INDEPENDENT).points
    assert observer.shape == own.shape
    np.testing.assert_allclose(observer, own, atol=1e-9)
