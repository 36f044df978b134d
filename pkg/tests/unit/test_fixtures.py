# tests/unit/test_fixtures.py
import pytest

from app.core.exceptions import InvalidInput
from app.models.fixtures import Comparison, Expectation, FixtureCase
from app.worker.logic import catalog
from app.worker.logic.fixtures import (
    FIXTURE_ALIASES,
    FIXTURE_BUILDERS,
    FIXTURE_MANIFEST,
    run_fixtures,
    select_fixtures,
)


def test_manifest_lists_every_fixture_and_context():
    assert FIXTURE_MANIFEST == tuple(FIXTURE_BUILDERS)
    assert set(FIXTURE_MANIFEST) == set(catalog.CONTEXTS)


def test_select_fixtures_by_glob():
    assert select_fixtures("two-key-*") == ["two-key-box", "two-key-box-uniform", "two-key-box-perturbed"]
    assert select_fixtures(None) == list(FIXTURE_MANIFEST)
    assert select_fixtures("no-such-*") == []


def test_select_fixtures_by_alias():
    assert select_fixtures("example-4.2") == ["two-key-box"]
    assert select_fixtures("example-4.3*") == ["two-key-box-uniform", "two-key-box-perturbed"]
    assert select_fixtures("app-d-*") == ["side-channel-gap", "iid-gap"]
    assert set(FIXTURE_ALIASES.values()) == set(FIXTURE_MANIFEST)


@pytest.mark.parametrize("name", FIXTURE_MANIFEST)
def test_every_fixture_checks_duality_and_the_grid(name):
    labels = {e.label for e in FIXTURE_BUILDERS[name]().expectations}
    assert {"mappings duality gap", "outcomes duality gap", "support reduction keeps revenue"} <= labels
    assert any(label.startswith("grid K=") for label in labels)


@pytest.mark.slow
def test_fixture_runs_under_its_alias():
    run = run_fixtures("example-4.3-perturbed")
    assert run.fixtures == ("two-key-box-perturbed",)
    assert run.passed, [(c.label, c.expected, c.actual, c.error) for c in run.failures]


@pytest.mark.slow
@pytest.mark.parametrize("name", FIXTURE_MANIFEST)
def test_fixture_passes(name):
    run = run_fixtures(name)
    assert run.fixtures == (name,)
    assert run.passed, [(c.label, c.expected, c.actual, c.error) for c in run.failures]


def _run_single(two_key_box, *expectations):
    return run_fixtures(cases=[FixtureCase("single", two_key_box, tuple(expectations))])


@pytest.mark.parametrize(
    "expected, actual, tolerance, comparison, passed",
    [
        (100.0, 100.5, 1e-2, Comparison.EQ, True),  # relative slack above 1
        (0.5, 0.52, 1e-2, Comparison.EQ, False),  # absolute slack below 1
        (2.0, 5.0, 0.0, Comparison.GE, True),
        (2.0, 1.9, 0.0, Comparison.GE, False),
        (3.0, 3.0, 0.0, Comparison.LE, True),
        (3.0, 3.1, 0.0, Comparison.LE, False),
        (1.0, float("nan"), 1.0, Comparison.LE, False),
    ],
)
def test_checks_use_scaled_one_or_two_sided_slack(two_key_box, expected, actual, tolerance, comparison, passed):
    run = _run_single(two_key_box, Expectation("check", expected, lambda: actual, tolerance, comparison=comparison))
    assert run.checks[0].passed is passed
    assert run.passed is passed


def test_a_raising_check_fails_with_its_error(two_key_box):
    def broken():
        raise InvalidInput("no such menu")

    run = _run_single(two_key_box, Expectation("broken", 1.0, broken), Expectation("fine", 1.0, lambda: 1.0))
    failure, fine = run.checks
    assert not failure.passed
    assert failure.actual is None
    assert failure.error == "InvalidInput: no such menu"
    assert fine.passed
    assert [c.label for c in run.failures] == ["broken"]
