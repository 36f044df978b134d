# app/worker/logic/jobs.py
"""Job payload handling shared by the Celery task and the synchronous API routes."""
import logging
from typing import Any, Mapping

from app.core.exceptions import InvalidInput
from app.models.context import Context
from app.models.job import JobKind
from app.worker.logic import catalog
from app.worker.logic.context import load_context
from app.worker.logic.experiments import gap_experiment
from app.worker.logic.fixtures import run_fixtures
from app.worker.logic.mechanisms import revenue_report
from app.worker.logic.reporting import to_payload
from app.worker.logic.solver import posterior_set

logger = logging.getLogger(__name__)


def resolve_context(payload: Mapping[str, Any]) -> Context:
    """A context given inline under "context" or by catalogue name under "fixture"."""
    if payload.get("context") is not None:
        return load_context(payload["context"])
    name = payload.get("fixture")
    if name is None:
        raise InvalidInput("Payload needs either 'context' or 'fixture'")
    if name not in catalog.CONTEXTS:
        raise InvalidInput(f"Unknown fixture context {name!r}; known: {sorted(catalog.CONTEXTS)}")
    return catalog.CONTEXTS[name]()


def run_report(payload: Mapping[str, Any]):
    ctx = resolve_context(payload)
    grid = payload.get("grid")
    return revenue_report(ctx, posterior_set(ctx, int(grid) if grid else None))


def run_gap(payload: Mapping[str, Any]):
    ctx = resolve_context(payload)
    if payload.get("perturbation") is not None:
        perturbation = payload["perturbation"]
    elif payload.get("fixture") == "iid-gap":
        perturbation = catalog.iid_gap_perturbation(ctx.n)
    else:
        raise InvalidInput("Gap payload needs a 'perturbation' matrix")
    t_values = payload.get("t") or []
    return gap_experiment(ctx, perturbation, [float(t) for t in t_values])


def run_fixture_suite(payload: Mapping[str, Any]):
    return run_fixtures(payload.get("pattern"))


RUNNERS = {
    JobKind.REPORT: run_report,
    JobKind.GAP: run_gap,
    JobKind.FIXTURES: run_fixture_suite,
}


def execute_job(kind: JobKind | str, payload: Mapping[str, Any]) -> dict:
    """Run one job and return its JSON-ready report."""
    try:
        kind = JobKind(kind)
    except ValueError as e:
        raise InvalidInput(f"Unknown job kind {kind!r}") from e
    return to_payload(RUNNERS[kind](payload or {}))
