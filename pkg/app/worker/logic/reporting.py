# app/worker/logic/reporting.py
"""JSON and plain-text rendering of solver results.

JSON output is deterministic: keys are sorted, floats use Python's shortest
round-trip repr and NaN/inf become null. Text output prints a one-line
summary for the result type followed by every numeric field at 12
significant digits.
"""
import enum
import json
import logging
import math
from functools import singledispatch
from typing import Any

import numpy as np
from tabulate import tabulate

from app.core.exceptions import InvalidInput
from app.models.fixtures import CheckOutcome, FixtureRun, GapTable
from app.models.geometry import PosteriorSet
from app.models.lp import LpSolution
from app.models.menu import ConstraintCheck, FullSurplusContract, Menu, MenuReport, RevenueReport
from app.models.protocol import EvaluationResult, StopRecord, TypeOutcome

logger = logging.getLogger(__name__)

FORMATS = ("json", "text")


def _number(value: float) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


@singledispatch
def to_payload(result: Any) -> Any:
    """Plain JSON-compatible structure for any result object."""
    if result is None or isinstance(result, (bool, str)):
        return result
    if isinstance(result, enum.Enum):
        return result.value
    if isinstance(result, (int, np.integer)):
        return int(result)
    if isinstance(result, (float, np.floating)):
        return _number(result)
    if isinstance(result, np.ndarray):
        return to_payload(result.tolist())
    if isinstance(result, dict):
        return {str(k): to_payload(v) for k, v in result.items()}
    if isinstance(result, (list, tuple)):
        return [to_payload(v) for v in result]
    raise InvalidInput(f"No report layout for {type(result).__name__}")


@to_payload.register
def _(menu: Menu) -> dict:
    payload = {
        "kind": menu.kind.value,
        "labels": list(menu.labels),
        "posteriors": to_payload(menu.posteriors),
        "weights": to_payload(menu.weights),
        "support_sizes": menu.support_sizes(),
    }
    if menu.prices is not None:
        payload["prices"] = to_payload(menu.prices)
    if menu.scaled_payments is not None:
        payload["scaled_payments"] = to_payload(menu.scaled_payments)
    if menu.payments is not None:
        payload["payments"] = to_payload(menu.payments)
    return payload


@to_payload.register
def _(check: ConstraintCheck) -> dict:
    return {
        "name": check.name,
        "kind": check.kind,
        "margin": _number(check.margin),
        "status": check.status,
        "identical": check.identical,
    }


@to_payload.register
def _(report: MenuReport) -> dict:
    return {
        "valid": report.valid,
        "revenue": _number(report.revenue),
        "utilities": to_payload(report.utilities),
        "prior_values": to_payload(report.prior_values),
        "expected_payments_buyer_frame": to_payload(report.expected_payments),
        "expected_payments_observer_frame": to_payload(report.observer_payments),
        "feasibility_residual": _number(report.feasibility_residual),
        "consistency_residual": _number(report.consistency_residual),
        "binding": [c.name for c in report.binding()],
        "violated": [c.name for c in report.violated()],
        "checks": [to_payload(c) for c in report.checks],
    }


@to_payload.register
def _(report: RevenueReport) -> dict:
    return {
        "revenue": {
            "Re": _number(report.re),
            "Rc": _number(report.rc),
            "Rp": _number(report.rp),
            "R": _number(report.r),
            "full_surplus": _number(report.full_surplus),
        },
        "envelope_price": _number(report.envelope_price),
        "surpluses": to_payload(report.surpluses),
        "posterior_count": report.posterior_count,
        "full_surplus_payments": to_payload(report.full_surplus_payments),
        "diagnostics": list(report.diagnostics),
        "menus": {
            "envelope": to_payload(report.envelope_menu),
            "mappings": to_payload(report.mappings_menu),
            "outcomes_npt": to_payload(report.outcomes_npt_menu),
            "outcomes": to_payload(report.outcomes_menu),
        },
        "verification": {key: to_payload(check) for key, check in report.menu_reports.items()},
    }


@to_payload.register
def _(contract: FullSurplusContract) -> dict:
    return {
        "payments": to_payload(contract.payments),
        "revenue": _number(contract.revenue),
        "condition_number": _number(contract.condition_number),
        "warnings": list(contract.warnings),
    }


@to_payload.register
def _(stop: StopRecord) -> dict:
    return {
        "node": stop.node_id,
        "probability": _number(stop.probability),
        "likelihood": to_payload(stop.likelihood),
        "defected": stop.defected,
    }


@to_payload.register
def _(outcome: TypeOutcome) -> dict:
    return {
        "theta": outcome.theta,
        "utility": _number(outcome.utility),
        "expected_transfer": _number(outcome.expected_transfer),
        "stops": [to_payload(s) for s in outcome.stops],
    }


@to_payload.register
def _(result: EvaluationResult) -> dict:
    if not result.outcomes:
        return {}
    return {"revenue": _number(result.revenue), "types": [to_payload(o) for o in result.outcomes]}


@to_payload.register
def _(posteriors: PosteriorSet) -> dict:
    return {**posteriors.to_dict(), "count": len(posteriors)}


@to_payload.register
def _(solution: LpSolution) -> dict:
    return {
        "status": solution.status.value,
        "objective": _number(solution.objective),
        "iterations": solution.iterations,
        "primal": to_payload(dict(solution.primal)),
        "dual": to_payload(dict(solution.dual)),
    }


@to_payload.register
def _(check: CheckOutcome) -> dict:
    return {
        "fixture": check.fixture,
        "label": check.label,
        "expected": _number(check.expected),
        "actual": None if check.actual is None else _number(check.actual),
        "delta": None if check.delta is None else _number(check.delta),
        "tolerance": _number(check.tolerance),
        "source": check.source.value,
        "comparison": check.comparison.value,
        "passed": check.passed,
        "error": check.error,
    }


@to_payload.register
def _(run: FixtureRun) -> dict:
    return {
        "passed": run.passed,
        "fixtures": list(run.fixtures),
        "failures": len(run.failures),
        "checks": [to_payload(c) for c in run.checks],
    }


@to_payload.register
def _(table: GapTable) -> dict:
    return {
        "context": table.context_name,
        "rows": [
            {
                "t": _number(row.t),
                "R": _number(row.outcomes_revenue),
                "Rc": _number(row.mappings_revenue),
                "Rp": _number(row.outcomes_npt_revenue),
                "Re": _number(row.envelope_revenue),
                "full_surplus": _number(row.full_surplus),
            }
            for row in table.rows
        ],
    }


def _fmt(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _flatten(payload: Any, prefix: str = "") -> list[str]:
    if isinstance(payload, dict):
        lines = []
        for key in sorted(payload):
            lines.extend(_flatten(payload[key], f"{prefix}.{key}" if prefix else str(key)))
        return lines
    if isinstance(payload, list):
        if all(not isinstance(v, (dict, list)) for v in payload):
            return [f"{prefix} = [{', '.join(_fmt(v) for v in payload)}]"]
        lines = []
        for i, value in enumerate(payload):
            lines.extend(_flatten(value, f"{prefix}[{i}]"))
        return lines
    return [f"{prefix} = {_fmt(payload)}"]


@singledispatch
def _headline(result: Any, payload: Any) -> list[str]:
    return []


@_headline.register
def _(report: RevenueReport, payload: dict) -> list[str]:
    return [f"Re={report.re:.12g} Rc={report.rc:.12g} Rp={report.rp:.12g} R={report.r:.12g}"]


@_headline.register
def _(run: FixtureRun, payload: dict) -> list[str]:
    rows = [
        [c.fixture, c.label, _fmt(c.expected), _fmt(c.actual), _fmt(c.delta), "PASS" if c.passed else "FAIL"]
        for c in run.checks
    ]
    table = tabulate(rows, headers=["fixture", "check", "expected", "actual", "delta", ""], disable_numparse=True)
    summary = f"{len(run.checks) - len(run.failures)}/{len(run.checks)} checks passed over {len(run.fixtures)} fixtures"
    return [summary, table]


@_headline.register
def _(table: GapTable, payload: dict) -> list[str]:
    rows = [[_fmt(r[k]) for k in ("t", "R", "Rc", "Rp", "Re", "full_surplus")] for r in payload["rows"]]
    return [tabulate(rows, headers=["t", "R", "Rc", "Rp", "Re", "full surplus"], disable_numparse=True)]


@_headline.register
def _(result: EvaluationResult, payload: dict) -> list[str]:
    if not result.outcomes:
        return []
    return [f"revenue={result.revenue:.12g}"]


def emit_report(result: Any, fmt: str = "json") -> str:
    if fmt not in FORMATS:
        raise InvalidInput(f"Unknown report format {fmt!r}; expected one of {FORMATS}")
    payload = to_payload(result)
    if fmt == "json":
        return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    lines = _headline(result, payload) + _flatten(payload)
    return "\n".join(lines) + "\n" if lines else ""
