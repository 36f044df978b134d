# app/worker/logic/experiments.py
import logging
from typing import Iterable

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidInput, InvalidPerturbation
from app.models.context import Context
from app.models.fixtures import GapRow, GapTable
from app.worker.logic.mechanisms import revenue_report

logger = logging.getLogger(__name__)


def perturbed_context(base: Context, perturbation: np.ndarray, t: float) -> Context:
    """base.mu + t * perturbation, rejected if it leaves the probability simplex."""
    mu = base.mu + t * perturbation
    if np.any(mu < -settings.LOAD_TOLERANCE):
        worst = np.unravel_index(int(np.argmin(mu)), mu.shape)
        raise InvalidPerturbation(
            f"mu + {t!r} * eta has a negative entry {mu[worst]!r} at {tuple(int(i) for i in worst)}",
            t=t,
        )
    if np.any(mu.sum(axis=0) <= 0):
        raise InvalidPerturbation(f"mu + {t!r} * eta gives a type zero mass", t=t)
    return base.with_mu(np.clip(mu, 0.0, None), name=f"{base.name}+{t:g}*eta")


def gap_experiment(base: Context, perturbation, t_range: Iterable[float]) -> GapTable:
    """Revenue of every mechanism class along the ray mu + t * eta, t = 0 included."""
    log = logging.LoggerAdapter(logger, {"context_name": base.name})
    eta = np.asarray(perturbation, dtype=float)
    if eta.shape != base.mu.shape:
        raise InvalidInput(f"Perturbation has shape {eta.shape}, expected {base.mu.shape}")
    if abs(float(eta.sum())) > settings.LOAD_TOLERANCE:
        raise InvalidPerturbation(f"Perturbation must have zero total mass (sums to {float(eta.sum())!r})")

    points = sorted({0.0, *(float(t) for t in t_range)})
    contexts = [perturbed_context(base, eta, t) for t in points]

    rows = []
    for t, ctx in zip(points, contexts):
        report = revenue_report(ctx)
        rows.append(
            GapRow(
                t=t,
                outcomes_revenue=report.r,
                mappings_revenue=report.rc,
                outcomes_npt_revenue=report.rp,
                envelope_revenue=report.re,
                full_surplus=report.full_surplus,
            )
        )
        log.info(f"t={t:g}: R={report.r:.12g} Rc={report.rc:.12g} fullSurplus={report.full_surplus:.12g}")
    return GapTable(context_name=base.name, rows=tuple(rows))
