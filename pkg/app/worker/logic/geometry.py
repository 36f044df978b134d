# app/worker/logic/geometry.py
"""Posterior geometry: the finite set of interesting posteriors and its grid
refinement.

The value functions V_theta are piecewise linear over the simplex; their
linearity regions are cut out by indifference hyperplanes between pairs of
actions. Every vertex of the common refinement is found by solving each
square system made of (support size - 1) constraint rows plus the
normalisation row, keeping the solutions that land inside the simplex.
"""
import itertools
import logging
from math import comb

import numpy as np

from app.core.config import settings
from app.core.exceptions import ComplexityLimit, DegeneratePrior, InvalidInput
from app.models.context import Context
from app.models.geometry import GeometryFrame, IndifferenceHyperplane, PosteriorSet, Provenance

logger = logging.getLogger(__name__)

_DETERMINANT_FLOOR = 1e-12
_FEASIBILITY_SLACK = 1e-10


def default_frame(ctx: Context) -> GeometryFrame:
    return GeometryFrame.INDEPENDENT if ctx.is_independent else GeometryFrame.CORRELATED


def indifference_hyperplanes(ctx: Context, frame: GeometryFrame | None = None) -> list[IndifferenceHyperplane]:
    frame = frame or default_frame(ctx)
    planes = []
    for theta in range(ctx.n):
        scale = ctx.type_given_signal[:, theta] if frame == GeometryFrame.CORRELATED else 1.0
        for a, b in itertools.combinations(range(ctx.num_actions), 2):
            normal = (ctx.u[theta, :, a] - ctx.u[theta, :, b]) * scale
            if np.max(np.abs(normal)) <= settings.LOAD_TOLERANCE:
                continue
            planes.append(IndifferenceHyperplane(theta=theta, actions=(a, b), normal=normal))
    return planes


def _constraint_rows(ctx: Context, frame: GeometryFrame, support: tuple[int, ...]) -> np.ndarray:
    """Unit-norm hyperplane normals on the support coordinates, then the facets."""
    normals = []
    for plane in indifference_hyperplanes(ctx, frame):
        row = plane.normal[list(support)]
        peak = np.max(np.abs(row))
        if peak <= settings.LOAD_TOLERANCE:
            continue
        row = row / peak
        leading = row[np.flatnonzero(np.abs(row) > settings.LOAD_TOLERANCE)[0]]
        normals.append(row if leading > 0 else -row)
    distinct = _dedupe(np.array(normals).reshape(-1, len(support)), settings.LOAD_TOLERANCE)
    return np.vstack([distinct, np.eye(len(support))])


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    """Greedy L-infinity dedup in lexicographic order; output is canonically sorted."""
    if points.shape[0] == 0:
        return points
    points = np.unique(np.round(points, 13), axis=0)
    points = points[np.lexsort(points.T[::-1])]
    kept = np.empty_like(points)
    count = 0
    for q in points:
        if count and np.abs(kept[:count] - q).max(axis=1).min() <= tol:
            continue
        kept[count] = q
        count += 1
    return kept[:count].copy()


def _solve_vertices(rows: np.ndarray, dim: int) -> np.ndarray:
    choose = dim - 1
    total = comb(rows.shape[0], choose)
    if total > settings.QSTAR_MAX_SYSTEMS:
        raise ComplexityLimit(
            f"Vertex enumeration needs {total} systems (cap {settings.QSTAR_MAX_SYSTEMS})",
            systems=total,
        )

    rhs = np.zeros((dim, 1))
    rhs[-1, 0] = 1.0
    found = []
    combos = itertools.combinations(range(rows.shape[0]), choose)
    while True:
        batch = np.array(list(itertools.islice(combos, settings.QSTAR_BATCH_SIZE)), dtype=int)
        if batch.size == 0:
            break
        systems = np.empty((batch.shape[0], dim, dim))
        systems[:, :choose, :] = rows[batch]
        systems[:, choose, :] = 1.0
        regular = np.abs(np.linalg.det(systems)) > _DETERMINANT_FLOOR
        if not regular.any():
            continue
        solutions = np.linalg.solve(systems[regular], np.broadcast_to(rhs, (int(regular.sum()), dim, 1)))[..., 0]
        inside = np.all(solutions >= -_FEASIBILITY_SLACK, axis=1)
        if inside.any():
            points = np.clip(solutions[inside], 0.0, None)
            points /= points.sum(axis=1, keepdims=True)
            found.append(_dedupe(points, settings.QSTAR_DEDUP_TOL))
    logger.debug(f"Solved {total} candidate systems over {rows.shape[0]} constraint rows")
    return np.vstack(found) if found else np.empty((0, dim))


def _embed(points: np.ndarray, support: tuple[int, ...], m: int) -> np.ndarray:
    full = np.zeros((points.shape[0], m))
    full[:, list(support)] = points
    return full


def interesting_posteriors(ctx: Context, frame: GeometryFrame | None = None) -> PosteriorSet:
    frame = frame or default_frame(ctx)
    support = ctx.support
    dim = len(support)
    prior = ctx.prior[list(support)] / ctx.prior[list(support)].sum()

    candidates = [np.eye(dim), prior[None, :]]
    if dim > 1:
        candidates.append(_solve_vertices(_constraint_rows(ctx, frame, support), dim))
    points = _dedupe(np.vstack(candidates), settings.QSTAR_DEDUP_TOL)

    logger.info(
        f"Interesting posteriors: {points.shape[0]} points ({frame.value} frame, support size {dim})",
        extra={"context_name": ctx.name},
    )
    return PosteriorSet(_embed(points, support, ctx.m), Provenance.QSTAR, support)


def active_constraint_count(ctx: Context, q, frame: GeometryFrame | None = None, tol: float = 1e-9) -> int:
    """Number of hyperplane or facet constraints tight at q (support coordinates only)."""
    frame = frame or default_frame(ctx)
    support = ctx.support
    rows = _constraint_rows(ctx, frame, support)
    local = np.asarray(q, dtype=float)[list(support)]
    return int(np.sum(np.abs(rows @ local) <= tol))


def _lattice(dim: int, resolution: int) -> np.ndarray:
    bars = np.array(list(itertools.combinations(range(resolution + dim - 1), dim - 1)), dtype=int).reshape(-1, dim - 1)
    edges = np.hstack(
        [np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), resolution + dim - 1)]
    )
    return (np.diff(edges, axis=1) - 1) / resolution


def grid_refinement(base: PosteriorSet, resolution: int) -> PosteriorSet:
    if resolution < 1:
        raise InvalidInput(f"Grid resolution must be a positive integer, got {resolution}")
    support = base.support
    dim = len(support)
    if dim == 2 and resolution > 200:
        raise ComplexityLimit(f"Grid resolution {resolution} exceeds 200 for two signals")
    if dim == 3 and resolution > 40:
        raise ComplexityLimit(f"Grid resolution {resolution} exceeds 40 for three signals")
    count = comb(resolution + dim - 1, dim - 1)
    if count > settings.GRID_MAX_POINTS:
        raise ComplexityLimit(
            f"Grid with resolution {resolution} has {count} points (cap {settings.GRID_MAX_POINTS})",
            points=count,
        )

    lattice = _lattice(dim, resolution) if dim > 1 else np.ones((1, 1))
    local = base.points[:, list(support)]
    scaled = local * resolution
    on_lattice = np.all(np.abs(scaled - np.round(scaled)) <= settings.QSTAR_DEDUP_TOL * resolution, axis=1)
    merged = np.vstack([lattice, local[~on_lattice]])
    merged = merged[np.lexsort(merged.T[::-1])]
    return PosteriorSet(_embed(merged, support, base.dimension), Provenance.UNION, support)


def decompose_through_prior(p, q) -> tuple[float, np.ndarray]:
    """Write p = gamma * q + (1 - gamma) * r with r on the simplex boundary.

    r is the point where the ray from q through p leaves the simplex.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p <= 0) & (q > 0)):
        raise DegeneratePrior("Prior vanishes on a coordinate the posterior charges")
    direction = p - q
    if np.max(np.abs(direction)) <= settings.LOAD_TOLERANCE:
        return 0.0, p.copy()
    falling = direction < -settings.LOAD_TOLERANCE
    step = float(np.min(p[falling] / -direction[falling]))
    r = np.clip(p + step * direction, 0.0, None)
    r /= r.sum()
    return step / (1.0 + step), r
