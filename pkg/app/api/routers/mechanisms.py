# app/api/routers/mechanisms.py
from fastapi import APIRouter
from app.api import schemas
from app.api.dependencies import request_context
from app.worker.logic.mechanisms import revenue_report
from app.worker.logic.reporting import to_payload
from app.worker.logic.solver import posterior_set, solve_mechanism
import logging

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/mechanisms",
    tags=["Mechanisms"],
)


@router.post("/solve")
def solve(request: schemas.SolveRequest) -> dict:
    """Optimal menu for one mechanism class, with its verification report."""
    ctx = request_context(request.context)
    logger.info(
        f"Solving {request.mechanism} for context {ctx.name!r}",
        extra={"context_name": ctx.name, "mechanism": request.mechanism},
    )
    result = solve_mechanism(
        ctx,
        request.mechanism,
        epsilon=request.epsilon,
        reduce=request.reduce_support,
        recover=request.recover_transfers,
        grid=request.grid,
    )
    return to_payload(result)


@router.post("/report")
def report(request: schemas.ReportRequest) -> dict:
    """Revenue of every mechanism class side by side."""
    ctx = request_context(request.context)
    return to_payload(revenue_report(ctx, posterior_set(ctx, request.grid)))
