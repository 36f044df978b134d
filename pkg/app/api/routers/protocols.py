# app/api/routers/protocols.py
from fastapi import APIRouter
from app.api import schemas
from app.api.dependencies import request_context
from app.worker.logic.reporting import to_payload
from app.worker.logic.solver import evaluate_protocol

router = APIRouter(
    prefix="/protocols",
    tags=["Protocols"],
)


@router.post("/evaluate")
def evaluate(request: schemas.EvaluateRequest) -> dict:
    ctx = request_context(request.context)
    return to_payload(evaluate_protocol(ctx, request.tree, request.mode, request.strategies))
