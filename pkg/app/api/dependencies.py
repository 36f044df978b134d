# app/api/dependencies.py
from typing import Generator
from sqlalchemy import text
from sqlalchemy.orm import Session as SQLAlchemySession
from app.api.schemas import ContextPayload
from app.db import session as db_session
from app.models.context import Context
from app.worker.logic.context import load_context
from fastapi import HTTPException, status
import logging

logger = logging.getLogger(__name__)


def get_db() -> Generator[SQLAlchemySession, None, None]:
    if db_session.SessionLocal is None:
        logger.error("Job store session factory is not initialized.")
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="Job store is not available.",
        )
    db = db_session.SessionLocal()
    try:
        yield db
    finally:
        db.close()


async def get_db_health() -> bool:
    if db_session.engine is None:
        logger.error("Database engine is not initialized.")
        return False
    try:
        with db_session.engine.connect() as connection:
            connection.execute(text("SELECT 1"))
            return True
    except Exception as e:
        logger.error(f"Database health check failed: {e}", exc_info=True)
        return False


def request_context(payload: ContextPayload) -> Context:
    """Validated context from a request body; probability violations raise InvalidInput (422)."""
    ctx = load_context(payload.model_dump())
    logger.debug(
        f"Loaded context {ctx.name!r} (n={ctx.n}, m={ctx.m}, actions={ctx.num_actions})",
        extra={"context_name": ctx.name},
    )
    return ctx

