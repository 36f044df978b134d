# app/db/session.py
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool
from app.core.config import settings
import logging

logger = logging.getLogger(__name__)


def make_engine(url: str):
    if url.startswith("sqlite"):
        # one shared connection for in-memory databases, usable across threads
        options = {"connect_args": {"check_same_thread": False}}
        if ":memory:" in url or url == "sqlite://":
            options["poolclass"] = StaticPool
        return create_engine(url, **options)
    return create_engine(url, pool_pre_ping=True)


try:
    engine = make_engine(settings.DATABASE_URL)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    logger.info("Database engine and session created successfully.")
except Exception as e:
    logger.error(f"Failed to create database engine or session: {e}", exc_info=True)
    engine = None
    SessionLocal = None


def create_db_tables():
    from app.models.base import Base
    import app.models.job  # noqa: F401  registers the table

    if engine is None:
        raise RuntimeError("Database engine not initialized.")
    Base.metadata.create_all(bind=engine)

