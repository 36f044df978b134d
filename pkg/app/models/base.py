# app/models/base.py
import datetime
from typing import Optional

from sqlalchemy import Column, DateTime, func
from sqlalchemy.orm import DeclarativeBase


class Base(DeclarativeBase):
    pass


class TimestampedModel(Base):
    """Job-store rows stamped by the database on insert and on every update."""

    __abstract__ = True

    created_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)
    updated_at = Column(
        DateTime(timezone=True),
        server_default=func.now(),
        onupdate=func.now(),
        nullable=False,
    )

    def elapsed_seconds(self) -> Optional[float]:
        """Seconds between creation and the last write, or None before both stamps exist."""
        if not (self.created_at and self.updated_at):
            return None
        delta: datetime.timedelta = self.updated_at - self.created_at
        return round(delta.total_seconds(), 2)
