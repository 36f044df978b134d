# app/models/job.py
import enum

import shortuuid
from sqlalchemy import JSON, Column, Enum as SAEnum, String, Text

from app.models.base import TimestampedModel


class JobStatus(str, enum.Enum):
    PENDING = "PENDING"
    PROCESSING = "PROCESSING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


class JobKind(str, enum.Enum):
    REPORT = "report"
    GAP = "gap"
    FIXTURES = "fixtures"


class SolveJob(TimestampedModel):
    __tablename__ = "solve_jobs"

    id = Column(String, primary_key=True, default=shortuuid.uuid)
    kind = Column(SAEnum(JobKind, name="job_kind_enum"), nullable=False)
    status = Column(
        SAEnum(JobStatus, name="job_status_enum"),
        nullable=False,
        default=JobStatus.PENDING,
    )
    payload = Column(JSON, nullable=False)

    # rendered report JSON once COMPLETED
    result = Column(JSON, nullable=True)
    error = Column(Text, nullable=True)

    def __repr__(self):
        return f"<SolveJob(id={self.id}, kind='{self.kind}', status='{self.status}')>"
