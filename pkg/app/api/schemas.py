# app/api/schemas.py
from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Optional, List, Dict, Any
import datetime
from app.models.job import JobKind, JobStatus
from app.models.protocol import StrategyMode
from app.worker.logic.solver import MECHANISMS


class ContextPayload(BaseModel):
    """JSON form of a context; probability checks happen in the solver layer."""

    name: str = Field(default="context", description="Label used in logs and reports.")
    theta: List[str] = Field(..., min_length=1, description="Buyer type labels.")
    omega: List[str] = Field(..., min_length=1, description="Seller signal labels.")
    actions: List[str] = Field(..., min_length=1, description="Buyer action labels.")
    mu: List[List[float]] = Field(..., description="Joint mass mu[omega][theta].")
    u: List[List[List[float]]] = Field(..., description="Payoffs u[theta][omega][action].")

    @model_validator(mode="after")
    def shapes_must_match_labels(self):
        m, n, a = len(self.omega), len(self.theta), len(self.actions)
        if len(self.mu) != m or any(len(row) != n for row in self.mu):
            raise ValueError(f"mu must be {m} x {n} (signals x types)")
        if len(self.u) != n or any(len(block) != m or any(len(row) != a for row in block) for block in self.u):
            raise ValueError(f"u must be {n} x {m} x {a} (types x signals x actions)")
        return self


class SolveRequest(BaseModel):
    context: ContextPayload
    mechanism: str = Field(default="mappings", description=f"One of {', '.join(MECHANISMS)}.")
    epsilon: float = Field(default=0.0, ge=0.0, lt=1.0, description="Make IR/IC strict by scaling payments.")
    reduce_support: bool = Field(default=False, description="Re-solve contracts at LP vertices.")
    recover_transfers: bool = Field(default=False, description="Compute explicit per-signal payments.")
    grid: Optional[int] = Field(default=None, ge=1, description="Refine the posterior set with a lattice.")

    @field_validator("mechanism")
    def mechanism_must_be_known(cls, value):
        if value not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        return value


class ReportRequest(BaseModel):
    context: ContextPayload
    grid: Optional[int] = Field(default=None, ge=1)


class EvaluateRequest(BaseModel):
    context: ContextPayload
    tree: Dict[str, Any] = Field(..., description="Nested protocol tree.")
    mode: StrategyMode = Field(default=StrategyMode.COMMITTED)
    strategies: Optional[Dict[str, Any]] = Field(
        default=None, description="Per type label: {node id: child index or 'defect'}."
    )

    @field_validator("tree")
    def tree_must_have_kind(cls, value):
        if "kind" not in value:
            raise ValueError("tree root needs a 'kind'")
        return value


class JobRequest(BaseModel):
    kind: JobKind
    payload: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("payload")
    def payload_must_name_a_context(cls, value, info):
        kind = info.data.get("kind")
        if kind in (JobKind.REPORT, JobKind.GAP) and not (value.get("context") or value.get("fixture")):
            raise ValueError("report and gap jobs need a 'context' or a 'fixture' name")
        return value


class JobCreateResponse(BaseModel):
    job_id: str = Field(description="Unique identifier for the created job.")
    status: JobStatus = Field(description="Initial status of the job (PENDING).")
    message: str = Field(default="Job accepted and queued for processing.")


class JobResultResponse(BaseModel):
    id: str
    kind: JobKind
    status: JobStatus
    created_at: datetime.datetime
    updated_at: datetime.datetime
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    processing_time_seconds: Optional[float] = None
