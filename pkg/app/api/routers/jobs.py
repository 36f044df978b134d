# app/api/routers/jobs.py
from fastapi import APIRouter, HTTPException, Depends, status
from sqlalchemy.orm import Session
from app.api import schemas
from app.api.dependencies import get_db
from app.models.job import JobStatus, SolveJob
from app.worker.tasks import run_job_task
import logging
import shortuuid

logger = logging.getLogger(__name__)

router = APIRouter(
    prefix="/jobs",
    tags=["Jobs"],
)


def enqueue_job(job_id: str, kind: str, payload: dict):
    try:
        run_job_task.apply_async(args=[job_id, kind, payload], task_id=job_id)
        logger.info(f"Job {job_id} enqueued ({kind}).", extra={"job_id": job_id})
    except Exception as e:
        logger.error(f"Failed to enqueue job {job_id}: {e}", exc_info=True, extra={"job_id": job_id})
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="Failed to queue the job. Please try again later.",
        )


@router.post("", response_model=schemas.JobCreateResponse, status_code=status.HTTP_202_ACCEPTED)
def create_job(request: schemas.JobRequest, db: Session = Depends(get_db)):
    """Store a report, gap or fixtures job and queue it for a worker."""
    job_id = shortuuid.uuid()
    db_job = SolveJob(id=job_id, kind=request.kind, payload=request.payload, status=JobStatus.PENDING)
    try:
        db.add(db_job)
        db.commit()
        db.refresh(db_job)
        logger.info(f"Job {job_id} created in database with status PENDING.", extra={"job_id": job_id})
    except Exception as e:
        db.rollback()
        logger.error(f"Database error creating job {job_id}: {e}", exc_info=True, extra={"job_id": job_id})
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="Failed to record the job. Please try again.",
        )

    enqueue_job(job_id, request.kind.value, request.payload)
    return schemas.JobCreateResponse(job_id=db_job.id, status=db_job.status)


@router.get("/{job_id}", response_model=schemas.JobResultResponse)
def get_job(job_id: str, db: Session = Depends(get_db)):
    db.expire_all()
    db_job = db.get(SolveJob, job_id)
    if not db_job:
        logger.warning(f"Job {job_id} not found in database.", extra={"job_id": job_id})
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Job not found.")

    finished = db_job.status in (JobStatus.COMPLETED, JobStatus.FAILED)
    processing_time = db_job.elapsed_seconds() if finished else None

    return schemas.JobResultResponse(
        id=db_job.id,
        kind=db_job.kind,
        status=db_job.status,
        created_at=db_job.created_at,
        updated_at=db_job.updated_at,
        result=db_job.result,
        error=db_job.error,
        processing_time_seconds=processing_time,
    )
