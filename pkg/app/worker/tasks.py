# app/worker/tasks.py
from typing import Any, Optional
from app.worker.celery_app import celery_app
from app.core.exceptions import InfomechError
from app.core.logging_config import setup_logging
from app.db.session import SessionLocal
from app.models.job import JobStatus, SolveJob
from app.worker.logic.jobs import execute_job
import logging
import time
from sqlalchemy.exc import OperationalError
from sqlalchemy.orm import Session as SQLAlchemySession

setup_logging()
logger = logging.getLogger(__name__)

TASK_NAME = "app.worker.tasks.run_job_task"


def update_job_in_db(
    db: SQLAlchemySession,
    job_id: str,
    status: JobStatus,
    result: Optional[dict] = None,
    error: Optional[str] = None,
):
    """Set status and, when given, the result or error of a stored job."""
    try:
        db_job = db.get(SolveJob, job_id)
        if db_job is None:
            logger.error(
                f"Job {job_id} not found in database for update.",
                extra={"job_id": job_id},
            )
            return
        db_job.status = status
        if result is not None:
            db_job.result = result
        if error is not None:
            db_job.error = error
        db.commit()
        logger.info(f"Job {job_id} status updated to {status.value}.", extra={"job_id": job_id})
    except Exception as e:
        db.rollback()
        logger.error(
            f"Database error updating job {job_id}: {e}",
            exc_info=True,
            extra={"job_id": job_id},
        )


@celery_app.task(
    bind=True,
    name=TASK_NAME,
    acks_late=True,
    max_retries=3,
    default_retry_delay=30,
)
def run_job_task(self, job_id: str, kind: str, payload: dict[str, Any]):
    """Run a stored solver job and record its JSON report.

    Domain errors (bad input, numeric failure) fail the job at once; only
    database outages are retried.
    """
    task_logger = logging.LoggerAdapter(logger, {"job_id": job_id})
    task_logger.info(f"Task started for {kind} job")
    started = time.time()
    db: SQLAlchemySession = SessionLocal()

    try:
        update_job_in_db(db, job_id, JobStatus.PROCESSING)
        result = execute_job(kind, payload)
        update_job_in_db(db, job_id, JobStatus.COMPLETED, result=result)
        elapsed = time.time() - started
        task_logger.info(f"Job completed in {elapsed:.2f}s.")
        return {"job_id": job_id, "status": JobStatus.COMPLETED.value, "processing_time_s": round(elapsed, 2)}

    except InfomechError as exc:
        task_logger.error(f"{type(exc).__name__}: {exc.message}", exc_info=True)
        update_job_in_db(db, job_id, JobStatus.FAILED, error=f"{type(exc).__name__}: {exc.message}")
        return {"job_id": job_id, "status": JobStatus.FAILED.value, "error": exc.to_dict()}

    except OperationalError as exc:
        task_logger.error(f"Database unavailable: {exc}", exc_info=True)
        try:
            raise self.retry(exc=exc, countdown=int(self.default_retry_delay * (self.request.retries + 1)))
        except self.MaxRetriesExceededError:
            task_logger.error("Max retries exceeded for task after OperationalError.")
            return {"job_id": job_id, "status": JobStatus.FAILED.value, "error": str(exc)}

    except Exception as exc:
        task_logger.error(f"An unexpected error occurred during task processing: {exc}", exc_info=True)
        update_job_in_db(db, job_id, JobStatus.FAILED, error=f"Processing error: {exc}")
        return {"job_id": job_id, "status": JobStatus.FAILED.value, "error": str(exc)}

    finally:
        db.close()
        task_logger.info("Task finished.")
