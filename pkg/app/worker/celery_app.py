# app/worker/celery_app.py
from celery import Celery
from app.core.config import settings
from app.core.logging_config import setup_logging
import logging

# Workers configure logging on import, before any task logs
setup_logging()
logger = logging.getLogger(__name__)

celery_app = Celery(
    "infomech_worker",
    broker=settings.CELERY_BROKER_URL,
    backend=settings.CELERY_RESULT_BACKEND,
    include=["app.worker.tasks"],
)

celery_app.conf.update(
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
    timezone="UTC",
    enable_utc=True,
    task_default_queue=settings.CELERY_QUEUE,
    task_always_eager=settings.CELERY_TASK_ALWAYS_EAGER,
    # solver jobs are CPU bound and can run for a while
    worker_prefetch_multiplier=1,
    task_track_started=True,
)

logger.info(
    f"Celery app '{celery_app.main}' initialized with broker: {settings.CELERY_BROKER_URL} and backend: {settings.CELERY_RESULT_BACKEND}"
)

if __name__ == "__main__":
    # python -m app.worker.celery_app
    logger.info("Starting Celery worker directly (for development).")
    celery_app.worker_main(
        [
            "worker",
            f"--loglevel={settings.LOG_LEVEL}",
            f"--queues={settings.CELERY_QUEUE}",
        ]
    )
