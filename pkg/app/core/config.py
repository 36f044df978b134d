# app/core/config.py
import os
from dotenv import load_dotenv
from pathlib import Path
from typing import List

# Load .env file from the project root
env_path = Path(".") / ".env"
load_dotenv(dotenv_path=env_path)


def _float(name: str, default: str) -> float:
    return float(os.getenv(name, default))


def _int(name: str, default: str) -> int:
    return int(os.getenv(name, default))


class Settings:
    PROJECT_NAME: str = os.getenv("PROJECT_NAME", "infomech")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    API_HOST: str = os.getenv("API_HOST", "0.0.0.0")
    API_PORT: int = _int("API_PORT", "8080")

    # Probability checks: absolute tolerance at load time, looser for derived quantities
    LOAD_TOLERANCE: float = _float("LOAD_TOLERANCE", "1e-12")
    DERIVED_TOLERANCE: float = _float("DERIVED_TOLERANCE", "1e-9")

    # Simplex
    LP_FEASIBILITY_TOL: float = _float("LP_FEASIBILITY_TOL", "1e-9")
    LP_OPTIMALITY_TOL: float = _float("LP_OPTIMALITY_TOL", "1e-9")
    LP_PIVOT_TOL: float = _float("LP_PIVOT_TOL", "1e-11")
    DUALITY_TOL: float = _float("DUALITY_TOL", "1e-7")
    LP_MAX_ITERATIONS: int = _int("LP_MAX_ITERATIONS", "50000")
    # Dantzig pricing for this many pivots, Bland's rule afterwards
    LP_DANTZIG_ITERATIONS: int = _int("LP_DANTZIG_ITERATIONS", "2000")
    # Rebuild the tableau from the original rows this often
    LP_REFACTOR_INTERVAL: int = _int("LP_REFACTOR_INTERVAL", "50")

    # Posterior geometry
    QSTAR_MAX_SYSTEMS: int = _int("QSTAR_MAX_SYSTEMS", "2000000")
    QSTAR_DEDUP_TOL: float = _float("QSTAR_DEDUP_TOL", "1e-9")
    QSTAR_BATCH_SIZE: int = _int("QSTAR_BATCH_SIZE", "20000")
    GRID_MAX_POINTS: int = _int("GRID_MAX_POINTS", "25000")

    # Mechanisms
    SUPPORT_TOL: float = _float("SUPPORT_TOL", "1e-12")
    RANK_TOLERANCE: float = _float("RANK_TOLERANCE", "1e-10")
    CONDITION_WARNING: float = _float("CONDITION_WARNING", "1e4")
    RECOVER_DELTA: float = _float("RECOVER_DELTA", "1e-4")
    RECOVER_MAX_HALVINGS: int = _int("RECOVER_MAX_HALVINGS", "60")

    # Protocol trees
    TIE_TOLERANCE: float = _float("TIE_TOLERANCE", "1e-12")
    ORACLE_MAX_DECISIONS: int = _int("ORACLE_MAX_DECISIONS", "12")

    # Celery
    CELERY_BROKER_URL: str = os.getenv("CELERY_BROKER_URL", "redis://redis:6379/0")
    CELERY_RESULT_BACKEND: str = os.getenv(
        "CELERY_RESULT_BACKEND", "redis://redis:6379/0"
    )
    CELERY_TASK_ALWAYS_EAGER: bool = (
        os.getenv("CELERY_TASK_ALWAYS_EAGER", "false").lower() == "true"
    )
    CELERY_QUEUE: str = os.getenv("CELERY_QUEUE", "mechanisms")

    # Job store. Compose points this at Postgres; local runs use a sqlite file.
    DATABASE_URL: str = os.getenv("DATABASE_URL", "sqlite:///./infomech_jobs.db")

    # Prometheus / Monitoring
    PROMETHEUS_ENABLED: bool = os.getenv("PROMETHEUS_ENABLED", "true").lower() == "true"

    BACKEND_CORS_ORIGINS: List[str] = [
        origin.strip() for origin in os.getenv("BACKEND_CORS_ORIGINS", "*").split(",")
    ]


settings = Settings()
