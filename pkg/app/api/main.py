# app/api/main.py
import logging
import time
from contextlib import asynccontextmanager

from fastapi import Depends, FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from prometheus_client import make_asgi_app

from app.api.dependencies import get_db_health
from app.api.routers import jobs as jobs_router
from app.api.routers import mechanisms as mechanisms_router
from app.api.routers import protocols as protocols_router
from app.core.config import settings
from app.core.exceptions import InfomechError
from app.core.logging_config import setup_logging
from app.core.metrics import API_DOMAIN_ERRORS
from app.db import session as db_session
from app.worker.logic.catalog import CONTEXTS
from app.worker.logic.fixtures import FIXTURE_BUILDERS

# Configure logging before the app and routers start logging
setup_logging()
logger = logging.getLogger(__name__)


def solver_summary() -> dict:
    """Tolerances and limits the solvers run with, plus the built-in catalogue."""
    return {
        "contexts": sorted(CONTEXTS),
        "fixtures": len(FIXTURE_BUILDERS),
        "lp_feasibility_tol": settings.LP_FEASIBILITY_TOL,
        "duality_tol": settings.DUALITY_TOL,
        "derived_tolerance": settings.DERIVED_TOLERANCE,
        "lp_max_iterations": settings.LP_MAX_ITERATIONS,
        "qstar_max_systems": settings.QSTAR_MAX_SYSTEMS,
    }


@asynccontextmanager
async def lifespan(app: FastAPI):
    try:
        db_session.create_db_tables()
    except Exception as e:
        # solves still work without the job store; /health reports it
        logger.error(f"Job store unavailable, queued jobs will fail: {e}", exc_info=True)
    summary = solver_summary()
    logger.info(
        f"{settings.PROJECT_NAME} ready: {len(summary['contexts'])} catalogued contexts, "
        f"{summary['fixtures']} fixtures, LP feasibility {summary['lp_feasibility_tol']:g}, "
        f"duality {summary['duality_tol']:g}"
    )
    yield
    if db_session.engine:
        db_session.engine.dispose()
    logger.info("Job store connections closed")


app = FastAPI(
    title=settings.PROJECT_NAME,
    description="Revenue-optimal mechanisms for selling information to a privately informed buyer.",
    openapi_url="/api/v1/openapi.json",
    lifespan=lifespan,
)

if settings.PROMETHEUS_ENABLED:
    app.mount("/metrics", make_asgi_app())

if settings.BACKEND_CORS_ORIGINS:
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[str(origin) for origin in settings.BACKEND_CORS_ORIGINS],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )


@app.middleware("http")
async def log_solve_time(request: Request, call_next):
    started = time.perf_counter()
    response = await call_next(request)
    elapsed_ms = (time.perf_counter() - started) * 1000
    response.headers["X-Solve-Time-Ms"] = f"{elapsed_ms:.1f}"
    logger.info(
        f"{request.method} {request.url.path} -> {response.status_code} in {elapsed_ms:.1f} ms",
        extra={"request_path": request.url.path, "status_code": response.status_code},
    )
    return response


@app.exception_handler(RequestValidationError)
async def schema_error_handler(request: Request, exc: RequestValidationError):
    """Shape errors in contexts, trees or strategies caught by the pydantic schemas."""
    logger.warning(f"Rejected payload on {request.url.path}: {len(exc.errors())} schema errors")
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"detail": exc.errors(), "message": "Payload does not describe a valid problem instance."},
    )


@app.exception_handler(InfomechError)
async def solver_error_handler(request: Request, exc: InfomechError):
    """Input errors (bad mass, rank, missing decisions, limits) become 422;
    infeasible programs and numeric failures become 500."""
    error = type(exc).__name__
    API_DOMAIN_ERRORS.labels(error=error).inc()
    if exc.is_input_error:
        logger.warning(f"{error} on {request.url.path}: {exc.message}", extra={"request_path": request.url.path})
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    else:
        logger.error(
            f"{error} on {request.url.path} (exit code {exc.exit_code}): {exc.message} {exc.details}",
            exc_info=True,
            extra={"request_path": request.url.path},
        )
        code = status.HTTP_500_INTERNAL_SERVER_ERROR
    return JSONResponse(status_code=code, content={"detail": exc.to_dict()})


@app.exception_handler(Exception)
async def unexpected_error_handler(request: Request, exc: Exception):
    logger.critical(f"Unhandled {type(exc).__name__} on {request.url.path}: {exc}", exc_info=True)
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={"detail": "An unexpected internal server error occurred."},
    )


app.include_router(mechanisms_router.router, prefix="/api/v1")
app.include_router(protocols_router.router, prefix="/api/v1")
app.include_router(jobs_router.router, prefix="/api/v1")


@app.get("/health", tags=["Monitoring"], status_code=status.HTTP_200_OK)
async def health_check(db_healthy: bool = Depends(get_db_health)):
    body = {
        "api_status": {"status": "ok", "message": "API is running"},
        "services": {"database": "healthy" if db_healthy else "unhealthy"},
        "solver": solver_summary(),
    }
    if not db_healthy:
        logger.warning("Health check: job store is unhealthy")
        return JSONResponse(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, content=body)
    return body


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.api.main:app", host=settings.API_HOST, port=settings.API_PORT, log_level=settings.LOG_LEVEL.lower())
