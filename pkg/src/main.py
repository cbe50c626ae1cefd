"""
FastAPI application for matteforge
Alpha matte prediction and evaluation over HTTP
"""

import logging

from dotenv import load_dotenv
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from src.api.routes import router
from src.api.schemas import ErrorResponse, HealthResponse, RootResponse
from src.errors import DataError, MatteForgeError

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

VERSION = "1.0.0"
API_PREFIX = "/api/v1"

app = FastAPI(
    title="matteforge",
    description="Dual-path image matting: trimap-guided alpha prediction and SAD/MSE/Grad/Conn evaluation",
    version=VERSION,
)
app.include_router(router, prefix=API_PREFIX)


@app.exception_handler(MatteForgeError)
async def matteforge_error_handler(request: Request, exc: MatteForgeError) -> JSONResponse:
    """Data problems are the client's (422); numerical aborts and the rest are ours (500)"""
    status = 422 if isinstance(exc, DataError) else 500
    logger.error(f"{request.method} {request.url.path} failed with {type(exc).__name__}: {str(exc)}")
    body = ErrorResponse(error=type(exc).__name__, message=str(exc), details={"exit_code": exc.exit_code})
    return JSONResponse(status_code=status, content=body.model_dump())


@app.get("/", response_model=RootResponse)
async def root():
    return RootResponse(
        message="matteforge API is running",
        version=VERSION,
        endpoints=[f"{API_PREFIX}{route.path}" for route in router.routes],
    )


@app.get("/health", response_model=HealthResponse)
async def health_check():
    return HealthResponse(status="healthy", service="matteforge-api")
