"""
FastAPI routes for the matteforge service

Both prediction and evaluation are CPU-bound, so they are plain `def` routes and run in
FastAPI's threadpool. MatteForgeError propagates to the app-level handler in src.main.
"""

import logging
import os
import tempfile
from pathlib import Path

from fastapi import APIRouter, Depends, File, HTTPException, UploadFile
from fastapi.responses import Response

from src.api.schemas import ErrorResponse, EvaluateRequest, EvaluateResponse, ModelsHealthResponse
from src.errors import MatteForgeError
from src.evaluation.evaluator import evaluate_directories
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.io import load_image, quantize, write_png_uint8
from src.imaging.trimap import Trimap, load_trimap_png
from src.models.matte_predictor import MattePredictor

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Create router
router = APIRouter()

ERROR_RESPONSES = {422: {"model": ErrorResponse}, 500: {"model": ErrorResponse}}

# Initialize the predictor lazily
matte_predictor = None


def get_matte_predictor() -> MattePredictor:
    """Lazy loading of the matte predictor"""
    global matte_predictor
    if matte_predictor is None:
        try:
            matte_predictor = MattePredictor()
        except MatteForgeError as e:
            logger.error(f"Error loading matte predictor: {str(e)}")
            raise HTTPException(status_code=503, detail=f"Matting model unavailable: {str(e)}")
    return matte_predictor


def eval_root() -> Path:
    """Directory every /evaluate path must live under (MATTEFORGE_EVAL_ROOT, default: working directory)"""
    return Path(os.getenv("MATTEFORGE_EVAL_ROOT", ".")).resolve()


def resolve_under_root(directory: str, root: Path) -> Path:
    """Resolve directory against root; relative paths are taken from root"""
    path = Path(directory)
    resolved = (path if path.is_absolute() else root / path).resolve()
    if resolved != root and root not in resolved.parents:
        raise HTTPException(status_code=403, detail=f"{directory} is outside the evaluation root")
    return resolved


def _save_upload(upload: UploadFile, directory: Path, name: str) -> Path:
    path = directory / name
    path.write_bytes(upload.file.read())
    return path


def encode_png(matte: AlphaMatte) -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "matte.png"
        write_png_uint8(path, quantize(matte.data))
        return path.read_bytes()


@router.post("/infer", response_class=Response, responses=ERROR_RESPONSES)
def infer_matte(
    image: UploadFile = File(..., description="RGB PNG"),
    trimap: UploadFile = File(..., description="Trimap PNG with codes 0/128/255"),
    predictor: MattePredictor = Depends(get_matte_predictor),
):
    """
    Predict the alpha matte of an uploaded image and trimap; returns an 8-bit greyscale PNG
    """
    with tempfile.TemporaryDirectory() as tmp:
        rgb: Image = load_image(_save_upload(image, Path(tmp), "image.png"))
        labels: Trimap = load_trimap_png(_save_upload(trimap, Path(tmp), "trimap.png"))
    logger.info(f"Predicting matte for {image.filename} ({rgb.size[0]}×{rgb.size[1]})")
    matte = predictor.predict(rgb, labels)
    return Response(content=encode_png(matte), media_type="image/png")


@router.post("/evaluate", response_model=EvaluateResponse, responses={403: {"description": "Path outside root"}, **ERROR_RESPONSES})
def evaluate(request: EvaluateRequest):
    """
    Score a directory of predictions against ground truth over the trimap unknown regions
    """
    root = eval_root()
    pred_dir, gt_dir, trimap_dir = (
        resolve_under_root(d, root) for d in (request.pred_dir, request.gt_dir, request.trimap_dir)
    )
    logger.info(f"Evaluating predictions in {pred_dir}")
    report = evaluate_directories(pred_dir, gt_dir, trimap_dir)
    return EvaluateResponse(report=report, table=report.to_table())


# Health check for models
@router.get("/models/health", response_model=ModelsHealthResponse)
async def models_health_check():
    """Check if the matting model is loaded and functioning"""
    health_status = {"matte_predictor": False}
    checkpoint = None
    try:
        predictor = get_matte_predictor()
        health_status["matte_predictor"] = predictor.is_ready()
        checkpoint = str(predictor.checkpoint)
    except HTTPException as e:
        logger.error(f"Error in model health check: {e.detail}")

    all_healthy = all(health_status.values())
    return ModelsHealthResponse(
        status="healthy" if all_healthy else "degraded",
        models=health_status,
        checkpoint=checkpoint,
    )
