"""
Pydantic schemas for API request/response models
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from src.evaluation.evaluator import MetricReport


# Evaluation Schemas
class EvaluateRequest(BaseModel):
    pred_dir: str = Field(..., description="Directory of predicted mattes (<id>.png), inside the evaluation root")
    gt_dir: str = Field(..., description="Directory of ground-truth alphas (<id>.png), inside the evaluation root")
    trimap_dir: str = Field(..., description="Directory of trimaps (<id>.png, codes 0/128/255), inside the evaluation root")


class EvaluateResponse(BaseModel):
    report: MetricReport
    table: str = Field(..., description="Plain-text table with columns SAD, MSE, Grad, Conn")


# Health Schemas
class ModelsHealthResponse(BaseModel):
    status: str = Field(..., description="healthy or degraded")
    models: Dict[str, bool]
    checkpoint: Optional[str] = None


class HealthResponse(BaseModel):
    status: str
    service: str


class RootResponse(BaseModel):
    message: str
    version: str
    endpoints: List[str] = Field(..., description="Matting endpoints under /api/v1")


# Error Response Schema
class ErrorResponse(BaseModel):
    error: str = Field(..., description="Exception class, e.g. DimensionError")
    message: str
    details: Optional[Dict[str, Any]] = Field(None, description="exit_code matches the command line")
