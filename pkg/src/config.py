"""
Configuration models for matteforge

Desk-scale defaults are active; the full-scale recipe is kept in the FULL_* constants.
"""

import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

from src.errors import UsageError

load_dotenv()

logger = logging.getLogger(__name__)

# Full-scale recipe
FULL_TOTAL_STEPS = 300_000
FULL_WARMUP_STEPS = 7_500
FULL_BATCH_SIZE = 24
FULL_BASE_WIDTH = 64
FULL_ENCODER_BLOCKS = (3, 4, 6, 3)
FULL_CROP_SIZES = (320, 480, 640)
FULL_CROP_OUT = 320

BASE_LR = 4e-4


class ModelConfig(BaseModel):
    base_width: int = Field(8, ge=1, description="Encoder stem channels (full scale 64)")
    encoder_blocks: Tuple[int, int, int, int] = Field(
        (1, 1, 1, 1), description="Residual blocks per encoder stage (full scale 3,4,6,3)"
    )
    tcp_width: int = Field(8, ge=1, description="Channel count of the textural compensate path")
    tcp_enabled: bool = Field(True, description="False builds the semantic-path-only baseline")
    ffu_source: Literal["stem", "stage1"] = Field(
        "stem", description="Semantic path activation injected by the feature fusion unit"
    )
    stem_kernel: int = Field(7, ge=1, description="Kernel size of the stride-2 stem convolution")

    @field_validator("encoder_blocks")
    @classmethod
    def _blocks_positive(cls, value):
        if any(b < 1 for b in value):
            raise ValueError(f"encoder_blocks must all be >= 1, got {value}")
        return value


class LossConfig(BaseModel):
    eps: float = Field(1e-6, gt=0, description="Stability constant inside the square root")
    theta: float = Field(0.1, gt=0, lt=1, description="Background threshold of the enhancement loss")
    w1: float = Field(0.9, description="Weight of the alpha-prediction loss")
    w2: float = Field(0.1, description="Weight of the background enhancement loss")


class TrimapGenConfig(BaseModel):
    sp_kernel: Tuple[int, int] = Field((1, 30), description="Unknown-band growth kernel for the SP trimap")
    steps: Tuple[int, int] = Field((0, 3), description="Range of perturbation steps n")
    iterations: Tuple[int, int] = Field((0, 3), description="Range of iterations p per step")
    dilation_kernel: Tuple[int, int] = Field((1, 30), description="Kernel range when the unknown region grows")
    erosion_kernel: Tuple[int, int] = Field((1, 10), description="Kernel range when the unknown region shrinks")
    seed: int = 0

    @field_validator("sp_kernel", "steps", "iterations", "dilation_kernel", "erosion_kernel")
    @classmethod
    def _inclusive_range(cls, value):
        low, high = value
        if low > high or low < 0:
            raise ValueError(f"invalid inclusive range {value}")
        return value


class TrainConfig(BaseModel):
    total_steps: int = Field(2000, ge=1, description=f"Full scale {FULL_TOTAL_STEPS}")
    warmup_steps: int = Field(50, ge=0, description=f"Full scale {FULL_WARMUP_STEPS}")
    batch_size: int = Field(4, ge=1, description=f"Full scale {FULL_BATCH_SIZE}")
    base_lr: float = Field(BASE_LR, gt=0)
    min_lr: float = Field(0.0, ge=0)
    loss: LossConfig = Field(default_factory=LossConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    trimap: TrimapGenConfig = Field(default_factory=TrimapGenConfig)
    imrp: bool = Field(True, description="Trimap perturbation for the TCP plus background enhancement loss")
    seed: int = 0
    checkpoint_every: int = Field(500, ge=1)
    log_every: int = Field(10, ge=1)
    data_dir: Optional[str] = Field(None, description="Directory with fg/, alpha/, bg/")
    eval_dir: Optional[str] = Field(None, description="Synthesized held-out set (comp/, alpha/, trimap_sp/)")
    output_dir: str = "runs/default"
    precision: Literal["float32", "float64"] = "float32"
    crop_sizes: List[int] = Field(default_factory=lambda: [64], description=f"Full scale {list(FULL_CROP_SIZES)}")
    crop_out: int = Field(64, ge=32, description=f"Full scale {FULL_CROP_OUT}")
    deterministic: bool = False
    overfit_samples: Optional[int] = Field(
        None, ge=1, description="Train on this many fixed examples, drawn once, instead of resampling every step"
    )

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.warmup_steps >= self.total_steps:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must be smaller than total_steps ({self.total_steps})"
            )
        if not self.crop_sizes or any(s < 1 for s in self.crop_sizes):
            raise ValueError(f"crop_sizes must be positive, got {self.crop_sizes}")
        if self.crop_out % 32:
            raise ValueError(f"crop_out must be a multiple of the encoder stride 32, got {self.crop_out}")
        return self


def load_config(path: Optional[str] = None, **overrides) -> TrainConfig:
    """
    Load a TrainConfig from a JSON file and apply non-None overrides

    Args:
        path: JSON file mirroring the TrainConfig field names, or None for defaults
        overrides: top-level field values taking precedence over the file

    Returns:
        Validated TrainConfig
    """
    data = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise UsageError(f"Config file not found: {config_path}")
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"Config file {config_path} is not valid JSON: {str(e)}")
        logger.info(f"Loaded config from {config_path}")

    data.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return TrainConfig.model_validate(data)
    except ValueError as e:
        raise UsageError(f"Invalid configuration: {str(e)}")


def resolve_threads(deterministic: bool = False) -> int:
    """Number of worker threads: 1 in deterministic mode, else MATTEFORGE_THREADS capped by the CPU count"""
    if deterministic:
        return 1
    cpu = os.cpu_count() or 1
    raw = os.getenv("MATTEFORGE_THREADS")
    if raw is None:
        return cpu
    try:
        requested = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer MATTEFORGE_THREADS={raw!r}")
        return cpu
    return max(1, min(requested, cpu))
