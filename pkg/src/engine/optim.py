"""
Adam optimizer and the warmup + cosine-annealing learning-rate schedule
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.engine.tensor import Tensor, check_finite
from src.errors import DimensionError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter moments plus the shared step counter"""

    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """
    Apply one bias-corrected Adam update in place

    Args:
        params: named parameters to update
        grads: gradient per parameter name; missing names are treated as zero gradient
        state: moments and step counter, advanced by one
        lr: learning rate, > 0
    """
    if lr <= 0:
        raise ValueError(f"Adam learning rate must be positive, got {lr}")
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, parameter has {param.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(param.shape, dtype=np.float64)
            v = np.zeros(param.shape, dtype=np.float64)
        elif m.shape != param.shape:
            raise DimensionError(f"Adam moment for {name} has shape {m.shape}, parameter has {param.shape}")

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        param.data = (param.data - update).astype(param.data.dtype)
        check_finite(param.data, f"Adam update of {name}")


class LrSchedule(BaseModel):
    base_lr: float = Field(4e-4, gt=0)
    warmup_steps: int = Field(..., ge=0)
    total_steps: int = Field(..., ge=1)
    min_lr: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.warmup_steps >= self.total_steps:
            raise ValueError(
                f"warmup_steps ({self.warmup_steps}) must be smaller than total_steps ({self.total_steps})"
            )
        if self.min_lr > self.base_lr:
            raise ValueError(f"min_lr ({self.min_lr}) exceeds base_lr ({self.base_lr})")
        return self


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup from 0 to base_lr, then cosine decay to min_lr at total_steps"""
    if step < 0 or step > schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if step < schedule.warmup_steps:
        return schedule.base_lr * step / schedule.warmup_steps
    t = (step - schedule.warmup_steps) / (schedule.total_steps - schedule.warmup_steps)
    return schedule.min_lr + (schedule.base_lr - schedule.min_lr) * (1.0 + math.cos(math.pi * t)) / 2.0
