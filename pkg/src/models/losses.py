"""
Training losses over the unknown region

Both terms are Charbonnier-style absolute differences sqrt(d² + ε²) averaged over a
pixel subset; pixels outside the subset never reach the loss or its gradient.
"""

import logging

import numpy as np

from src.config import LossConfig
from src.engine import ops
from src.engine.tensor import Tensor
from src.errors import DimensionError, EmptyRegionError

logger = logging.getLogger(__name__)


def _as_prediction_shape(values: np.ndarray, pred: Tensor, what: str) -> np.ndarray:
    values = np.asarray(values)
    if values.shape != pred.shape:
        if values.size == pred.size and values.squeeze().shape == pred.data.squeeze().shape:
            return values.reshape(pred.shape)
        raise DimensionError(f"{what} shape {values.shape} does not match prediction {pred.shape}")
    return values


def _charbonnier_mean(gt: np.ndarray, pred: Tensor, mask: np.ndarray, eps: float) -> Tensor:
    diff = ops.sub(pred, Tensor(gt.astype(pred.dtype)))
    per_pixel = ops.sqrt(ops.add_scalar(ops.mul(diff, diff), eps * eps))
    return ops.masked_mean(per_pixel, mask)


def alpha_prediction_loss(gt: np.ndarray, pred: Tensor, unknown: np.ndarray, eps: float = 1e-6) -> Tensor:
    """
    L_a = mean over U of sqrt((α − α̂)² + ε²)

    Args:
        gt: ground-truth alpha, same number of pixels as pred
        pred: predicted alpha tensor (N×1×H×W or H×W)
        unknown: boolean mask of the unknown region

    Raises:
        EmptyRegionError: the unknown region has no pixels
    """
    gt = _as_prediction_shape(gt, pred, "ground truth")
    unknown = _as_prediction_shape(unknown, pred, "unknown mask").astype(bool)
    if not unknown.any():
        raise EmptyRegionError("alpha prediction loss needs at least one unknown pixel")
    return _charbonnier_mean(gt, pred, unknown, eps)


def background_enhancement_loss(
    gt: np.ndarray, pred: Tensor, unknown: np.ndarray, theta: float = 0.1, eps: float = 1e-6
) -> Tensor:
    """
    L_bg over R_bg = {p in U : α_p < θ}; an empty R_bg gives a constant 0
    """
    gt = _as_prediction_shape(gt, pred, "ground truth")
    unknown = _as_prediction_shape(unknown, pred, "unknown mask").astype(bool)
    region = unknown & (gt < theta)
    if not region.any():
        return Tensor(np.zeros(()))
    return _charbonnier_mean(gt, pred, region, eps)


def total_loss(loss_a: Tensor, loss_bg: Tensor, w1: float = 0.9, w2: float = 0.1) -> Tensor:
    return ops.add(ops.mul_scalar(loss_a, w1), ops.mul_scalar(loss_bg, w2))


def matting_loss(gt: np.ndarray, pred: Tensor, unknown: np.ndarray, config: LossConfig, with_background: bool = True):
    """
    Weighted combination used for training

    Returns:
        (L, L_a, L_bg); with_background=False fixes L_bg to 0
    """
    loss_a = alpha_prediction_loss(gt, pred, unknown, config.eps)
    if with_background:
        loss_bg = background_enhancement_loss(gt, pred, unknown, config.theta, config.eps)
    else:
        loss_bg = Tensor(np.zeros(()))
    return total_loss(loss_a, loss_bg, config.w1, config.w2), loss_a, loss_bg
