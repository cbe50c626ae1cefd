"""
Matting error metrics over the unknown region: SAD, MSE, gradient and connectivity

SAD, gradient and connectivity errors are reported divided by 1000; MSE is the plain
mean over unknown pixels with alphas in [0, 1].
"""

import logging
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from src.errors import DimensionError

logger = logging.getLogger(__name__)

SCALE = 1000.0
GRAD_SIGMA = 1.4
CONN_STEP = 0.1
CONN_TOLERANCE = 0.15


def _check(gt: np.ndarray, pred: np.ndarray, unknown: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    unknown = np.asarray(unknown, dtype=bool)
    if not (gt.shape == pred.shape == unknown.shape) or gt.ndim != 2:
        raise DimensionError(f"metric inputs must be equal H×W arrays, got {gt.shape}, {pred.shape}, {unknown.shape}")
    return gt, pred, unknown


def sad(gt: np.ndarray, pred: np.ndarray, unknown: np.ndarray) -> float:
    gt, pred, unknown = _check(gt, pred, unknown)
    return float(np.abs(gt - pred)[unknown].sum() / SCALE)


def mse(gt: np.ndarray, pred: np.ndarray, unknown: np.ndarray) -> Optional[float]:
    """Mean squared error over U; None when U is empty"""
    gt, pred, unknown = _check(gt, pred, unknown)
    count = int(unknown.sum())
    if count == 0:
        return None
    return float(((gt - pred) ** 2)[unknown].sum() / count)


@lru_cache(maxsize=8)
def gaussian_derivative_kernels(sigma: float = GRAD_SIGMA) -> Tuple[np.ndarray, np.ndarray]:
    """
    First-order Gaussian derivative filters (x, y), radius ceil(3σ), L1-normalized

    hx[i, j] = G(i) · G'(j) with offsets measured from the kernel centre.
    """
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    gauss = np.exp(-offsets ** 2 / (2.0 * sigma ** 2)) / (sigma * np.sqrt(2.0 * np.pi))
    dgauss = -offsets * gauss / sigma ** 2
    hx = np.outer(gauss, dgauss)
    hx /= np.abs(hx).sum()
    hx.setflags(write=False)
    hy = hx.T.copy()
    hy.setflags(write=False)
    return hx, hy


def gradient_magnitude(alpha: np.ndarray, sigma: float = GRAD_SIGMA) -> np.ndarray:
    hx, hy = gaussian_derivative_kernels(sigma)
    gx = ndimage.convolve(alpha, hx, mode="reflect")
    gy = ndimage.convolve(alpha, hy, mode="reflect")
    return np.sqrt(gx ** 2 + gy ** 2)


def gradient_error(gt: np.ndarray, pred: np.ndarray, unknown: np.ndarray, sigma: float = GRAD_SIGMA) -> float:
    gt, pred, unknown = _check(gt, pred, unknown)
    diff = gradient_magnitude(gt, sigma) - gradient_magnitude(pred, sigma)
    return float((diff ** 2)[unknown].sum() / SCALE)


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected component of a binary mask; ties go to the lowest label"""
    labels, count = ndimage.label(mask)
    if count == 0:
        return np.zeros(mask.shape, dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == int(np.argmax(sizes)) + 1


def connectivity_levels(gt: np.ndarray, pred: np.ndarray, step: float = CONN_STEP) -> np.ndarray:
    """Per pixel, the highest level at which it belongs to the joint largest component, else 0"""
    count = int(round(1.0 / step)) - 1
    levels = np.round(step * np.arange(1, count + 1), 10)
    li = np.zeros(gt.shape, dtype=np.float64)
    for level in levels:
        omega = largest_component((gt >= level) & (pred >= level))
        li[omega] = level
    return li


def connectivity_error(
    gt: np.ndarray,
    pred: np.ndarray,
    unknown: np.ndarray,
    step: float = CONN_STEP,
    tolerance: float = CONN_TOLERANCE,
) -> float:
    gt, pred, unknown = _check(gt, pred, unknown)
    li = connectivity_levels(gt, pred, step)

    def phi(d: np.ndarray) -> np.ndarray:
        return np.where(d >= tolerance, 1.0 - d, 1.0)

    diff = np.abs(phi(gt - li) - phi(pred - li))
    return float(diff[unknown].sum() / SCALE)
