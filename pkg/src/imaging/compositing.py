"""
Alpha compositing I = αF + (1 − α)B, its least-squares inverse, and resampling helpers
"""

import logging
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.errors import DimensionError
from src.imaging.buffers import AlphaMatte, Image

logger = logging.getLogger(__name__)

# Per-pixel |F − B| floor below which alpha cannot be recovered
EPS_DIV = 1e-3


def composite(fg: Image, bg: Image, alpha: AlphaMatte) -> Image:
    """Composite fg over bg with the given alpha; all three must share height and width"""
    if not (fg.size == bg.size == alpha.size):
        raise DimensionError(f"composite size mismatch: fg {fg.size}, bg {bg.size}, alpha {alpha.size}")
    a = alpha.data[:, :, None]
    return Image(np.clip(a * fg.data + (1.0 - a) * bg.data, 0.0, 1.0))


def recover_alpha(comp: Image, fg: Image, bg: Image) -> Tuple[AlphaMatte, np.ndarray]:
    """
    Least-squares alpha over the three channels: Σ(I−B)(F−B) / Σ(F−B)²

    Returns:
        (alpha clamped to [0, 1], undefined mask); undefined pixels have
        |F − B| < EPS_DIV in every channel and carry alpha 0
    """
    if not (comp.size == fg.size == bg.size):
        raise DimensionError(f"recover_alpha size mismatch: comp {comp.size}, fg {fg.size}, bg {bg.size}")
    diff = fg.data - bg.data
    undefined = np.all(np.abs(diff) < EPS_DIV, axis=2)
    numerator = np.sum((comp.data - bg.data) * diff, axis=2)
    denominator = np.sum(diff * diff, axis=2)
    alpha = np.zeros(denominator.shape)
    defined = ~undefined
    alpha[defined] = numerator[defined] / denominator[defined]
    return AlphaMatte(np.clip(alpha, 0.0, 1.0)), undefined


def resize_bilinear(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an H×W or H×W×C array using pixel-centre alignment"""
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"resize_bilinear needs positive output size, got {out_h}×{out_w}")
    h, w = array.shape[:2]
    if (h, w) == (out_h, out_w):
        return array.copy()
    rows = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    cols = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    grid = np.stack(np.meshgrid(rows, cols, indexing="ij"))
    if array.ndim == 2:
        return ndimage.map_coordinates(array, grid, order=1, mode="nearest")
    channels = [ndimage.map_coordinates(array[:, :, c], grid, order=1, mode="nearest") for c in range(array.shape[2])]
    return np.stack(channels, axis=2)


def fit_background(bg: Image, height: int, width: int) -> Image:
    """
    Scale bg up (aspect preserved) until it covers height×width, then centre-crop

    Backgrounds that already cover the target are only cropped.
    """
    bh, bw = bg.size
    ratio = max(height / bh, width / bw)
    data = bg.data
    if ratio > 1:
        new_h, new_w = max(height, int(np.ceil(bh * ratio))), max(width, int(np.ceil(bw * ratio)))
        data = np.clip(resize_bilinear(data, new_h, new_w), 0.0, 1.0)
    top = (data.shape[0] - height) // 2
    left = (data.shape[1] - width) // 2
    return Image(data[top:top + height, left:left + width])


def resample_detail_loss(image: Image, factor: int = 4) -> float:
    """
    SAD/1000 between an image and its nearest-neighbour down-then-up-sampled copy

    Shows how much fine texture an encoder loses by downsampling early.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    h, w = image.size
    small = image.data[::factor, ::factor]
    rows = (np.arange(h) * small.shape[0]) // h
    cols = (np.arange(w) * small.shape[1]) // w
    restored = small[rows[:, None], cols[None, :]]
    return float(np.abs(restored - image.data).sum() / 1000.0)
