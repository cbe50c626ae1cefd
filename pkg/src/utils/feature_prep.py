"""
Network input preparation: RGB + one-hot trimap stacking and stride padding
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.engine import ops
from src.engine.tensor import Tensor, get_dtype
from src.errors import DimensionError
from src.imaging.buffers import Image
from src.imaging.trimap import Trimap, one_hot

logger = logging.getLogger(__name__)

ENCODER_STRIDE = 32


@dataclass(frozen=True)
class CropRecord:
    """Original spatial size of a padded batch"""

    height: int
    width: int

    def restore(self, x: Tensor) -> Tensor:
        if x.shape[2:] == (self.height, self.width):
            return x
        return ops.crop(x, self.height, self.width)


class FeaturePreparator:
    """Builds N×6×H×W arrays from (image, trimap) pairs"""

    def __init__(self, stride: int = ENCODER_STRIDE):
        self.stride = stride

    def prepare_input(self, image: Image, trimap: Trimap) -> np.ndarray:
        """
        Stack RGB and the (BG, U, FG) one-hot trimap into one 6×H×W array

        Raises:
            DimensionError: image and trimap sizes differ
        """
        if image.size != trimap.size:
            raise DimensionError(f"image {image.size} and trimap {trimap.size} differ in size")
        rgb = image.data.transpose(2, 0, 1)
        return np.concatenate([rgb, one_hot(trimap).data], axis=0).astype(get_dtype())

    def prepare_batch(self, images: Sequence[Image], trimaps: Sequence[Trimap]) -> np.ndarray:
        if len(images) != len(trimaps) or not images:
            raise DimensionError(f"prepare_batch needs matching non-empty lists, got {len(images)} and {len(trimaps)}")
        return np.stack([self.prepare_input(img, t) for img, t in zip(images, trimaps)])

    def pad_to_stride(self, batch: np.ndarray) -> Tuple[np.ndarray, CropRecord]:
        """Reflect-pad right and bottom up to the next multiple of the stride"""
        if batch.ndim != 4:
            raise DimensionError(f"pad_to_stride expects N×C×H×W, got {batch.shape}")
        h, w = batch.shape[2:]
        if h < 1 or w < 1:
            raise DimensionError(f"pad_to_stride needs a non-empty image, got {h}×{w}")
        pad_h = -h % self.stride
        pad_w = -w % self.stride
        record = CropRecord(h, w)
        if not (pad_h or pad_w):
            return batch, record
        padded = np.pad(batch, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
        logger.debug(f"Padded input {h}×{w} to {h + pad_h}×{w + pad_w}")
        return padded, record
