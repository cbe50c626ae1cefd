"""
Image buffers shared by the imaging, trimap and model code
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import DimensionError


@dataclass(frozen=True)
class Image:
    """H×W×3 float64 RGB values in [0, 1]"""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"Image must be H×W×3 with H, W >= 1, got {data.shape}")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(f"Image values must lie in [0, 1], got [{data.min()}, {data.max()}]")
        object.__setattr__(self, "data", data)

    @property
    def size(self) -> Tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]


@dataclass(frozen=True)
class AlphaMatte:
    """H×W float64 opacity values in [0, 1]"""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"AlphaMatte must be H×W with H, W >= 1, got {data.shape}")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(f"Alpha values must lie in [0, 1], got [{data.min()}, {data.max()}]")
        object.__setattr__(self, "data", data)

    @property
    def size(self) -> Tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class CompositeSample:
    """A foreground composited over a background with its ground-truth alpha"""

    foreground: Image
    background: Image
    alpha: AlphaMatte
    composite: Image
    fg_id: str
    bg_id: str

    def __post_init__(self):
        sizes = {self.foreground.size, self.background.size, self.alpha.size, self.composite.size}
        if len(sizes) != 1:
            raise DimensionError(f"CompositeSample buffers disagree in size: {sorted(sizes)}")

    @property
    def size(self) -> Tuple[int, int]:
        return self.alpha.size
