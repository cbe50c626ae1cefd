"""
8-bit PNG input/output for images, alpha mattes and trimaps
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import png

from src.errors import DataError, DimensionError, UnsupportedDepthError
from src.imaging.buffers import AlphaMatte, Image

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_png_uint8(path: PathLike) -> np.ndarray:
    """
    Decode an 8-bit PNG into a uint8 array

    Returns:
        H×W for greyscale, H×W×planes otherwise (palette images are expanded to RGB)
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"PNG file not found: {path}")
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        if info["bitdepth"] != 8:
            raise UnsupportedDepthError(f"{path} has bit depth {info['bitdepth']}, only 8-bit PNG is supported")
        planes = info["planes"]
        data = np.array([np.asarray(row, dtype=np.uint8) for row in rows], dtype=np.uint8)
    except (png.Error, OSError) as e:
        raise DataError(f"Failed to decode {path}: {str(e)}")
    if planes == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, planes)


def write_png_uint8(path: PathLike, data: np.ndarray) -> None:
    """Encode an H×W (greyscale) or H×W×3 (RGB) uint8 array"""
    path = Path(path)
    if data.dtype != np.uint8:
        raise DimensionError(f"write_png_uint8 expects uint8 data, got {data.dtype}")
    if data.ndim == 2:
        height, width = data.shape
        writer = png.Writer(width=width, height=height, greyscale=True, bitdepth=8)
    elif data.ndim == 3 and data.shape[2] == 3:
        height, width = data.shape[:2]
        writer = png.Writer(width=width, height=height, greyscale=False, bitdepth=8)
    else:
        raise DimensionError(f"Cannot write PNG from array of shape {data.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "wb") as f:
            writer.write(f, data.reshape(height, -1).tolist())
    except OSError as e:
        raise DataError(f"Failed to write {path}: {str(e)}")


def quantize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to the nearest 8-bit code"""
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def load_png(path: PathLike) -> Union[Image, AlphaMatte]:
    """
    Load a PNG as an Image (RGB) or AlphaMatte (greyscale), scaled by 1/255

    Alpha channels of RGBA / grey+alpha files are dropped with a warning.
    """
    data = read_png_uint8(path)
    if data.ndim == 3 and data.shape[2] in (2, 4):
        logger.warning(f"Ignoring alpha channel of {path}")
        data = data[:, :, :-1]
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    values = data.astype(np.float64) / 255.0
    if values.ndim == 2:
        return AlphaMatte(values)
    return Image(values)


def load_image(path: PathLike) -> Image:
    """Load a PNG as RGB; greyscale files are replicated into three channels"""
    loaded = load_png(path)
    if isinstance(loaded, AlphaMatte):
        return Image(np.repeat(loaded.data[:, :, None], 3, axis=2))
    return loaded


def load_alpha(path: PathLike) -> AlphaMatte:
    """Load a PNG as an alpha matte; RGB files must be grey (equal channels)"""
    loaded = load_png(path)
    if isinstance(loaded, Image):
        channels = loaded.data
        if not (np.array_equal(channels[:, :, 0], channels[:, :, 1]) and np.array_equal(channels[:, :, 0], channels[:, :, 2])):
            raise DataError(f"Alpha file {path} is a colour image")
        return AlphaMatte(channels[:, :, 0])
    return loaded


def save_png(path: PathLike, buffer: Union[Image, AlphaMatte]) -> None:
    """Write an Image or AlphaMatte as an 8-bit PNG"""
    write_png_uint8(path, quantize(buffer.data))
