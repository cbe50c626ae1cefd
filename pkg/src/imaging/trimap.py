"""
Trimap generation from ground-truth alpha and random perturbation of the unknown band

Labels are stored as uint8 codes BG=0, U=1, FG=2, which are also the one-hot channel
indices. Morphology uses k×k square structuring elements; pixels outside the image
count as outside every mask.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Union

import numpy as np
from scipy import ndimage

from src.config import TrimapGenConfig
from src.engine.tensor import Tensor
from src.errors import DimensionError, TrimapError
from src.imaging.buffers import AlphaMatte
from src.imaging.io import read_png_uint8, write_png_uint8

logger = logging.getLogger(__name__)

BG, U, FG = 0, 1, 2
PNG_CODES = np.array([0, 128, 255], dtype=np.int16)
MAX_KERNEL = 30


@dataclass(frozen=True)
class Trimap:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise DimensionError(f"Trimap must be H×W, got {labels.shape}")
        if labels.size and (labels.min() < BG or labels.max() > FG):
            raise TrimapError(f"Trimap labels must be in {{0, 1, 2}}, got range [{labels.min()}, {labels.max()}]")
        object.__setattr__(self, "labels", labels.astype(np.uint8))

    @property
    def size(self):
        return self.labels.shape

    @property
    def unknown(self) -> np.ndarray:
        return self.labels == U

    @property
    def foreground(self) -> np.ndarray:
        return self.labels == FG

    @property
    def background(self) -> np.ndarray:
        return self.labels == BG

    def digest(self) -> str:
        """Short content hash, used to compare trimaps in training logs"""
        h = hashlib.sha256(self.labels.tobytes())
        h.update(str(self.labels.shape).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class TrimapPair:
    """Trimap for the semantic path and its (possibly noisier) copy for the textural path"""

    sp: Trimap
    tcp: Trimap

    def __post_init__(self):
        if self.sp.size != self.tcp.size:
            raise DimensionError(f"TrimapPair sizes differ: sp {self.sp.size}, tcp {self.tcp.size}")

    @classmethod
    def shared(cls, trimap: Trimap) -> "TrimapPair":
        """Inference pairing: the user trimap feeds both paths"""
        return cls(sp=trimap, tcp=trimap)


@dataclass(frozen=True)
class PerturbStep:
    op: Literal["dilate_u", "erode_u"]
    iterations: int
    kernel: int

    @property
    def is_identity(self) -> bool:
        return self.iterations == 0 or self.kernel == 1


def _square(k: int) -> np.ndarray:
    return np.ones((k, k), dtype=bool)


def _erode(mask: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=_square(k), border_value=0)


def _dilate(mask: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=_square(k), border_value=0)


def trimap_from_alpha(alpha: AlphaMatte) -> Trimap:
    """α = 1 → FG, α = 0 → BG, anything in between → U"""
    labels = np.full(alpha.size, U, dtype=np.uint8)
    labels[alpha.data == 1.0] = FG
    labels[alpha.data == 0.0] = BG
    return Trimap(labels)


def _grow(t: Trimap, k: int) -> Trimap:
    labels = np.full(t.size, U, dtype=np.uint8)
    labels[_erode(t.foreground, k)] = FG
    labels[_erode(t.background, k)] = BG
    return Trimap(labels)


def grow_unknown(t: Trimap, kernel: int) -> Trimap:
    """Erode the FG and BG masks by a k×k square; pixels leaving both become U"""
    if not 1 <= kernel <= MAX_KERNEL:
        raise TrimapError(f"grow_unknown kernel must be in [1, {MAX_KERNEL}], got {kernel}")
    return _grow(t, kernel)


def _shrink(t: Trimap, k: int) -> Trimap:
    """Dilate the known masks into U; nearest mask wins, equal distance stays U"""
    fg, bg, unknown = t.foreground, t.background, t.unknown
    reached_fg = _dilate(fg, k) & unknown
    reached_bg = _dilate(bg, k) & unknown
    both = reached_fg & reached_bg

    labels = t.labels.copy()
    labels[reached_fg & ~reached_bg] = FG
    labels[reached_bg & ~reached_fg] = BG
    if both.any():
        dist_fg = ndimage.distance_transform_cdt(~fg, metric="chessboard")
        dist_bg = ndimage.distance_transform_cdt(~bg, metric="chessboard")
        labels[both & (dist_fg < dist_bg)] = FG
        labels[both & (dist_bg < dist_fg)] = BG
    return Trimap(labels)


def _draw(rng: np.random.Generator, bounds) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def gen_sp_trimap(alpha: AlphaMatte, cfg: TrimapGenConfig, rng: np.random.Generator) -> Trimap:
    """Alpha-derived trimap with its unknown band grown by a random k×k erosion"""
    return grow_unknown(trimap_from_alpha(alpha), _draw(rng, cfg.sp_kernel))


def draw_perturbation_plan(cfg: TrimapGenConfig, rng: np.random.Generator) -> List[PerturbStep]:
    """Draw n steps; each draws its op, iteration count and one kernel reused across iterations"""
    steps = []
    for _ in range(_draw(rng, cfg.steps)):
        op = "dilate_u" if rng.random() < 0.5 else "erode_u"
        iterations = _draw(rng, cfg.iterations)
        kernel = _draw(rng, cfg.dilation_kernel if op == "dilate_u" else cfg.erosion_kernel)
        steps.append(PerturbStep(op=op, iterations=iterations, kernel=kernel))
    return steps


def apply_perturbation_plan(sp: Trimap, plan: List[PerturbStep]) -> Trimap:
    t = sp
    for step in plan:
        for _ in range(step.iterations):
            t = _grow(t, step.kernel) if step.op == "dilate_u" else _shrink(t, step.kernel)
    return t


def perturb_for_tcp(sp: Trimap, cfg: TrimapGenConfig, rng: np.random.Generator) -> Trimap:
    """Noisier trimap for the textural path: random dilations/erosions of the unknown band"""
    plan = draw_perturbation_plan(cfg, rng)
    if not plan:
        return sp
    logger.debug(f"Perturbing trimap with {plan}")
    return apply_perturbation_plan(sp, plan)


def remove_foreground(t: Trimap) -> Trimap:
    """Coarse user trimap: every FG pixel becomes unknown"""
    labels = t.labels.copy()
    labels[labels == FG] = U
    return Trimap(labels)


def one_hot(t: Trimap) -> Tensor:
    """3×H×W encoding with channel order (BG, U, FG)"""
    return Tensor(np.eye(3)[t.labels].transpose(2, 0, 1))


def load_trimap_png(path: Union[str, Path]) -> Trimap:
    """Read 0/128/255 codes; any other byte maps to the nearest code with a warning"""
    data = read_png_uint8(path)
    if data.ndim == 3:
        logger.warning(f"Trimap {path} has {data.shape[2]} channels, using the first")
        data = data[:, :, 0]
    distance = np.abs(data.astype(np.int16)[:, :, None] - PNG_CODES[None, None, :])
    labels = distance.argmin(axis=2).astype(np.uint8)
    off_code = ~np.isin(data, PNG_CODES)
    if off_code.any():
        logger.warning(f"Trimap {path}: {int(off_code.sum())} pixels not in {{0, 128, 255}} snapped to nearest code")
    return Trimap(labels)


def save_trimap_png(path: Union[str, Path], t: Trimap) -> None:
    write_png_uint8(path, PNG_CODES[t.labels].astype(np.uint8))
