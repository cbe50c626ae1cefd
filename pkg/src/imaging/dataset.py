"""
Composition-1k style dataset construction and training-crop augmentation
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.errors import DataError, DimensionError
from src.imaging.buffers import AlphaMatte, CompositeSample, Image
from src.imaging.compositing import composite, fit_background, resize_bilinear
from src.imaging.io import load_alpha, load_image
from src.imaging.trimap import U, Trimap

logger = logging.getLogger(__name__)

Named = Tuple[str, Image]


@dataclass
class SourceSet:
    """Foregrounds with their alphas (paired by file stem) and a background pool"""

    foregrounds: List[Named]
    alphas: List[AlphaMatte]
    backgrounds: List[Named]

    def __len__(self) -> int:
        return len(self.foregrounds)


def load_source_dir(data_dir: Union[str, Path]) -> SourceSet:
    """Load <data_dir>/fg, <data_dir>/alpha and <data_dir>/bg"""
    root = Path(data_dir)
    return load_sources(root / "fg", root / "alpha", root / "bg")


def load_sources(
    fg_dir: Union[str, Path], alpha_dir: Union[str, Path], bg_dir: Union[str, Path]
) -> SourceSet:
    """
    Load foreground, alpha and background PNGs

    Raises:
        DataError: missing directories, no files, or fg/alpha stems that do not pair up
    """
    dirs = {"fg": Path(fg_dir), "alpha": Path(alpha_dir), "bg": Path(bg_dir)}
    for name, path in dirs.items():
        if not path.is_dir():
            raise DataError(f"{name} directory not found: {path}")

    fg_files = {p.stem: p for p in sorted(dirs["fg"].glob("*.png"))}
    alpha_files = {p.stem: p for p in sorted(dirs["alpha"].glob("*.png"))}
    bg_files = sorted(dirs["bg"].glob("*.png"))
    if fg_files.keys() != alpha_files.keys():
        missing = sorted(set(fg_files) ^ set(alpha_files))
        raise DataError(f"Foreground and alpha stems do not match: {missing}")
    if not fg_files:
        raise DataError(f"No foreground PNG files in {dirs['fg']}")
    if not bg_files:
        raise DataError(f"No background PNG files in {dirs['bg']}")

    foregrounds, alphas = [], []
    for stem in sorted(fg_files):
        fg = load_image(fg_files[stem])
        alpha = load_alpha(alpha_files[stem])
        if fg.size != alpha.size:
            raise DataError(f"Foreground {stem} is {fg.size} but its alpha is {alpha.size}")
        foregrounds.append((stem, fg))
        alphas.append(alpha)
    backgrounds = [(p.stem, load_image(p)) for p in bg_files]
    logger.info(f"Loaded {len(foregrounds)} foregrounds and {len(backgrounds)} backgrounds")
    return SourceSet(foregrounds, alphas, backgrounds)


def compose_pair(fg: Named, alpha: AlphaMatte, bg: Named) -> CompositeSample:
    """Fit the background to the foreground size and composite"""
    fg_id, fg_image = fg
    bg_id, bg_image = bg
    fitted = fit_background(bg_image, *fg_image.size)
    return CompositeSample(
        foreground=fg_image,
        background=fitted,
        alpha=alpha,
        composite=composite(fg_image, fitted, alpha),
        fg_id=fg_id,
        bg_id=bg_id,
    )


def synthesize_set(
    foregrounds: Sequence[Named],
    alphas: Sequence[AlphaMatte],
    backgrounds: Sequence[Named],
    per_fg: int,
    seed: int,
) -> List[CompositeSample]:
    """
    Composite every foreground over per_fg backgrounds

    Backgrounds are drawn without replacement per foreground, with replacement (and a
    warning) when the pool is smaller than per_fg. Deterministic given seed.
    """
    if not foregrounds or not backgrounds:
        raise DataError("synthesize_set needs at least one foreground and one background")
    if len(foregrounds) != len(alphas):
        raise DataError(f"{len(foregrounds)} foregrounds but {len(alphas)} alphas")
    if per_fg < 1:
        raise DataError(f"per_fg must be >= 1, got {per_fg}")

    replace = len(backgrounds) < per_fg
    if replace:
        logger.warning(f"Only {len(backgrounds)} backgrounds for per_fg={per_fg}; drawing with replacement")
    rng = np.random.default_rng(seed)
    samples = []
    for fg, alpha in zip(foregrounds, alphas):
        picks = rng.choice(len(backgrounds), size=per_fg, replace=replace)
        for index in picks:
            samples.append(compose_pair(fg, alpha, backgrounds[int(index)]))
    return samples


def _reflect_pad(array: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    widths = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, widths, mode="reflect") if (pad_h or pad_w) else array


@dataclass
class TrainingCrop:
    sample: CompositeSample
    trimap: Trimap
    center: Tuple[int, int]


def crop_for_training(
    sample: CompositeSample,
    trimap: Trimap,
    sizes: Sequence[int],
    out: int,
    seed: Union[int, Sequence[int], np.random.Generator],
) -> TrainingCrop:
    """
    Random square crop centred on an unknown pixel, resized to out×out, randomly flipped

    Images smaller than the smallest crop size are reflect-padded first. A crop larger
    than the (padded) image is limited to the image extent. Without unknown pixels the
    centre is drawn uniformly over the image.
    """
    if trimap.size != sample.size:
        raise DimensionError(f"trimap {trimap.size} does not match sample {sample.size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    h, w = sample.size
    smallest = min(sizes)
    pad_h, pad_w = max(0, smallest - h), max(0, smallest - w)
    buffers = {
        "fg": _reflect_pad(sample.foreground.data, pad_h, pad_w),
        "bg": _reflect_pad(sample.background.data, pad_h, pad_w),
        "alpha": _reflect_pad(sample.alpha.data, pad_h, pad_w),
        "trimap": _reflect_pad(trimap.labels, pad_h, pad_w),
    }
    h, w = h + pad_h, w + pad_w

    candidates = np.flatnonzero(buffers["trimap"] == U)
    if candidates.size:
        flat = int(candidates[rng.integers(candidates.size)])
    else:
        flat = int(rng.integers(h * w))
    cy, cx = divmod(flat, w)

    size = int(sizes[int(rng.integers(len(sizes)))])
    ch, cw = min(size, h), min(size, w)
    top = int(np.clip(cy - ch // 2, 0, h - ch))
    left = int(np.clip(cx - cw // 2, 0, w - cw))
    flip = bool(rng.random() < 0.5)

    def window(array: np.ndarray, bilinear: bool = True) -> np.ndarray:
        part = array[top:top + ch, left:left + cw]
        if bilinear:
            part = np.clip(resize_bilinear(part, out, out), 0.0, 1.0)
        else:
            rows = (np.arange(out) * ch) // out
            cols = (np.arange(out) * cw) // out
            part = part[rows[:, None], cols[None, :]]
        return part[:, ::-1].copy() if flip else part

    fg, bg, alpha = Image(window(buffers["fg"])), Image(window(buffers["bg"])), AlphaMatte(window(buffers["alpha"]))
    cropped = CompositeSample(
        foreground=fg,
        background=bg,
        alpha=alpha,
        composite=composite(fg, bg, alpha),
        fg_id=sample.fg_id,
        bg_id=sample.bg_id,
    )
    return TrainingCrop(
        sample=cropped,
        trimap=Trimap(window(buffers["trimap"], bilinear=False)),
        center=(cy, cx),
    )
