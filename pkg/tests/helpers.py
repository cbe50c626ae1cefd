"""
Shared test utilities: finite-difference gradient checks, toy PNG datasets and tiny training configs
"""

from pathlib import Path
from typing import Callable, Dict, Optional

import numpy as np

from src.config import ModelConfig, TrainConfig
from src.engine.tensor import Tensor, backward
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.io import save_png


def gradcheck(
    loss_fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    eps: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    max_checks: Optional[int] = 40,
    seed: int = 0,
) -> None:
    """
    Compare backward() against central differences for (a sample of) every entry

    loss_fn must rebuild the graph from the tensors' current data on every call.
    """
    for tensor in tensors.values():
        tensor.zero_grad()
    backward(loss_fn())
    rng = np.random.default_rng(seed)

    for name, tensor in tensors.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = np.arange(tensor.size)
        if max_checks is not None and tensor.size > max_checks:
            flat = rng.choice(tensor.size, size=max_checks, replace=False)
        for index in flat:
            idx = np.unravel_index(int(index), tensor.shape)
            original = tensor.data[idx]
            tensor.data[idx] = original + eps
            plus = loss_fn().item()
            tensor.data[idx] = original - eps
            minus = loss_fn().item()
            tensor.data[idx] = original
            numeric = (plus - minus) / (2 * eps)
            a = float(analytic[idx])
            error = abs(a - numeric)
            scale = max(abs(a), abs(numeric))
            assert error <= atol or error <= rtol * scale, (
                f"{name}{idx}: analytic {a:.10g} vs numeric {numeric:.10g}"
            )


def random_image(rng: np.random.Generator, h: int, w: int) -> Image:
    return Image(rng.random((h, w, 3)))


def disc_alpha(h: int, w: int, radius: float, soft: float = 2.0) -> AlphaMatte:
    """Centred disc with a linear soft edge of width soft"""
    yy, xx = np.mgrid[0:h, 0:w]
    distance = np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)
    return AlphaMatte(np.clip((radius - distance) / soft + 0.5, 0.0, 1.0))


def flat_image(rng: np.random.Generator, h: int, w: int) -> Image:
    return Image(np.broadcast_to(rng.random(3), (h, w, 3)).copy())


def write_source_dir(
    root: Path, n_fg: int = 2, n_bg: int = 3, size: int = 48, seed: int = 0, flat: bool = False
) -> Path:
    """fg/, alpha/ and bg/ with disc-shaped alphas; noise images, or one colour per image when flat"""
    rng = np.random.default_rng(seed)
    make_image = flat_image if flat else random_image
    for k in range(n_fg):
        save_png(root / "fg" / f"fg{k}.png", make_image(rng, size, size))
        save_png(root / "alpha" / f"fg{k}.png", disc_alpha(size, size, size / 4 + 2 * k))
    for k in range(n_bg):
        save_png(root / "bg" / f"bg{k}.png", make_image(rng, size + 8 * k, size + 4 * k))
    return root


def tiny_config(source_dir: Path, output_dir: Path, **overrides) -> TrainConfig:
    """Width-4 network on 32×32 crops, a few single-threaded steps"""
    values = dict(
        total_steps=3,
        warmup_steps=1,
        batch_size=2,
        model=ModelConfig(base_width=4, tcp_width=4),
        crop_sizes=[32],
        crop_out=32,
        data_dir=str(source_dir),
        output_dir=str(output_dir),
        deterministic=True,
        checkpoint_every=2,
        log_every=1,
    )
    values.update(overrides)
    return TrainConfig(**values)
