"""
Synthesized evaluation set: composites, ground-truth alphas, SP/TCP trimaps and a manifest
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from src.config import TrimapGenConfig
from src.errors import DataError
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.dataset import SourceSet, synthesize_set
from src.imaging.io import load_alpha, load_image, save_png
from src.imaging.trimap import Trimap, gen_sp_trimap, load_trimap_png, perturb_for_tcp, save_trimap_png
from src.utils.model_loader import ModelLoader

logger = logging.getLogger(__name__)

LAYOUT = ("comp", "alpha", "trimap_sp", "trimap_tcp")
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class HeldOutSample:
    id: str
    image: Image
    alpha: AlphaMatte
    trimap: Trimap


def synthesize_dataset(
    sources: SourceSet,
    output_dir: Union[str, Path],
    per_fg: int,
    seed: int,
    trimap_cfg: TrimapGenConfig = TrimapGenConfig(),
) -> Dict[str, Any]:
    """
    Composite every foreground over per_fg backgrounds and write the dataset layout

    Sample k of foreground <fg> is stored as <fg>_<k>.png in each of comp/, alpha/,
    trimap_sp/ and trimap_tcp/. Trimaps are drawn from a generator seeded by
    (seed, sample index), so the output depends only on the inputs and seed.

    Returns:
        The manifest written to manifest.json
    """
    output_dir = Path(output_dir)
    samples = synthesize_set(sources.foregrounds, sources.alphas, sources.backgrounds, per_fg, seed)
    entries: List[Dict[str, str]] = []
    for index, sample in enumerate(samples):
        sample_id = f"{sample.fg_id}_{index % per_fg}"
        rng = np.random.default_rng([seed, index])
        sp = gen_sp_trimap(sample.alpha, trimap_cfg, rng)
        tcp = perturb_for_tcp(sp, trimap_cfg, rng)

        files = {layer: f"{layer}/{sample_id}.png" for layer in LAYOUT}
        save_png(output_dir / files["comp"], sample.composite)
        save_png(output_dir / files["alpha"], sample.alpha)
        save_trimap_png(output_dir / files["trimap_sp"], sp)
        save_trimap_png(output_dir / files["trimap_tcp"], tcp)
        entries.append({"id": sample_id, "fg": sample.fg_id, "bg": sample.bg_id, **files})

    manifest = {
        "seed": seed,
        "per_fg": per_fg,
        "count": len(entries),
        "trimap": trimap_cfg.model_dump(mode="json"),
        "samples": entries,
    }
    ModelLoader(output_dir).save_json_data(manifest, MANIFEST)
    logger.info(f"Synthesized {len(entries)} samples into {output_dir}")
    return manifest


def load_held_out(dataset_dir: Union[str, Path], trimap_layer: str = "trimap_sp") -> List[HeldOutSample]:
    """Read a synthesized dataset back through its manifest"""
    dataset_dir = Path(dataset_dir)
    manifest = ModelLoader(dataset_dir).load_json_data(MANIFEST)
    if manifest is None:
        raise DataError(f"{dataset_dir} has no readable {MANIFEST}")
    samples = []
    for entry in manifest.get("samples", []):
        samples.append(
            HeldOutSample(
                id=entry["id"],
                image=load_image(dataset_dir / entry["comp"]),
                alpha=load_alpha(dataset_dir / entry["alpha"]),
                trimap=load_trimap_png(dataset_dir / entry[trimap_layer]),
            )
        )
    if not samples:
        raise DataError(f"Manifest of {dataset_dir} lists no samples")
    return samples
