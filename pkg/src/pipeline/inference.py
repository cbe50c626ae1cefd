"""
Inference on single images and on synthesized datasets
"""

import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from src.errors import DataError
from src.evaluation.evaluator import EvalSample
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.io import load_alpha, load_image, quantize, save_png, write_png_uint8
from src.imaging.trimap import PNG_CODES, Trimap, load_trimap_png
from src.models.matte_predictor import MattePredictor
from src.pipeline.synthesis import HeldOutSample, load_held_out

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def comparison_strip(image: Image, trimap: Trimap, matte: AlphaMatte, gt: Optional[AlphaMatte] = None) -> np.ndarray:
    """Side-by-side uint8 RGB strip: image | trimap | prediction [| ground truth]"""
    panels = [
        quantize(image.data),
        np.repeat(PNG_CODES[trimap.labels].astype(np.uint8)[:, :, None], 3, axis=2),
        np.repeat(quantize(matte.data)[:, :, None], 3, axis=2),
    ]
    if gt is not None:
        if gt.size != matte.size:
            raise DataError(f"Ground truth {gt.size} does not match prediction {matte.size}")
        panels.append(np.repeat(quantize(gt.data)[:, :, None], 3, axis=2))
    return np.concatenate(panels, axis=1)


def infer(
    checkpoint: PathLike,
    image_path: PathLike,
    trimap_path: PathLike,
    output_path: PathLike,
    comparison_path: Optional[PathLike] = None,
    gt_path: Optional[PathLike] = None,
    predictor: Optional[MattePredictor] = None,
) -> AlphaMatte:
    """
    Predict a matte for one image with its user trimap and write it as 8-bit greyscale PNG

    Raises:
        DataError: image and trimap differ in size, or an input is unreadable
        CheckpointError: the checkpoint or its sidecar cannot be read
    """
    image = load_image(image_path)
    trimap = load_trimap_png(trimap_path)
    if image.size != trimap.size:
        raise DataError(f"Image {image_path} is {image.size} but trimap {trimap_path} is {trimap.size}")
    predictor = predictor or MattePredictor(checkpoint)
    matte = predictor.predict(image, trimap)
    save_png(output_path, matte)
    logger.info(f"Wrote matte {output_path}")
    if comparison_path is not None:
        gt = load_alpha(gt_path) if gt_path is not None else None
        write_png_uint8(comparison_path, comparison_strip(image, trimap, matte, gt))
        logger.info(f"Wrote comparison strip {comparison_path}")
    return matte


def predict_held_out(
    predictor: MattePredictor,
    samples: List[HeldOutSample],
    output_dir: Optional[PathLike] = None,
    n_jobs: int = 1,
) -> List[EvalSample]:
    """Predict every held-out sample (optionally writing <id>.png) and pair it with its ground truth"""

    def run(sample: HeldOutSample) -> EvalSample:
        matte = predictor.predict(sample.image, sample.trimap)
        if output_dir is not None:
            save_png(Path(output_dir) / f"{sample.id}.png", matte)
        return EvalSample(id=sample.id, gt=sample.alpha, pred=matte, trimap=sample.trimap)

    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(s) for s in samples)


def infer_dataset(
    checkpoint: PathLike,
    dataset_dir: PathLike,
    output_dir: PathLike,
    trimap_layer: str = "trimap_sp",
    n_jobs: int = 1,
) -> List[EvalSample]:
    """Write a prediction for every sample of a synthesized dataset into output_dir"""
    predictor = MattePredictor(checkpoint)
    samples = load_held_out(dataset_dir, trimap_layer)
    results = predict_held_out(predictor, samples, output_dir, n_jobs)
    logger.info(f"Wrote {len(results)} predictions to {output_dir}")
    return results
