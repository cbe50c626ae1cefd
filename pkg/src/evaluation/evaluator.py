"""
Per-sample metric evaluation and report assembly
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from src.errors import DataError, DimensionError
from src.evaluation.metrics import connectivity_error, gradient_error, mse, sad
from src.imaging.buffers import AlphaMatte
from src.imaging.io import load_alpha
from src.imaging.trimap import Trimap, load_trimap_png

logger = logging.getLogger(__name__)

METRICS = ("sad", "mse", "grad", "conn")
CONVENTION = (
    "SAD, Grad and Conn are sums over the trimap unknown region divided by 1000; "
    "MSE is the mean over the unknown region; alphas in [0, 1]; "
    "Grad uses Gaussian-derivative filters (sigma 1.4, radius 5, L1-normalized, reflected borders); "
    "Conn uses levels 0.1..0.9, 4-connectivity and tolerance 0.15"
)


@dataclass(frozen=True)
class EvalSample:
    id: str
    gt: AlphaMatte
    pred: AlphaMatte
    trimap: Trimap


class MetricRow(BaseModel):
    id: str
    sad: float = Field(..., ge=0)
    mse: Optional[float] = Field(None, ge=0, description="None when the unknown region is empty")
    grad: float = Field(..., ge=0)
    conn: float = Field(..., ge=0)


class MetricReport(BaseModel):
    convention: str = CONVENTION
    rows: List[MetricRow]
    mean: MetricRow
    undefined: Dict[str, int] = Field(default_factory=dict, description="Samples excluded from each mean")
    skipped: List[str] = Field(default_factory=list, description="Sample ids missing a prediction, gt or trimap")

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Aligned plain-text table with columns SAD, MSE, Grad, Conn"""
        width = max([len("id")] + [len(row.id) for row in self.rows] + [len("mean")])

        def cell(value: Optional[float]) -> str:
            return f"{'n/a':>10}" if value is None else f"{value:>10.4f}"

        lines = [f"# {self.convention}", f"{'id':<{width}} {'SAD':>10} {'MSE':>10} {'Grad':>10} {'Conn':>10}"]
        for row in self.rows + [self.mean]:
            lines.append(f"{row.id:<{width}} {cell(row.sad)} {cell(row.mse)} {cell(row.grad)} {cell(row.conn)}")
        return "\n".join(lines) + "\n"

    def write(self, output_dir: Union[str, Path], stem: str = "report") -> Tuple[Path, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        json_path = output_dir / f"{stem}.json"
        table_path = output_dir / f"{stem}.txt"
        json_path.write_text(self.to_json(), encoding="utf-8")
        table_path.write_text(self.to_table(), encoding="utf-8")
        logger.info(f"Wrote metric report to {json_path}")
        return json_path, table_path


def score_sample(sample: EvalSample) -> MetricRow:
    gt, pred, unknown = sample.gt.data, sample.pred.data, sample.trimap.unknown
    if not (gt.shape == pred.shape == unknown.shape):
        raise DimensionError(
            f"Sample {sample.id}: gt {gt.shape}, prediction {pred.shape} and trimap {unknown.shape} differ"
        )
    return MetricRow(
        id=sample.id,
        sad=sad(gt, pred, unknown),
        mse=mse(gt, pred, unknown),
        grad=gradient_error(gt, pred, unknown),
        conn=connectivity_error(gt, pred, unknown),
    )


def evaluate(samples: Sequence[EvalSample], n_jobs: int = 1) -> MetricReport:
    """
    Score every sample and average each metric over the samples where it is defined

    Rows are sorted by sample id, so the report does not depend on n_jobs.
    """
    if not samples:
        raise DataError("evaluate needs at least one sample")
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(score_sample)(s) for s in samples)
    rows = sorted(rows, key=lambda row: row.id)

    means, undefined = {}, {}
    for metric in METRICS:
        values = [getattr(row, metric) for row in rows if getattr(row, metric) is not None]
        undefined[metric] = len(rows) - len(values)
        means[metric] = float(np.mean(values)) if values else None
    if undefined["mse"]:
        logger.warning(f"MSE undefined (empty unknown region) for {undefined['mse']} samples")
    mean_row = MetricRow(
        id="mean",
        sad=means["sad"],
        mse=means["mse"],
        grad=means["grad"],
        conn=means["conn"],
    )
    return MetricReport(rows=rows, mean=mean_row, undefined=undefined)


def collect_samples(
    pred_dir: Union[str, Path], gt_dir: Union[str, Path], trimap_dir: Union[str, Path]
) -> Tuple[List[EvalSample], List[str]]:
    """
    Pair <stem>.png files across the three directories

    Returns:
        (samples, skipped stems lacking one of the three files)
    """
    dirs = [Path(pred_dir), Path(gt_dir), Path(trimap_dir)]
    for path in dirs:
        if not path.is_dir():
            raise DataError(f"Evaluation directory not found: {path}")
    stems = [{p.stem for p in d.glob("*.png")} for d in dirs]
    complete = stems[0] & stems[1] & stems[2]
    skipped = sorted((stems[0] | stems[1] | stems[2]) - complete)
    for stem in skipped:
        logger.warning(f"Skipping {stem}: missing prediction, ground truth or trimap")

    samples = []
    for stem in sorted(complete):
        samples.append(
            EvalSample(
                id=stem,
                gt=load_alpha(dirs[1] / f"{stem}.png"),
                pred=load_alpha(dirs[0] / f"{stem}.png"),
                trimap=load_trimap_png(dirs[2] / f"{stem}.png"),
            )
        )
    return samples, skipped


def evaluate_directories(
    pred_dir: Union[str, Path], gt_dir: Union[str, Path], trimap_dir: Union[str, Path], n_jobs: int = 1
) -> MetricReport:
    samples, skipped = collect_samples(pred_dir, gt_dir, trimap_dir)
    if not samples:
        raise DataError(f"No complete prediction/gt/trimap triples found ({len(skipped)} skipped)")
    report = evaluate(samples, n_jobs=n_jobs)
    return report.model_copy(update={"skipped": skipped})
