"""
Three-variant ablation: baseline, baseline+TCP, baseline+TCP+IMRP

All variants share the seed, so they train on the same sample sequence and are
evaluated on the same held-out set.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

from src.config import TrainConfig
from src.errors import DataError
from src.evaluation.evaluator import MetricReport, MetricRow, evaluate
from src.imaging.dataset import load_source_dir
from src.imaging.trimap import remove_foreground
from src.models.matte_predictor import MattePredictor
from src.pipeline.inference import predict_held_out
from src.pipeline.synthesis import HeldOutSample, load_held_out
from src.pipeline.training import Trainer

logger = logging.getLogger(__name__)


class AblationVariant(BaseModel):
    name: str
    tcp_enabled: bool
    imrp: bool = Field(..., description="Perturbed TCP trimap plus background enhancement loss")

    @property
    def slug(self) -> str:
        return self.name.replace("+", "_").lower()

    def apply(self, base: TrainConfig, output_dir: Path) -> TrainConfig:
        model = base.model.model_copy(update={"tcp_enabled": self.tcp_enabled})
        return base.model_copy(
            update={"model": model, "imrp": self.imrp, "output_dir": str(output_dir / self.slug)}
        )


VARIANTS = (
    AblationVariant(name="baseline", tcp_enabled=False, imrp=False),
    AblationVariant(name="baseline+TCP", tcp_enabled=True, imrp=False),
    AblationVariant(name="baseline+TCP+IMRP", tcp_enabled=True, imrp=True),
)


class AblationResult(BaseModel):
    reports: Dict[str, MetricReport]
    robustness: Dict[str, MetricReport] = Field(default_factory=dict)
    checkpoints: Dict[str, str]

    def table(self, robustness: bool = False) -> List[MetricRow]:
        source = self.robustness if robustness else self.reports
        return [report.mean.model_copy(update={"id": name}) for name, report in source.items()]

    def to_text(self) -> str:
        blocks = [("Ablation (SP trimaps)", self.table())]
        if self.robustness:
            blocks.append(("Robustness (foreground removed from trimaps)", self.table(robustness=True)))
        width = max(len(v.name) for v in VARIANTS)
        lines = []
        for title, rows in blocks:
            lines.append(f"# {title}")
            lines.append(f"{'variant':<{width}} {'SAD':>10} {'MSE':>10} {'Grad':>10} {'Conn':>10}")
            for row in rows:
                mse = "n/a" if row.mse is None else f"{row.mse:.4f}"
                lines.append(f"{row.id:<{width}} {row.sad:>10.4f} {mse:>10} {row.grad:>10.4f} {row.conn:>10.4f}")
            lines.append("")
        return "\n".join(lines)


def _coarse(samples: List[HeldOutSample]) -> List[HeldOutSample]:
    return [HeldOutSample(s.id, s.image, s.alpha, remove_foreground(s.trimap)) for s in samples]


def ablate(
    base: TrainConfig,
    output_dir: Optional[Union[str, Path]] = None,
    robustness: bool = False,
    variants=VARIANTS,
) -> AblationResult:
    """
    Train and evaluate every variant, then write ablation.json and ablation.txt

    Raises:
        DataError: data_dir or eval_dir missing from the configuration
    """
    if base.data_dir is None or base.eval_dir is None:
        raise DataError("ablate needs both data_dir (training sources) and eval_dir (synthesized held-out set)")
    output_dir = Path(output_dir or base.output_dir)
    sources = load_source_dir(base.data_dir)
    held_out = load_held_out(base.eval_dir)
    coarse = _coarse(held_out) if robustness else []

    reports, robust, checkpoints = {}, {}, {}
    for variant in variants:
        cfg = variant.apply(base, output_dir)
        logger.info(f"Ablation variant {variant.name}: tcp={variant.tcp_enabled} imrp={variant.imrp}")
        trainer = Trainer(cfg, sources=sources)
        result = trainer.run()
        predictor = MattePredictor(result.checkpoint)
        report = evaluate(predict_held_out(predictor, held_out, n_jobs=trainer.n_jobs), n_jobs=trainer.n_jobs)
        report.write(cfg.output_dir)
        reports[variant.name] = report
        checkpoints[variant.name] = str(result.checkpoint)
        if robustness:
            robust_report = evaluate(predict_held_out(predictor, coarse, n_jobs=trainer.n_jobs), n_jobs=trainer.n_jobs)
            robust_report.write(cfg.output_dir, stem="report_robustness")
            robust[variant.name] = robust_report

    outcome = AblationResult(reports=reports, robustness=robust, checkpoints=checkpoints)
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "ablation.json").write_text(
        json.dumps(outcome.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (output_dir / "ablation.txt").write_text(outcome.to_text(), encoding="utf-8")
    logger.info(f"Wrote ablation tables to {output_dir}")
    return outcome
