"""
matteforge command line: synth | train | infer | eval | ablate | serve

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical abort.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from src.config import TrainConfig, TrimapGenConfig, load_config, resolve_threads
from src.errors import DataError, MatteForgeError, UsageError

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file mirroring the TrainConfig fields")
    parser.add_argument("--seed", type=int, help="Seed for every random draw")
    parser.add_argument("--deterministic", action="store_true", default=None, help="Single worker thread")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matteforge", description="Dual-path image matting toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="Composite foregrounds over backgrounds and write trimaps")
    _common(p)
    p.add_argument("--data", help="Directory holding fg/, alpha/ and bg/")
    p.add_argument("--fg", help="Foreground directory (overrides --data)")
    p.add_argument("--alpha", help="Alpha directory (overrides --data)")
    p.add_argument("--bg", help="Background directory (overrides --data)")
    p.add_argument("--per-fg", type=int, default=20, help="Backgrounds per foreground")
    p.add_argument("--out", required=True, help="Output dataset directory")

    p = sub.add_parser("train", help="Train a matting network")
    _common(p)
    p.add_argument("--data", dest="data_dir", help="Directory holding fg/, alpha/ and bg/")
    p.add_argument("--output", dest="output_dir", help="Run directory for checkpoints and the log")
    p.add_argument("--steps", dest="total_steps", type=int)
    p.add_argument("--warmup", dest="warmup_steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--precision", choices=["float32", "float64"])
    p.add_argument("--no-tcp", action="store_true", help="Train the semantic-path-only baseline")
    p.add_argument("--no-imrp", action="store_true", help="Disable trimap perturbation and the background loss")
    p.add_argument("--resume", help="Checkpoint to continue from")

    p = sub.add_parser("infer", help="Predict alpha mattes")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", help="Input RGB PNG")
    p.add_argument("--trimap", help="Trimap PNG with codes 0/128/255")
    p.add_argument("--output", help="Output matte PNG (single image) or directory (with --dataset)")
    p.add_argument("--comparison", help="Also write an image | trimap | matte strip")
    p.add_argument("--gt", help="Ground-truth alpha appended to the comparison strip")
    p.add_argument("--dataset", help="Synthesized dataset to predict instead of a single image")

    p = sub.add_parser("eval", help="Score predictions against ground truth")
    _common(p)
    p.add_argument("--pred", required=True, help="Directory of predicted mattes")
    p.add_argument("--gt", required=True, help="Directory of ground-truth alphas")
    p.add_argument("--trimap", required=True, help="Directory of trimaps defining the unknown region")
    p.add_argument("--output", default=".", help="Directory for report.json and report.txt")

    p = sub.add_parser("ablate", help="Train and evaluate baseline, +TCP and +TCP+IMRP")
    _common(p)
    p.add_argument("--data", dest="data_dir", help="Training sources (fg/, alpha/, bg/)")
    p.add_argument("--eval-dir", dest="eval_dir", help="Synthesized held-out set")
    p.add_argument("--output", dest="output_dir")
    p.add_argument("--steps", dest="total_steps", type=int)
    p.add_argument("--warmup", dest="warmup_steps", type=int)
    p.add_argument("--robustness", action="store_true", help="Also evaluate on foreground-free trimaps")

    p = sub.add_parser("serve", help="Run the HTTP service")
    p.add_argument("--host", default=os.getenv("API_HOST", "0.0.0.0"))
    p.add_argument("--port", type=int, default=int(os.getenv("API_PORT", "8000")))
    p.add_argument("--reload", action="store_true", default=os.getenv("API_RELOAD", "False").lower() == "true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in ("seed", "deterministic", "data_dir", "eval_dir", "output_dir", "total_steps",
                    "warmup_steps", "batch_size", "precision")
    }
    config = load_config(args.config, **overrides)
    if getattr(args, "no_tcp", False):
        config = config.model_copy(update={"model": config.model.model_copy(update={"tcp_enabled": False})})
    if getattr(args, "no_imrp", False):
        config = config.model_copy(update={"imrp": False})
    return config


def cmd_synth(args: argparse.Namespace) -> int:
    from src.imaging.dataset import load_source_dir, load_sources
    from src.pipeline.synthesis import synthesize_dataset

    config = load_config(args.config, seed=args.seed)
    if args.fg and args.alpha and args.bg:
        sources = load_sources(args.fg, args.alpha, args.bg)
    elif args.data:
        sources = load_source_dir(args.data)
    else:
        raise UsageError("synth needs --data or all of --fg, --alpha and --bg")
    trimap_cfg = TrimapGenConfig.model_validate({**config.trimap.model_dump(), "seed": config.seed})
    synthesize_dataset(sources, args.out, args.per_fg, config.seed, trimap_cfg)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from src.pipeline.training import train

    result = train(_train_config(args), resume=args.resume)
    logger.info(f"Final checkpoint {result.checkpoint}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    from src.pipeline.inference import infer, infer_dataset

    if args.output is None:
        raise UsageError("infer needs --output")
    if args.dataset:
        threads = resolve_threads(bool(args.deterministic))
        infer_dataset(args.checkpoint, args.dataset, args.output, n_jobs=threads)
        return 0
    if not (args.image and args.trimap):
        raise UsageError("infer needs --image and --trimap (or --dataset)")
    infer(args.checkpoint, args.image, args.trimap, args.output, args.comparison, args.gt)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from src.evaluation.evaluator import evaluate_directories

    threads = resolve_threads(bool(args.deterministic))
    report = evaluate_directories(args.pred, args.gt, args.trimap, n_jobs=threads)
    report.write(args.output)
    sys.stdout.write(report.to_table())
    if report.skipped:
        logger.error(f"{len(report.skipped)} samples skipped: {', '.join(report.skipped)}")
        return DataError.exit_code
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    from src.pipeline.ablation import ablate

    outcome = ablate(_train_config(args), robustness=args.robustness)
    sys.stdout.write(outcome.to_text())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("src.main:app", host=args.host, port=args.port, reload=args.reload)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{str(e)}\n")
        return UsageError.exit_code
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except MatteForgeError as e:
        logger.error(str(e))
        return e.exit_code
