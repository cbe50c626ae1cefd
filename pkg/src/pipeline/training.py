"""
Training loop: on-the-fly composition, trimap generation, Adam with warmup + cosine LR
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed

from src.config import TrainConfig, resolve_threads
from src.engine import AdamState, LrSchedule, adam_step, backward, lr_at, set_precision
from src.engine.checkpoint import OPT_PREFIX
from src.engine.tensor import Tensor
from src.errors import DataError, NumericalError
from src.imaging.buffers import CompositeSample
from src.imaging.dataset import SourceSet, compose_pair, crop_for_training, load_source_dir
from src.imaging.trimap import Trimap, gen_sp_trimap, grow_unknown, perturb_for_tcp, trimap_from_alpha
from src.models.losses import matting_loss
from src.models.matting_net import MattingNet
from src.utils.model_loader import ModelLoader

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
FINAL_NAME = "final.mfck"


@dataclass
class TrainingExample:
    sample: CompositeSample
    sp: Trimap
    tcp: Trimap


@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    last: Dict[str, Any]


def _batch_digest(trimaps: Sequence[Trimap]) -> str:
    h = hashlib.sha256()
    for t in trimaps:
        h.update(t.digest().encode())
    return h.hexdigest()[:16]


class Trainer:
    """
    Single-writer training loop over a SourceSet

    Every example of step s, slot b draws from its own generator seeded by
    (seed, s, b), so batches are identical for any number of worker threads and for
    every ablation variant sharing the seed.
    """

    def __init__(self, config: TrainConfig, sources: Optional[SourceSet] = None, n_jobs: Optional[int] = None):
        self.config = config
        set_precision(config.precision)
        if sources is None:
            if config.data_dir is None:
                raise DataError("Training needs a data_dir with fg/, alpha/ and bg/")
            sources = load_source_dir(config.data_dir)
        if len(sources) == 0 or not sources.backgrounds:
            raise DataError("Training dataset is empty")
        self.sources = sources
        self.n_jobs = n_jobs if n_jobs is not None else resolve_threads(config.deterministic)
        self.net = MattingNet(config.model, seed=config.seed)
        self.adam = AdamState()
        self.schedule = LrSchedule(
            base_lr=config.base_lr,
            warmup_steps=config.warmup_steps,
            total_steps=config.total_steps,
            min_lr=config.min_lr,
        )
        self.output_dir = Path(config.output_dir)
        self.loader = ModelLoader()
        self.start_step = 0
        self.fixed_pool = self._build_fixed_pool(config.overfit_samples) if config.overfit_samples else None

    def resume(self, checkpoint: Union[str, Path]) -> int:
        """Restore weights, running statistics, Adam moments and the next step"""
        tensors, _ = self.loader.load_checkpoint(checkpoint)
        self.net.store.load_state_dict(tensors)
        adam = self.loader.restore_optimizer(tensors)
        if adam is None:
            raise DataError(f"Checkpoint {checkpoint} carries no optimizer state to resume from")
        self.adam = adam
        self.start_step = int(tensors.get(f"{OPT_PREFIX}next_step", np.array([adam.step])).reshape(-1)[0])
        logger.info(f"Resuming from {checkpoint} at step {self.start_step}")
        return self.start_step

    def make_example(self, step: int, slot: int) -> TrainingExample:
        """Compose, trim and crop one training example"""
        if self.fixed_pool:
            return self.fixed_pool[(step * self.config.batch_size + slot) % len(self.fixed_pool)]
        rng = np.random.default_rng([self.config.seed, step, slot])
        fg_index = int(rng.integers(len(self.sources.foregrounds)))
        bg_index = int(rng.integers(len(self.sources.backgrounds)))
        return self._compose_example(fg_index, bg_index, rng)

    def _build_fixed_pool(self, count: int) -> List[TrainingExample]:
        """Example i pairs foreground i and background i (cyclically) and is drawn once"""
        n_fg, n_bg = len(self.sources.foregrounds), len(self.sources.backgrounds)
        pool = [
            self._compose_example(i % n_fg, i % n_bg, np.random.default_rng([self.config.seed, i]))
            for i in range(count)
        ]
        logger.info(f"Training on a fixed pool of {count} examples")
        return pool

    def _compose_example(self, fg_index: int, bg_index: int, rng: np.random.Generator) -> TrainingExample:
        cfg = self.config
        sample = compose_pair(
            self.sources.foregrounds[fg_index],
            self.sources.alphas[fg_index],
            self.sources.backgrounds[bg_index],
        )
        crop = crop_for_training(sample, gen_sp_trimap(sample.alpha, cfg.trimap, rng), cfg.crop_sizes, cfg.crop_out, rng)
        sp = crop.trimap
        if not sp.unknown.any():
            sp = grow_unknown(trimap_from_alpha(crop.sample.alpha), 3)
        if not sp.unknown.any():
            # uniform crop: supervise every pixel
            sp = Trimap(np.ones(sp.size, dtype=np.uint8))
        tcp = perturb_for_tcp(sp, cfg.trimap, rng) if cfg.imrp else sp
        return TrainingExample(crop.sample, sp, tcp)

    def make_batch(self, step: int) -> List[TrainingExample]:
        slots = range(self.config.batch_size)
        if self.n_jobs == 1:
            return [self.make_example(step, b) for b in slots]
        return Parallel(n_jobs=self.n_jobs, prefer="threads")(delayed(self.make_example)(step, b) for b in slots)

    def train_step(self, step: int) -> Dict[str, Any]:
        cfg = self.config
        lr = lr_at(self.schedule, step)
        batch = self.make_batch(step)
        images = [ex.sample.composite for ex in batch]
        sp_input = self.net.prep.prepare_batch(images, [ex.sp for ex in batch])
        tcp_input = self.net.prep.prepare_batch(images, [ex.tcp for ex in batch])
        gt = np.stack([ex.sample.alpha.data for ex in batch])[:, None]
        unknown = np.stack([ex.sp.unknown for ex in batch])[:, None]

        self.net.store.zero_grad()
        trace = self.net.forward(Tensor(sp_input), Tensor(tcp_input), training=True)
        loss, loss_a, loss_bg = matting_loss(gt, trace.alpha_pred, unknown, cfg.loss, with_background=cfg.imrp)
        backward(loss)
        if lr > 0:
            adam_step(self.net.params, self.net.store.grads(), self.adam, lr)

        return {
            "step": step,
            "lr": lr,
            "loss_a": loss_a.item(),
            "loss_bg": loss_bg.item(),
            "loss": loss.item(),
            "pairs": [f"{ex.sample.fg_id}/{ex.sample.bg_id}" for ex in batch],
            "sp_hash": _batch_digest([ex.sp for ex in batch]),
            "tcp_hash": _batch_digest([ex.tcp for ex in batch]),
        }

    def save(self, name: str, next_step: int) -> Path:
        return self.loader.save_checkpoint(self.output_dir / name, self.net, self.config, self.adam, next_step)

    def run(self) -> TrainResult:
        """
        Train from start_step to total_steps, appending one JSON line per step

        Raises:
            NumericalError: a non-finite value appeared; the state at that step is saved
                as abort_step<k>.mfck before the error propagates
        """
        cfg = self.config
        self.output_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.output_dir / LOG_NAME
        mode = "a" if self.start_step > 0 else "w"
        record: Dict[str, Any] = {}
        logger.info(f"Training steps {self.start_step}..{cfg.total_steps - 1} with {self.n_jobs} worker(s)")

        with open(log_path, mode, encoding="utf-8") as log:
            for step in range(self.start_step, cfg.total_steps):
                try:
                    record = self.train_step(step)
                except NumericalError as e:
                    dump = self.save(f"abort_step{step}.mfck", step)
                    logger.error(f"Non-finite value at step {step}: {str(e)}; state saved to {dump}")
                    raise NumericalError(f"Training aborted at step {step}: {str(e)}", step=step)
                log.write(json.dumps(record, sort_keys=True) + "\n")

                if step % cfg.log_every == 0 or step == cfg.total_steps - 1:
                    log.flush()
                    logger.info(
                        f"step {step} lr {record['lr']:.3e} L {record['loss']:.5f} "
                        f"L_a {record['loss_a']:.5f} L_bg {record['loss_bg']:.5f}"
                    )
                if (step + 1) % cfg.checkpoint_every == 0 and step + 1 < cfg.total_steps:
                    self.save(f"step_{step + 1}.mfck", step + 1)

        checkpoint = self.save(FINAL_NAME, cfg.total_steps)
        return TrainResult(checkpoint=checkpoint, log_path=log_path, last=record)


def train(config: TrainConfig, resume: Optional[Union[str, Path]] = None, sources: Optional[SourceSet] = None) -> TrainResult:
    trainer = Trainer(config, sources=sources)
    if resume is not None:
        trainer.resume(resume)
    return trainer.run()
