"""
Utilities for saving and loading checkpoints and JSON artifacts
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.config import TrainConfig
from src.engine.checkpoint import OPT_PREFIX, read_archive, write_archive
from src.engine.optim import AdamState
from src.errors import CheckpointError
from src.models.matting_net import MattingNet

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def sidecar_path(checkpoint: PathLike) -> Path:
    return Path(checkpoint).with_suffix(".json")


class ModelLoader:
    """Reads and writes *.mfck checkpoints with their *.json config sidecar"""

    def __init__(self, base_path: PathLike = "."):
        self.base_path = Path(base_path)

    def _resolve(self, path: PathLike) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_path / path

    def save_checkpoint(
        self,
        path: PathLike,
        net: MattingNet,
        config: TrainConfig,
        adam: Optional[AdamState] = None,
        next_step: Optional[int] = None,
    ) -> Path:
        """Write parameters, running statistics and (optionally) Adam state, plus the config sidecar"""
        full_path = self._resolve(path)
        tensors: Dict[str, np.ndarray] = dict(net.store.state_dict())
        if adam is not None:
            tensors[f"{OPT_PREFIX}step"] = np.array([adam.step])
            if next_step is not None:
                tensors[f"{OPT_PREFIX}next_step"] = np.array([next_step])
            for name in net.store:
                if name in adam.m:
                    tensors[f"{OPT_PREFIX}m/{name}"] = adam.m[name]
                    tensors[f"{OPT_PREFIX}v/{name}"] = adam.v[name]
        write_archive(full_path, tensors)
        self.save_json_data(config.model_dump(mode="json"), sidecar_path(full_path))
        return full_path

    def load_checkpoint(self, path: PathLike) -> Tuple[Dict[str, np.ndarray], TrainConfig]:
        """
        Read an archive and its config sidecar

        Raises:
            CheckpointError: archive unreadable, sidecar missing or invalid
        """
        full_path = self._resolve(path)
        tensors = read_archive(full_path)
        raw = self.load_json_data(sidecar_path(full_path))
        if raw is None:
            raise CheckpointError(f"Checkpoint {full_path} has no readable config sidecar {sidecar_path(full_path)}")
        try:
            config = TrainConfig.model_validate(raw)
        except ValueError as e:
            raise CheckpointError(f"Invalid config sidecar for {full_path}: {str(e)}")
        logger.info(f"Loaded checkpoint {full_path} with {len(tensors)} tensors")
        return tensors, config

    def load_model(self, path: PathLike) -> Tuple[MattingNet, TrainConfig]:
        """Rebuild the network described by the sidecar and load its weights"""
        tensors, config = self.load_checkpoint(path)
        net = MattingNet(config.model, seed=config.seed)
        net.store.load_state_dict(tensors)
        return net, config

    @staticmethod
    def restore_optimizer(tensors: Dict[str, np.ndarray]) -> Optional[AdamState]:
        """Adam state stored under opt/, or None for weight-only checkpoints"""
        step_key = f"{OPT_PREFIX}step"
        if step_key not in tensors:
            return None
        state = AdamState(step=int(tensors[step_key].reshape(-1)[0]))
        for key, value in tensors.items():
            for kind in ("m", "v"):
                prefix = f"{OPT_PREFIX}{kind}/"
                if key.startswith(prefix):
                    getattr(state, kind)[key[len(prefix):]] = value.astype(np.float64)
        return state

    def load_json_data(self, data_path: PathLike) -> Optional[Dict[str, Any]]:
        """Load a JSON file; None if it does not exist or does not parse"""
        full_path = self._resolve(data_path)
        if not full_path.exists():
            logger.warning(f"Data file not found: {full_path}")
            return None
        try:
            with open(full_path, "r", encoding="utf-8") as f:
                data = json.load(f)
            logger.info(f"Loaded JSON data from {full_path}")
            return data
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading JSON data {full_path}: {str(e)}")
            return None

    def save_json_data(self, data: Dict[str, Any], data_path: PathLike) -> Path:
        """Save data as indented, key-sorted JSON"""
        full_path = self._resolve(data_path)
        full_path.parent.mkdir(parents=True, exist_ok=True)
        with open(full_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        logger.info(f"Saved JSON data to {full_path}")
        return full_path

    def model_exists(self, path: PathLike) -> bool:
        full_path = self._resolve(path)
        return full_path.exists() and sidecar_path(full_path).exists()
