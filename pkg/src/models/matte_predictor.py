"""
Alpha matte prediction from a trained checkpoint - requires a checkpoint file
"""

import logging
import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv

from src.config import TrainConfig
from src.errors import CheckpointError, DimensionError, MatteForgeError
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.trimap import Trimap, TrimapPair
from src.models.matting_net import MattingNet, model_forward, predict_matte
from src.utils.model_loader import ModelLoader

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_CHECKPOINT = "runs/default/final.mfck"


class MattePredictor:
    """
    Predicts alpha mattes for (image, trimap) pairs - requires a trained checkpoint

    The user trimap feeds both paths; batch-norm layers run on their running statistics.
    """

    def __init__(self, checkpoint: Optional[Union[str, Path]] = None):
        self.checkpoint = Path(checkpoint or os.getenv("MATTEFORGE_CHECKPOINT", DEFAULT_CHECKPOINT))
        self.model_loader = ModelLoader()
        self.net: Optional[MattingNet] = None
        self.config: Optional[TrainConfig] = None

        # Load and validate checkpoint
        self._load_model()

    def _load_model(self):
        """Load the checkpoint and its sidecar - required, no fallback"""
        if not self.model_loader.model_exists(self.checkpoint):
            raise CheckpointError(
                f"Checkpoint not found. Please ensure {self.checkpoint} and its .json sidecar exist"
            )
        self.net, self.config = self.model_loader.load_model(self.checkpoint)
        logger.info(f"Successfully loaded matting model from {self.checkpoint}")

    def predict(self, image: Image, trimap: Trimap) -> AlphaMatte:
        """
        Predict the matte of one image

        Args:
            image: RGB input
            trimap: user trimap of the same size

        Returns:
            AlphaMatte with FG/BG regions taken from the trimap
        """
        if not self.net:
            raise CheckpointError("Matting model not loaded")
        if image.size != trimap.size:
            raise DimensionError(f"Image is {image.size} but trimap is {trimap.size}")

        try:
            trace = model_forward(image, TrimapPair.shared(trimap), self.net, training=False)
            return predict_matte(trace, trimap)
        except MatteForgeError:
            raise
        except Exception as e:
            logger.error(f"Error in matte prediction: {str(e)}")
            raise RuntimeError(f"Matte prediction failed: {str(e)}")

    def is_ready(self) -> bool:
        """Check if the predictor is ready to use"""
        return self.net is not None
