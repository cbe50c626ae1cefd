"""
Dual-path matting network

alpha = clamp(tanh(sp_logits + tcp_logits), 0, 1); the baseline drops the textural path
and its fusion unit entirely.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from src.config import ModelConfig
from src.engine import ops
from src.engine.tensor import Tensor
from src.errors import DimensionError
from src.imaging.buffers import AlphaMatte, Image
from src.imaging.trimap import BG, FG, Trimap, TrimapPair
from src.models.layers import ParamStore
from src.models.semantic_path import SemanticPath
from src.models.textural_path import ActivationLog, TexturalPath
from src.utils.feature_prep import FeaturePreparator

logger = logging.getLogger(__name__)


@dataclass
class ForwardTrace:
    sp_logits: Tensor
    tcp_logits: Tensor
    shallow: Tensor
    alpha_pred: Tensor
    tcp_activations: ActivationLog = field(default_factory=list)


class MattingNet:
    """
    Semantic path plus optional textural compensate path over one ParamStore

    Parameters are drawn from a generator seeded with `seed`; the semantic path is
    built first so the baseline and the full model share identical SP weights.
    """

    def __init__(self, config: Optional[ModelConfig] = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.store = ParamStore(np.random.default_rng(seed))
        self.sp = SemanticPath(self.store, self.config)
        self.tcp = TexturalPath(self.store, self.config, self.sp.shallow_channels) if self.config.tcp_enabled else None
        self.prep = FeaturePreparator()
        logger.info(
            f"Built matting net ({'dual path' if self.tcp else 'baseline'}) with {self.store.count()} parameters"
        )

    @property
    def params(self) -> Dict[str, Tensor]:
        return self.store.named()

    def forward(
        self, sp_input: Tensor, tcp_input: Tensor, training: bool = False, record: bool = False
    ) -> ForwardTrace:
        """Forward over stride-aligned N×6×H×W inputs"""
        if sp_input.shape != tcp_input.shape:
            raise DimensionError(f"SP input {sp_input.shape} and TCP input {tcp_input.shape} differ")
        sp_logits, shallow = self.sp(sp_input, training)
        activations: ActivationLog = []
        if self.tcp is None:
            tcp_logits = Tensor(np.zeros(sp_logits.shape))
            combined = sp_logits
        else:
            tcp_logits = self.tcp(tcp_input, shallow, training, activations if record else None)
            combined = ops.add(sp_logits, tcp_logits)
        alpha = ops.clamp(ops.tanh(combined), 0.0, 1.0)
        return ForwardTrace(sp_logits, tcp_logits, shallow, alpha, activations)

    def digest(self, prefix: str) -> str:
        """Hash of every parameter whose name starts with prefix"""
        h = hashlib.sha256()
        for name, tensor in self.store.params.items():
            if name.startswith(prefix):
                h.update(name.encode())
                h.update(np.ascontiguousarray(tensor.data).tobytes())
        return h.hexdigest()[:16]


def model_forward(image: Image, pair: TrimapPair, net: MattingNet, training: bool = False, record: bool = False) -> ForwardTrace:
    """
    Run one image through the network at any size

    The input is padded to the encoder stride and every output is cropped back to H×W.
    """
    if image.size != pair.sp.size:
        raise DimensionError(f"image {image.size} and trimaps {pair.sp.size} differ in size")
    prep = net.prep
    sp_batch, record_crop = prep.pad_to_stride(prep.prepare_input(image, pair.sp)[None])
    tcp_batch, _ = prep.pad_to_stride(prep.prepare_input(image, pair.tcp)[None])
    trace = net.forward(Tensor(sp_batch), Tensor(tcp_batch), training=training, record=record)
    return ForwardTrace(
        sp_logits=record_crop.restore(trace.sp_logits),
        tcp_logits=record_crop.restore(trace.tcp_logits),
        shallow=trace.shallow,
        alpha_pred=record_crop.restore(trace.alpha_pred),
        tcp_activations=trace.tcp_activations,
    )


def predict_matte(trace: ForwardTrace, sp_trimap: Trimap) -> AlphaMatte:
    """Known trimap regions override the prediction: FG → 1, BG → 0, U → alpha_pred"""
    pred = trace.alpha_pred.data
    if pred.shape[0] != 1 or pred.shape[1] != 1:
        raise DimensionError(f"predict_matte expects a single 1-channel prediction, got {pred.shape}")
    alpha = pred[0, 0].astype(np.float64)
    if alpha.shape != sp_trimap.size:
        raise DimensionError(f"prediction {alpha.shape} and trimap {sp_trimap.size} differ in size")
    alpha = alpha.copy()
    alpha[sp_trimap.labels == FG] = 1.0
    alpha[sp_trimap.labels == BG] = 0.0
    return AlphaMatte(np.clip(alpha, 0.0, 1.0))
