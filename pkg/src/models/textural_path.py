"""
Textural compensate path: full-resolution extraction, feature fusion and refinement

No layer in this path changes the spatial size; recorded activation shapes let tests
check that.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from src.config import ModelConfig
from src.engine import ops
from src.engine.tensor import Tensor
from src.errors import DimensionError
from src.models.layers import BatchNorm2d, Conv2d, ParamStore

logger = logging.getLogger(__name__)

ActivationLog = List[Tuple[str, Tuple[int, ...]]]


class _ConvUnit:
    """conv → ReLU → BN"""

    def __init__(self, store: ParamStore, conv_name: str, bn_name: str, in_ch: int, out_ch: int):
        self.conv = Conv2d(store, conv_name, in_ch, out_ch, 3)
        self.bn = BatchNorm2d(store, bn_name, out_ch)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return self.bn(ops.relu(self.conv(x)), training)


class ResidualUnit:
    def __init__(self, store: ParamStore, name: str, channels: int):
        self.unit1 = _ConvUnit(store, f"{name}/conv1", f"{name}/bn1", channels, channels)
        self.unit2 = _ConvUnit(store, f"{name}/conv2", f"{name}/bn2", channels, channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.add(x, self.unit2(self.unit1(x, training), training))


class FeatureFusionUnit:
    """Resize shallow semantic features to full resolution, project, gate by w_c and add"""

    def __init__(self, store: ParamStore, shallow_channels: int, channels: int):
        self.proj = Conv2d(store, "ffu/proj", shallow_channels, channels, 1)
        self.w_c = store.add("ffu/w_c", np.zeros(1))

    def __call__(self, features: Tensor, shallow: Tensor) -> Tensor:
        h, w = features.shape[2:]
        if shallow.shape[2] > h or shallow.shape[3] > w:
            raise DimensionError(f"Shallow features {shallow.shape} larger than the textural stream {features.shape}")
        resized = ops.resize_nearest(shallow, h, w)
        return ops.add(features, ops.scale(self.proj(resized), self.w_c))


class TexturalPath:
    def __init__(self, store: ParamStore, config: ModelConfig, shallow_channels: int, in_channels: int = 6):
        t = config.tcp_width
        self.extract = _ConvUnit(store, "tcp/extract/conv0", "tcp/extract/bn0", in_channels, t)
        self.blocks = [ResidualUnit(store, f"tcp/extract/block{i}", t) for i in range(2)]
        self.ffu = FeatureFusionUnit(store, shallow_channels, t)
        self.refine = _ConvUnit(store, "tcp/refine/conv0", "tcp/refine/bn0", t, t)
        self.out = Conv2d(store, "tcp/refine/out", t, 1, 3, init_gain=0.1)

    def __call__(
        self, x: Tensor, shallow: Tensor, training: bool, record: Optional[ActivationLog] = None
    ) -> Tensor:
        """
        Args:
            x: N×6×H×W, any H and W
            shallow: semantic-path feature no larger than H×W
            record: if given, receives (layer, shape) for every activation

        Returns:
            logits N×1×H×W
        """

        def log(name: str, value: Tensor) -> Tensor:
            if record is not None:
                record.append((name, value.shape))
            return value

        out = log("extract/conv0", self.extract(x, training))
        for i, block in enumerate(self.blocks):
            out = log(f"extract/block{i}", block(out, training))
        out = log("ffu", self.ffu(out, shallow))
        out = log("refine/conv0", self.refine(out, training))
        return log("refine/out", self.out(out))
