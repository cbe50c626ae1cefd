"""
Semantic path: ResNet-style encoder with a mirrored U-Net decoder

The stem output (stride 2) or the first stage output (stride 4) is exposed as the
shallow feature consumed by the fusion unit of the textural path.
"""

import logging
from typing import List, Tuple

from src.config import ModelConfig
from src.engine import ops
from src.engine.tensor import Tensor
from src.errors import DimensionError
from src.models.layers import BasicBlock, Conv2d, ConvBNReLU, ParamStore

logger = logging.getLogger(__name__)

TOTAL_STRIDE = 32
STAGE_STRIDES = (1, 2, 2, 2)


class SkipShortcut:
    """Two 3×3 conv+BN+ReLU layers applied to an encoder feature before concatenation"""

    def __init__(self, store: ParamStore, name: str, channels: int):
        self.convs = [ConvBNReLU(store, f"{name}/conv{i}", channels, channels) for i in range(2)]

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        for conv in self.convs:
            x = conv(x, training)
        return x


class DecoderStage:
    """Upsample ×2, reduce channels, concatenate the shortcut and fuse"""

    def __init__(self, store: ParamStore, name: str, in_ch: int, skip_ch: int, out_ch: int):
        self.up = ConvBNReLU(store, f"{name}/up", in_ch, out_ch)
        self.fuse = ConvBNReLU(store, f"{name}/fuse", out_ch + skip_ch, out_ch)

    def __call__(self, x: Tensor, skip: Tensor, training: bool) -> Tensor:
        x = ops.resize_nearest(x, skip.shape[2], skip.shape[3])
        x = self.up(x, training)
        return self.fuse(ops.concat([x, skip], axis=1), training)


class SemanticPath:
    def __init__(self, store: ParamStore, config: ModelConfig, in_channels: int = 6):
        w = config.base_width
        self.ffu_source = config.ffu_source
        self.stem = ConvBNReLU(store, "sp/stem", in_channels, w, config.stem_kernel, stride=2)

        widths = [w, 2 * w, 4 * w, 8 * w]
        self.stages: List[List[BasicBlock]] = []
        in_ch = w
        for index, (width, stride, count) in enumerate(zip(widths, STAGE_STRIDES, config.encoder_blocks), start=1):
            blocks = []
            for b in range(count):
                blocks.append(BasicBlock(store, f"sp/stage{index}/block{b}", in_ch, width, stride if b == 0 else 1))
                in_ch = width
            self.stages.append(blocks)

        # shortcuts from the stem and stages 1-3, deepest first in the decoder
        skip_widths = [w, w, 2 * w, 4 * w]
        self.skips = [SkipShortcut(store, f"sp/skip{k}", ch) for k, ch in enumerate(skip_widths)]
        self.decoder = []
        current = 8 * w
        for level in (3, 2, 1, 0):
            out_ch = skip_widths[level]
            self.decoder.append(DecoderStage(store, f"sp/dec{level}", current, skip_widths[level], out_ch))
            current = out_ch

        self.head = ConvBNReLU(store, "sp/head/conv", current, w)
        self.out = Conv2d(store, "sp/head/out", w, 1, 3, init_gain=0.1)
        self.shallow_channels = w

    def __call__(self, x: Tensor, training: bool) -> Tuple[Tensor, Tensor]:
        """
        Args:
            x: N×6×H×W with H and W divisible by 32

        Returns:
            (logits N×1×H×W, shallow feature)
        """
        h, w = x.shape[2:]
        if h % TOTAL_STRIDE or w % TOTAL_STRIDE:
            raise DimensionError(f"Semantic path needs sizes divisible by {TOTAL_STRIDE}, got {h}×{w}")

        stem = self.stem(x, training)
        features = [stem]
        out = ops.max_pool2(stem)
        for blocks in self.stages:
            for block in blocks:
                out = block(out, training)
            features.append(out)

        shallow = stem if self.ffu_source == "stem" else features[1]
        for stage, level in zip(self.decoder, (3, 2, 1, 0)):
            skip = self.skips[level](features[level], training)
            out = stage(out, skip, training)

        out = ops.resize_nearest(out, h, w)
        logits = self.out(self.head(out, training))
        return logits, shallow
