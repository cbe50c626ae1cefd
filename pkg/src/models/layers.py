"""
Parameter store and the convolution building blocks shared by both paths
"""

import logging
from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from src.engine import ops
from src.engine.ops import BatchNormState
from src.engine.tensor import Tensor
from src.errors import CheckpointError, DimensionError

logger = logging.getLogger(__name__)


class ParamStore:
    """
    Uniquely named learnable tensors plus batch-norm running statistics

    Names follow "<path>/<unit>/<layer>/<kind>", e.g. "sp/stage1/block0/conv1/w".
    Running statistics are exported as "<bn>/running_mean" and "<bn>/running_var".
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.norms: "OrderedDict[str, BatchNormState]" = OrderedDict()

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"Duplicate parameter name {name}")
        tensor = Tensor(data, requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def add_norm(self, name: str, channels: int) -> BatchNormState:
        if name in self.norms:
            raise ValueError(f"Duplicate batch-norm name {name}")
        state = BatchNormState(channels)
        self.norms[name] = state
        return state

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def named(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: t.grad for name, t in self.params.items() if t.grad is not None}

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = OrderedDict((name, t.data) for name, t in self.params.items())
        for name, norm in self.norms.items():
            state[f"{name}/running_mean"] = norm.running_mean
            state[f"{name}/running_var"] = norm.running_var
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy matching arrays in; every parameter and running statistic must be present"""
        for name, tensor in self.params.items():
            if name not in state:
                raise CheckpointError(f"Checkpoint is missing parameter {name}")
            if state[name].shape != tensor.shape:
                raise CheckpointError(f"Parameter {name} has shape {state[name].shape}, model expects {tensor.shape}")
            tensor.data = np.asarray(state[name], dtype=tensor.dtype).copy()
        for name, norm in self.norms.items():
            for kind in ("running_mean", "running_var"):
                key = f"{name}/{kind}"
                if key not in state:
                    raise CheckpointError(f"Checkpoint is missing running statistic {key}")
                setattr(norm, kind, np.asarray(state[key], dtype=np.float64).copy())

    def count(self) -> int:
        return int(sum(t.size for t in self.params.values()))


class Conv2d:
    """k×k convolution with He-normal init and 'same' padding"""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        in_ch: int,
        out_ch: int,
        kernel: int = 3,
        stride: int = 1,
        zero_init: bool = False,
        init_gain: float = 1.0,
    ):
        fan_in = in_ch * kernel * kernel
        if zero_init:
            weight = np.zeros((out_ch, in_ch, kernel, kernel))
        else:
            weight = store.rng.normal(0.0, init_gain * np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, kernel, kernel))
        self.weight = store.add(f"{name}/w", weight)
        self.bias = store.add(f"{name}/b", np.zeros(out_ch))
        self.stride = stride
        self.padding = kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        if self.stride == 2:
            return ops.downsample_conv(x, self.weight, self.bias)
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm2d:
    def __init__(self, store: ParamStore, name: str, channels: int):
        self.gamma = store.add(f"{name}/gamma", np.ones(channels))
        self.beta = store.add(f"{name}/beta", np.zeros(channels))
        self.state = store.add_norm(name, channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.state, training)


class ConvBNReLU:
    """conv → BN → ReLU (semantic path ordering)"""

    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1):
        self.conv = Conv2d(store, f"{name}/conv", in_ch, out_ch, kernel, stride)
        self.bn = BatchNorm2d(store, f"{name}/bn", out_ch)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.relu(self.bn(self.conv(x), training))


class BasicBlock:
    """ResNet basic block: two 3×3 conv+BN with an identity or 1×1 projection shortcut"""

    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int, stride: int = 1):
        if stride not in (1, 2):
            raise DimensionError(f"BasicBlock stride must be 1 or 2, got {stride}")
        self.conv1 = Conv2d(store, f"{name}/conv1", in_ch, out_ch, 3, stride)
        self.bn1 = BatchNorm2d(store, f"{name}/bn1", out_ch)
        self.conv2 = Conv2d(store, f"{name}/conv2", out_ch, out_ch, 3)
        self.bn2 = BatchNorm2d(store, f"{name}/bn2", out_ch)
        self.shortcut: Optional[Tuple[Conv2d, BatchNorm2d]] = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = (
                Conv2d(store, f"{name}/shortcut/conv", in_ch, out_ch, 1, stride),
                BatchNorm2d(store, f"{name}/shortcut/bn", out_ch),
            )

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        out = ops.relu(self.bn1(self.conv1(x), training))
        out = self.bn2(self.conv2(out), training)
        identity = x
        if self.shortcut is not None:
            conv, bn = self.shortcut
            identity = bn(conv(x), training)
        return ops.relu(ops.add(out, identity))
