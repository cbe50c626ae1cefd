"""
Tensor with reverse-mode automatic differentiation
"""

import contextlib
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.float32


def set_precision(name: str) -> None:
    """Select the float width used for new tensors ("float32" or "float64")"""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"Unknown precision {name!r}, expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def get_dtype():
    return _default_dtype


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default precision"""
    previous = _default_dtype
    set_precision(name)
    try:
        yield
    finally:
        set_precision("float64" if previous is np.float64 else "float32")


def check_finite(array: np.ndarray, what: str) -> None:
    if not np.isfinite(array).all():
        raise NumericalError(f"Non-finite values produced by {what}")


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    N-dimensional float array with an optional gradient slot

    Tensors produced by differentiable ops remember their parents and a closure mapping
    the output gradient to one gradient per parent.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        _op: str = "leaf",
    ):
        self.data = np.require(np.asarray(data, dtype=_default_dtype), requirements="C")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from src.engine import ops
        return ops.add(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from src.engine import ops
        return ops.sub(self, other) if isinstance(other, Tensor) else ops.add_scalar(self, -other)

    def __mul__(self, other):
        from src.engine import ops
        return ops.mul(self, other) if isinstance(other, Tensor) else ops.mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from src.engine import ops
        return ops.mul_scalar(self, -1.0)


def make_result(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Wrap an op output, recording the graph edge only when a parent needs gradients"""
    check_finite(data, op)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn, _op=op)
    return Tensor(data, _op=op)


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into the .grad of every reachable leaf with requires_grad

    Gradients from repeated uses of a tensor are summed. Leaf gradients accumulate across
    calls until zero_grad() is called.
    """
    if loss.size != 1 or loss.data.ndim != 0:
        raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            check_finite(node.grad, f"gradient of {node.name or 'leaf'}")
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise DimensionError(
                    f"gradient shape {pg.shape} does not match tensor shape {parent.shape} in {node._op}"
                )
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
