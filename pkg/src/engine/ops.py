"""
Differentiable operations on NCHW tensors

Convolution uses an im2col view (numpy sliding windows) and a single matmul; its input
gradient is scattered back per kernel offset, which keeps the reduction order fixed.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.engine.tensor import Tensor, make_result
from src.errors import DimensionError

logger = logging.getLogger(__name__)


def _require_rank(x: Tensor, rank: int, op: str) -> None:
    if x.data.ndim != rank:
        raise DimensionError(f"{op} expects a rank-{rank} tensor, got shape {x.shape}")


def _require_same_shape(x: Tensor, y: Tensor, op: str) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"{op} needs identical shapes, got {x.shape} and {y.shape}")


# Convolution and resampling

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation

    Args:
        x: input N×C×H×W
        weight: kernels O×C×kH×kW
        bias: O values or None
        stride: step between output samples, >= 1
        padding: zero padding on every side, >= 0

    Returns:
        N×O×Ho×Wo with Ho = floor((H + 2·padding − kH)/stride) + 1
    """
    _require_rank(x, 4, "conv2d")
    _require_rank(weight, 4, "conv2d")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if c != ci:
        raise DimensionError(
            f"conv2d input channels do not match weight: input {x.shape}, weight {weight.shape}"
        )
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv2d bias must have shape ({o},), got {bias.shape}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d kernel {weight.shape} larger than padded input {x.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # N, Ho, Wo, C, kH, kW -> rows of the im2col matrix
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    w_mat = weight.data.reshape(o, c * kh * kw)
    out = cols @ w_mat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def _backward(g: np.ndarray):
        g_mat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (g_mat.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g_mat.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g_mat @ w_mat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(np.ascontiguousarray(out), parents, _backward, "conv2d")


def downsample_conv(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """Stride-2 convolution with 'same' padding; halves even spatial sizes"""
    _require_rank(x, 4, "downsample_conv")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"downsample_conv needs even spatial sizes, got {x.shape}")
    return conv2d(x, weight, bias, stride=2, padding=weight.shape[2] // 2)


def resize_nearest(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Nearest-neighbour resize with the floor mapping src = floor(dst · in / out)"""
    _require_rank(x, 4, "resize_nearest")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"resize_nearest needs positive output size, got {out_h}×{out_w}")
    n, c, h, w = x.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    out = x.data[:, :, rows[:, None], cols[None, :]]

    def _backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), slice(None), rows[:, None], cols[None, :]), g)
        return (gx,)

    return make_result(out, (x,), _backward, "resize_nearest")


def max_pool2(x: Tensor) -> Tensor:
    """2×2 max pooling with stride 2; the gradient is routed to the first maximum of each window"""
    _require_rank(x, 4, "max_pool2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"max_pool2 needs even spatial sizes, got {x.shape}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def _backward(g: np.ndarray):
        gblocks = np.zeros_like(blocks)
        np.put_along_axis(gblocks, arg[..., None], g[..., None], axis=-1)
        gx = gblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return make_result(np.ascontiguousarray(out), (x,), _backward, "max_pool2")


# Elementwise

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sqrt(x: Tensor) -> Tensor:
    if (x.data < 0).any():
        raise DimensionError("sqrt of a negative value")
    out = np.sqrt(x.data)
    return make_result(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    """Clip to [low, high]; the gradient passes where low <= x <= high"""
    inside = (x.data >= low) & (x.data <= high)
    return make_result(np.clip(x.data, low, high), (x,), lambda g: (g * inside,), "clamp")


def add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum of two tensors of identical shape (no broadcasting)"""
    _require_same_shape(x, y, "add")
    return make_result(x.data + y.data, (x, y), lambda g: (g, g), "add")


def sub(x: Tensor, y: Tensor) -> Tensor:
    _require_same_shape(x, y, "sub")
    return make_result(x.data - y.data, (x, y), lambda g: (g, -g), "sub")


def mul(x: Tensor, y: Tensor) -> Tensor:
    _require_same_shape(x, y, "mul")
    return make_result(x.data * y.data, (x, y), lambda g: (g * y.data, g * x.data), "mul")


def add_scalar(x: Tensor, value: float) -> Tensor:
    return make_result(x.data + value, (x,), lambda g: (g,), "add_scalar")


def mul_scalar(x: Tensor, value: float) -> Tensor:
    return make_result(x.data * value, (x,), lambda g: (g * value,), "mul_scalar")


def scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply by a learnable scalar; the scalar receives sum(x · dL/dout)"""
    if s.size != 1:
        raise DimensionError(f"scale expects a single-element scalar, got shape {s.shape}")
    value = s.data.reshape(-1)[0]
    out = x.data * value

    def _backward(g: np.ndarray):
        gs = np.full(s.shape, np.sum(g * x.data), dtype=s.data.dtype) if s.requires_grad else None
        return g * value, gs

    return make_result(out, (x, s), _backward, "scale")


# Structural

def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.data.ndim != len(ref) or any(a != b for k, (a, b) in enumerate(zip(ref, t.shape)) if k != axis):
            raise DimensionError(f"concat along axis {axis} got incompatible shapes {ref} and {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(g: np.ndarray):
        index = [slice(None)] * g.ndim
        grads = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(start, stop)
            grads.append(g[tuple(index)])
        return grads

    return make_result(out, tuple(tensors), _backward, "concat")


def crop(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left height×width window of an NCHW tensor"""
    _require_rank(x, 4, "crop")
    if height > x.shape[2] or width > x.shape[3]:
        raise DimensionError(f"crop to {height}×{width} exceeds tensor {x.shape}")
    out = x.data[:, :, :height, :width]

    def _backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        gx[:, :, :height, :width] = g
        return (gx,)

    return make_result(np.ascontiguousarray(out), (x,), _backward, "crop")


# Reductions

def sum_all(x: Tensor) -> Tensor:
    return make_result(np.sum(x.data), (x,), lambda g: (np.full_like(x.data, g),), "sum")


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of x over the pixels where mask is True; values outside the mask never contribute"""
    if mask.shape != x.shape:
        raise DimensionError(f"masked_mean mask shape {mask.shape} does not match {x.shape}")
    mask = mask.astype(bool)
    count = int(mask.sum())
    if count == 0:
        raise DimensionError("masked_mean over an empty mask")
    out = np.sum(x.data[mask]) / count

    def _backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        gx[mask] = g / count
        return (gx,)

    return make_result(np.asarray(out), (x,), _backward, "masked_mean")


# Normalization

class BatchNormState:
    """Running statistics of one batch-normalization layer"""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """
    Batch normalization over N, H, W per channel

    Train mode normalizes by the biased batch statistics and updates the running
    statistics; eval mode is an affine map through the running statistics.
    """
    _require_rank(x, 4, "batch_norm")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"batch_norm parameters {gamma.shape}/{beta.shape} do not match {c} channels of {x.shape}"
        )
    shape = (1, c, 1, 1)

    if not training:
        inv_std = (1.0 / np.sqrt(state.running_var + state.eps)).astype(x.dtype)
        xhat = (x.data - state.running_mean.astype(x.dtype).reshape(shape)) * inv_std.reshape(shape)
        out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

        def _eval_backward(g: np.ndarray):
            gx = g * (gamma.data * inv_std).reshape(shape)
            return gx, np.sum(g * xhat, axis=(0, 2, 3)), np.sum(g, axis=(0, 2, 3))

        return make_result(out, (x, gamma, beta), _eval_backward, "batch_norm")

    m = n * h * w
    if m < 2:
        raise DimensionError(f"batch_norm in train mode needs N·H·W >= 2, got shape {x.shape}")
    mean = x.data.mean(axis=(0, 2, 3))
    centered = x.data - mean.reshape(shape)
    var = (centered * centered).mean(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = centered * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean
    state.running_var = (1 - state.momentum) * state.running_var + state.momentum * var * m / (m - 1)

    def _train_backward(g: np.ndarray):
        ggamma = np.sum(g * xhat, axis=(0, 2, 3))
        gbeta = np.sum(g, axis=(0, 2, 3))
        gxhat = g * gamma.data.reshape(shape)
        gx = (inv_std.reshape(shape) / m) * (
            m * gxhat
            - np.sum(gxhat, axis=(0, 2, 3)).reshape(shape)
            - xhat * np.sum(gxhat * xhat, axis=(0, 2, 3)).reshape(shape)
        )
        return gx, ggamma, gbeta

    return make_result(out, (x, gamma, beta), _train_backward, "batch_norm")


def as_tensor(array: np.ndarray) -> Tensor:
    """Wrap a constant array; it never receives a gradient"""
    return Tensor(array)
