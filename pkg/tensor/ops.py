"""
Differentiable tensor operations.

Each op computes its result with numpy and, when recording on a tape,
registers a backward rule returning one gradient per input. The set of ops
is exactly what the binary network builder and the binarizers need.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from tensor import functional as F
from tensor.autodiff import record
from tensor.real import RealTensor
from tensor.shape import Padding
from utils.exceptions import ShapeMismatchError


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: RealTensor, b: RealTensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as e:
        raise ShapeMismatchError(f"Cannot broadcast {a.data.shape} with {b.data.shape}") from e


def add(a: RealTensor, b: RealTensor) -> RealTensor:
    _check_broadcast(a, b)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return record("add", (a, b), a.data + b.data, backward)


def sub(a: RealTensor, b: RealTensor) -> RealTensor:
    _check_broadcast(a, b)

    def backward(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return record("sub", (a, b), a.data - b.data, backward)


def mul(a: RealTensor, b: RealTensor) -> RealTensor:
    _check_broadcast(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return record("mul", (a, b), a.data * b.data, backward)


def scale(x: RealTensor, factor: float) -> RealTensor:
    return record("scale", (x,), x.data * factor, lambda g: (g * factor,))


def sum_all(x: RealTensor) -> RealTensor:
    out = x.data.sum().reshape(1, 1, 1, 1)
    return record("sum", (x,), out, lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def mean_all(x: RealTensor) -> RealTensor:
    count = x.data.size
    out = x.data.mean().reshape(1, 1, 1, 1)
    return record("mean", (x,), out, lambda g: (np.broadcast_to(g / count, x.data.shape).copy(),))


def relu(x: RealTensor) -> RealTensor:
    mask = x.data > 0
    return record("relu", (x,), np.where(mask, x.data, 0.0).astype(x.data.dtype), lambda g: (g * mask,))


def hardtanh(x: RealTensor) -> RealTensor:
    """Clip to [-1, 1]; derivative 1 on |x| <= 1."""
    band = np.abs(x.data) <= 1.0
    return record("hardtanh", (x,), np.clip(x.data, -1.0, 1.0), lambda g: (g * band,))


def conv2d(x: RealTensor, w: RealTensor, stride: int = 1, padding: Padding = Padding.valid()) -> RealTensor:
    """
    Real-valued cross-correlation.

    Args:
        x (RealTensor): Input (N, C_in, H, W).
        w (RealTensor): Kernel (C_out, C_in, k, k).
        stride (int): Spatial stride.
        padding (Padding): `valid` or `same(value)`.

    Returns:
        RealTensor: (N, C_out, H_out, W_out).

    Raises:
        ShapeMismatchError: On channel or kernel layout mismatch.
    """
    out = F.conv2d_forward(x.data, w.data, stride, padding)

    def backward(g):
        return F.conv2d_backward(x.data, w.data, g, stride, padding)

    return record("conv2d", (x, w), out, backward)


def depthwise_conv2d(
    x: RealTensor,
    w: RealTensor,
    multiplier: int,
    stride: int = 1,
    padding: Padding = Padding.same(0.0),
) -> RealTensor:
    """
    Depthwise convolution with a channel multiplier.

    Output channel m*C + c is input channel c correlated with kernel
    w[m*C + c, 0].
    """
    out = F.depthwise_forward(x.data, w.data, multiplier, stride, padding)

    def backward(g):
        return F.depthwise_backward(x.data, w.data, g, multiplier, stride, padding)

    return record("depthwise_conv2d", (x, w), out, backward)


@dataclass
class BatchNormState:
    """Running statistics for inference-mode batchnorm."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, momentum: float = 0.9, eps: float = 1e-5) -> "BatchNormState":
        return cls(
            np.zeros((1, channels, 1, 1), dtype=np.float32),
            np.ones((1, channels, 1, 1), dtype=np.float32),
            momentum,
            eps,
        )


def batchnorm(
    x: RealTensor,
    gamma: RealTensor,
    beta: RealTensor,
    state: BatchNormState,
    training: bool,
) -> RealTensor:
    """
    Per-channel batch normalization with affine gamma/beta.

    In training mode normalizes with the batch statistics and updates the
    running statistics; in inference mode uses the running statistics.

    Raises:
        ShapeMismatchError: If channels disagree, or training with N < 2.
    """
    c = x.data.shape[1]
    if gamma.data.shape != (1, c, 1, 1) or beta.data.shape != (1, c, 1, 1):
        raise ShapeMismatchError(f"Batchnorm affine parameters must be (1, {c}, 1, 1)")
    if not training:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean) * inv_std
        out = (gamma.data * xhat + beta.data).astype(x.data.dtype)

        def backward_infer(g):
            return (
                g * gamma.data * inv_std,
                (g * xhat).sum(axis=(0, 2, 3), keepdims=True),
                g.sum(axis=(0, 2, 3), keepdims=True),
            )

        return record("batchnorm", (x, gamma, beta), out, backward_infer)

    if x.data.shape[0] < 2:
        raise ShapeMismatchError("Training-mode batchnorm needs a batch of at least 2")
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = centered * inv_std
    out = (gamma.data * xhat + beta.data).astype(x.data.dtype)

    unbiased = var * (m / max(m - 1, 1))
    state.running_mean = (state.momentum * state.running_mean + (1 - state.momentum) * mu).astype(np.float32)
    state.running_var = (state.momentum * state.running_var + (1 - state.momentum) * unbiased).astype(np.float32)

    def backward(g):
        g_hat = g * gamma.data
        grad_x = inv_std / m * (
            m * g_hat - g_hat.sum(axis=axes, keepdims=True) - xhat * (g_hat * xhat).sum(axis=axes, keepdims=True)
        )
        return grad_x, (g * xhat).sum(axis=axes, keepdims=True), g.sum(axis=axes, keepdims=True)

    return record("batchnorm", (x, gamma, beta), out, backward)


def prelu(x: RealTensor, slope: RealTensor) -> RealTensor:
    """Per-channel PReLU: x if x > 0 else slope * x."""
    c = x.data.shape[1]
    if slope.data.shape != (1, c, 1, 1):
        raise ShapeMismatchError(f"PReLU slope must be (1, {c}, 1, 1), got {slope.data.shape}")
    positive = x.data > 0
    out = np.where(positive, x.data, slope.data * x.data).astype(x.data.dtype)

    def backward(g):
        grad_x = np.where(positive, g, g * slope.data)
        grad_slope = (np.where(positive, 0.0, g * x.data)).sum(axis=(0, 2, 3), keepdims=True)
        return grad_x, grad_slope

    return record("prelu", (x, slope), out, backward)


def maxpool2x2(x: RealTensor) -> RealTensor:
    blocks = F.pool_windows(x.data)
    winner = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(onehot, winner[..., None], g[..., None], axis=-1)
        return (F.unpool_blocks(onehot, x.data.shape),)

    return record("maxpool2x2", (x,), np.ascontiguousarray(out), backward)


def avg_pool2x2(x: RealTensor) -> RealTensor:
    """
    2x2 average pool in ceil mode: an odd last row or column forms partial
    windows averaged over the elements present, so the output is
    ceil(H/2) x ceil(W/2) like a stride-2 "same" convolution.
    """
    h, w = x.data.shape[2:]
    extra = ((0, 0), (0, 0), (0, h % 2), (0, w % 2))
    padded = np.pad(x.data, extra)
    counts = F.pool_windows(np.pad(np.ones((1, 1, h, w), dtype=x.data.dtype), extra)).sum(axis=-1)
    out = F.pool_windows(padded).sum(axis=-1) / counts

    def backward(g):
        spread = np.repeat((g / counts)[..., None], 4, axis=-1)
        return (F.unpool_blocks(spread, padded.shape)[:, :, :h, :w],)

    return record("avg_pool2x2", (x,), out, backward)


def global_avg_pool(x: RealTensor) -> RealTensor:
    h, w = x.data.shape[2], x.data.shape[3]
    out = x.data.mean(axis=(2, 3), keepdims=True)
    return record("global_avg_pool", (x,), out, lambda g: (np.broadcast_to(g / (h * w), x.data.shape).copy(),))


def dense(x: RealTensor, w: RealTensor, b: Optional[RealTensor] = None) -> RealTensor:
    """
    Fully connected layer on the flattened (C, H, W) features.

    Args:
        x (RealTensor): (N, C, H, W) input, flattened to (N, D).
        w (RealTensor): (K, D, 1, 1) weights.
        b (RealTensor, optional): (1, K, 1, 1) bias.

    Returns:
        RealTensor: (N, K, 1, 1).
    """
    n = x.data.shape[0]
    flat = x.data.reshape(n, -1)
    k, d = w.data.shape[0], w.data.shape[1]
    if flat.shape[1] != d or w.data.shape[2:] != (1, 1):
        raise ShapeMismatchError(f"Dense weights {w.data.shape} do not match {flat.shape[1]} features")
    weights = w.data.reshape(k, d)
    out = flat @ weights.T
    inputs = (x, w)
    if b is not None:
        if b.data.shape != (1, k, 1, 1):
            raise ShapeMismatchError(f"Dense bias must be (1, {k}, 1, 1), got {b.data.shape}")
        out = out + b.data.reshape(1, k)
        inputs = (x, w, b)

    def backward(g):
        g2 = g.reshape(n, k)
        grads = ((g2 @ weights).reshape(x.data.shape), (g2.T @ flat).reshape(w.data.shape))
        if b is not None:
            grads = grads + (g2.sum(axis=0).reshape(1, k, 1, 1),)
        return grads

    return record("dense", inputs, out.reshape(n, k, 1, 1), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax over the class axis of (N, K, 1, 1) logits, as (N, K)."""
    z = logits.reshape(logits.shape[0], -1)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: RealTensor, labels: np.ndarray) -> RealTensor:
    """
    Mean softmax cross-entropy over the batch.

    Args:
        logits (RealTensor): (N, K, 1, 1) class scores.
        labels (np.ndarray): (N,) integer class indices.

    Returns:
        RealTensor: Scalar loss (1, 1, 1, 1).
    """
    n, k = logits.data.shape[0], logits.data.shape[1]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ShapeMismatchError(f"Labels must be {n} indices in [0, {k})")
    z = logits.data.reshape(n, k)
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    probs = np.exp(log_probs)

    def backward(g):
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return ((grad * (g.reshape(()) / n)).reshape(logits.data.shape),)

    return record("softmax_cross_entropy", (logits,), np.full((1, 1, 1, 1), loss, dtype=logits.data.dtype), backward)
