"""
Numpy kernels for convolution and pooling, forward and backward.

These work on raw N,C,H,W arrays and know nothing about the tape; the
differentiable wrappers in `tensor.ops` and the LAB binarizer call them.
Convolutions are cross-correlations (no kernel flip).
"""

from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor.shape import Padding
from utils.exceptions import ShapeMismatchError

Pads = Tuple[int, int, int, int]


def conv_geometry(h: int, w: int, k: int, stride: int, padding: Padding) -> Tuple[int, int, Pads]:
    """Output extent and (top, bottom, left, right) pads."""
    if stride < 1:
        raise ShapeMismatchError(f"Stride must be positive, got {stride}")
    ho = padding.output_size(h, k, stride)
    wo = padding.output_size(w, k, stride)
    top, bottom = padding.pads(h, k, stride)
    left, right = padding.pads(w, k, stride)
    return ho, wo, (top, bottom, left, right)


def pad_spatial(x: np.ndarray, pads: Pads, value: float) -> np.ndarray:
    top, bottom, left, right = pads
    if not any(pads):
        return x
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)), constant_values=value)


def extract_windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Ho, Wo, k, k) read-only view of the receptive fields."""
    view = sliding_window_view(xp, (k, k), axis=(2, 3))
    return view[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def fold_windows(cols: np.ndarray, padded_shape, pads: Pads, stride: int) -> np.ndarray:
    """Scatter-add (N, C, Ho, Wo, k, k) window gradients back onto the input."""
    n, c, ho, wo, k, _ = cols.shape
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[..., i, j]
    top, bottom, left, right = pads
    return out[:, :, top : padded_shape[2] - bottom, left : padded_shape[3] - right]


def _check_conv(x: np.ndarray, w: np.ndarray) -> int:
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeMismatchError(f"Kernel must be (C_out, C_in, k, k), got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatchError(f"Input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    return w.shape[2]


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: Padding) -> np.ndarray:
    k = _check_conv(x, w)
    ho, wo, pads = conv_geometry(x.shape[2], x.shape[3], k, stride, padding)
    cols = extract_windows(pad_spatial(x, pads, padding.value), k, stride, ho, wo)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(x: np.ndarray, w: np.ndarray, grad: np.ndarray, stride: int, padding: Padding):
    k = w.shape[2]
    ho, wo, pads = conv_geometry(x.shape[2], x.shape[3], k, stride, padding)
    xp = pad_spatial(x, pads, padding.value)
    cols = extract_windows(xp, k, stride, ho, wo)
    grad_w = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_cols = np.einsum("nohw,ocij->nchwij", grad, w, optimize=True)
    grad_x = fold_windows(grad_cols, xp.shape, pads, stride)
    return grad_x, grad_w


def _check_depthwise(x: np.ndarray, w: np.ndarray, multiplier: int) -> int:
    if multiplier < 1:
        raise ShapeMismatchError(f"Channel multiplier must be positive, got {multiplier}")
    c = x.shape[1]
    if w.ndim != 4 or w.shape[1] != 1 or w.shape[2] != w.shape[3]:
        raise ShapeMismatchError(f"Depthwise kernel must be (M*C, 1, k, k), got {w.shape}")
    if w.shape[0] != multiplier * c:
        raise ShapeMismatchError(
            f"Depthwise kernel has {w.shape[0]} outputs, expected {multiplier} x {c}"
        )
    return w.shape[2]


def depthwise_forward(x: np.ndarray, w: np.ndarray, multiplier: int, stride: int, padding: Padding) -> np.ndarray:
    """Output channel m*C + c reads input channel c."""
    k = _check_depthwise(x, w, multiplier)
    n, c = x.shape[:2]
    ho, wo, pads = conv_geometry(x.shape[2], x.shape[3], k, stride, padding)
    cols = extract_windows(pad_spatial(x, pads, padding.value), k, stride, ho, wo)
    kernels = w.reshape(multiplier, c, k, k)
    out = np.einsum("nchwij,mcij->nmchw", cols, kernels, optimize=True)
    return np.ascontiguousarray(out.reshape(n, multiplier * c, ho, wo))


def depthwise_backward(x: np.ndarray, w: np.ndarray, grad: np.ndarray, multiplier: int, stride: int, padding: Padding):
    k = w.shape[2]
    n, c = x.shape[:2]
    ho, wo, pads = conv_geometry(x.shape[2], x.shape[3], k, stride, padding)
    xp = pad_spatial(x, pads, padding.value)
    cols = extract_windows(xp, k, stride, ho, wo)
    grad5 = grad.reshape(n, multiplier, c, ho, wo)
    kernels = w.reshape(multiplier, c, k, k)
    grad_w = np.einsum("nmchw,nchwij->mcij", grad5, cols, optimize=True).reshape(w.shape)
    grad_cols = np.einsum("nmchw,mcij->nchwij", grad5, kernels, optimize=True)
    grad_x = fold_windows(grad_cols, xp.shape, pads, stride)
    return grad_x, grad_w


def pool_windows(x: np.ndarray) -> np.ndarray:
    """(N, C, H/2, W/2, 4) view of the 2x2 blocks, dropping an odd last row/column."""
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"2x2 pooling needs H, W >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    blocks = x[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2)
    return blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)


def unpool_blocks(blocks: np.ndarray, input_shape) -> np.ndarray:
    """Inverse of pool_windows for gradients; dropped rows/columns get zero."""
    n, c, ho, wo, _ = blocks.shape
    grid = blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    out = np.zeros(input_shape, dtype=blocks.dtype)
    out[:, :, : 2 * ho, : 2 * wo] = grid
    return out
