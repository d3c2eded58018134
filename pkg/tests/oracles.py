"""
Independent reference implementations the tests compare against.

Everything here is written with plain loops and no shared code with the
package, so a bug cannot hide in both sides.
"""

import itertools
import math
from typing import Callable, Tuple

import numpy as np


def same_pads(size: int, k: int, stride: int) -> Tuple[int, int, int]:
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def naive_conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: str = "valid", value: float = 0.0) -> np.ndarray:
    """Cross-correlation by nested loops over (n, o, i, j)."""
    n, c, h, wd = x.shape
    o, c_w, k, _ = w.shape
    assert c == c_w
    if pad == "valid":
        ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
        top = left = 0
        xp = x
    else:
        ho, top, bottom = same_pads(h, k, stride)
        wo, left, right = same_pads(wd, k, stride)
        xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)), constant_values=value)
    out = np.zeros((n, o, ho, wo), dtype=np.float64)
    for b in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[b, oc, i, j] = float((patch * w[oc]).sum())
    return out


def naive_depthwise(x: np.ndarray, w: np.ndarray, multiplier: int, pad_value: float = 0.0) -> np.ndarray:
    """Stride-1 'same' depthwise conv; output channel m*C + c reads input channel c."""
    n, c, h, wd = x.shape
    k = w.shape[2]
    out = np.zeros((n, multiplier * c, h, wd))
    for m in range(multiplier):
        for ch in range(c):
            kernel = w[m * c + ch:m * c + ch + 1]
            out[:, m * c + ch:m * c + ch + 1] = naive_conv2d(x[:, ch:ch + 1], kernel, 1, "same", pad_value)
    return out


def numeric_gradient(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of f with respect to every element of arr (perturbed in place)."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + eps
        plus = f()
        flat[idx] = original - eps
        minus = f()
        flat[idx] = original
        grad.reshape(-1)[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def brute_force_uniqueness(a: np.ndarray, k: int, pad: str = "valid", value: float = -1.0) -> int:
    """
    Distinct sign outputs over every +-1 k x k kernel applied to the +-1 map a (H, W).
    """
    x = a.reshape(1, 1, *a.shape).astype(np.float64)
    outputs = set()
    for taps in itertools.product((-1.0, 1.0), repeat=k * k):
        w = np.array(taps).reshape(1, 1, k, k)
        y = naive_conv2d(x, w, 1, pad, value)
        outputs.add(tuple((y > 0).reshape(-1)))
    return len(outputs)
