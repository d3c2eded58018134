"""
Global sign binarization with a clipped straight-through estimator.
"""

import numpy as np

from tensor.autodiff import record
from tensor.bits import BitTensor, pack
from tensor.real import RealTensor


def sign_ste_forward(x: RealTensor) -> BitTensor:
    """+1 where x > 0, -1 elsewhere (zero maps to -1)."""
    return pack(x)


def sign_ste_backward(x: RealTensor, upstream: np.ndarray) -> np.ndarray:
    """Pass the upstream gradient where |x| <= 1, zero outside the band."""
    return upstream * (np.abs(x.data) <= 1.0)


def sign_values(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, -1.0).astype(x.dtype)


def sign_ste(x: RealTensor, relaxed: bool = False) -> RealTensor:
    """
    Differentiable sign.

    Forward gives exactly +-1 (or the hardtanh surrogate when `relaxed`),
    backward is the clipped STE in both cases.
    """
    out = np.clip(x.data, -1.0, 1.0) if relaxed else sign_values(x.data)
    return record("sign_ste", (x,), out, lambda g: (sign_ste_backward(x, g),))
