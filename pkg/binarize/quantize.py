"""
Low-bit quantization of LAB depthwise kernels.
"""

from typing import Tuple

import numpy as np

from binarize.lab import LabParams
from tensor.real import RealTensor
from utils.exceptions import QuantizationError

SUPPORTED_BITS = (4, 8)


def lab_weight_scales(p: LabParams, bits: int) -> np.ndarray:
    """Per-output-channel symmetric scale max|w| / (2^(bits-1) - 1)."""
    if bits not in SUPPORTED_BITS:
        raise QuantizationError(f"LAB kernels quantize to 4 or 8 bits, got {bits}")
    qmax = 2 ** (bits - 1) - 1
    peak = np.abs(p.dw_weights.data.astype(np.float64)).max(axis=(1, 2, 3))
    return peak / qmax


def quantize_lab_weights(p: LabParams, bits: int) -> LabParams:
    """
    Replace the depthwise kernels by their dequantized INT<bits> values.

    An all-zero channel has scale 0 and stays zero; the largest-magnitude
    weight of each channel is reproduced exactly. Bias and beta are kept.

    Raises:
        QuantizationError: If bits is not 4 or 8.
    """
    qmax = 2 ** (bits - 1) - 1
    scales = lab_weight_scales(p, bits).reshape(-1, 1, 1, 1)
    w = p.dw_weights.data.astype(np.float64)
    safe = np.where(scales > 0, scales, 1.0)
    q = np.clip(np.round(w / safe), -qmax, qmax)
    peak = scales * qmax
    dequant = np.where(np.abs(q) == qmax, np.sign(q) * peak, q * scales)
    dequant = np.where(scales > 0, dequant, 0.0).astype(p.dw_weights.data.dtype)
    return LabParams(
        RealTensor(dequant, requires_grad=p.dw_weights.requires_grad),
        p.dw_bias,
        p.beta,
    )


def quantization_error(p: LabParams, bits: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel (max absolute error, scale) of quantizing p's kernels."""
    quantized = quantize_lab_weights(p, bits)
    err = np.abs(quantized.dw_weights.data.astype(np.float64) - p.dw_weights.data).max(axis=(1, 2, 3))
    return err, lab_weight_scales(p, bits)
