"""
Learnable activation binarizer (LAB).

Each input channel is correlated with two 3x3 depthwise kernels (channel
multiplier 2). Per pixel, the two logits z0 (copy 0) and z1 (copy 1) are
compared: the output is +1 when z1 > z0, otherwise -1 (ties go to -1, like
sign(0)). The backward pass relaxes the argmax into the two-class
soft-argmax p = sigmoid(beta * (z1 - z0)), lifted to the +-1 codomain as
y = 2p - 1, with a learnable temperature beta.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from tensor import functional as F
from tensor.autodiff import record
from tensor.bits import BitTensor
from tensor.real import RealTensor
from tensor.shape import Padding
from utils.exceptions import ShapeMismatchError

MULTIPLIER = 2


@dataclass
class LabParams:
    """
    Per-layer LAB state.

    Attributes:
        dw_weights (RealTensor): (2C, 1, k, k) depthwise kernels, copy-major.
        dw_bias (RealTensor): (1, 2C, 1, 1) logit biases.
        beta (RealTensor): (1, 1, 1, 1) soft-argmax temperature.
    """

    dw_weights: RealTensor
    dw_bias: RealTensor
    beta: RealTensor

    def __post_init__(self):
        w = self.dw_weights.data.shape
        if w[1] != 1 or w[2] != w[3] or w[0] % MULTIPLIER:
            raise ShapeMismatchError(f"LAB kernels must be (2C, 1, k, k), got {w}")
        if self.dw_bias.data.shape != (1, w[0], 1, 1):
            raise ShapeMismatchError(f"LAB bias must be (1, {w[0]}, 1, 1), got {self.dw_bias.data.shape}")
        if self.beta.data.shape != (1, 1, 1, 1):
            raise ShapeMismatchError("LAB beta must be a (1, 1, 1, 1) scalar")

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator, k: int = 3, beta: float = 1.0) -> "LabParams":
        """He-normal kernels, zero bias, beta = 1.0."""
        std = np.sqrt(2.0 / (k * k))
        weights = rng.normal(0.0, std, size=(MULTIPLIER * channels, 1, k, k)).astype(np.float32)
        return cls(
            RealTensor(weights, requires_grad=True),
            RealTensor.zeros((1, MULTIPLIER * channels, 1, 1), requires_grad=True),
            RealTensor.scalar(beta, requires_grad=True),
        )

    @classmethod
    def identity(cls, channels: int, k: int = 3, dtype=np.float32) -> "LabParams":
        """z0 = 0 and z1 = x: LAB reduces to the global sign threshold."""
        weights = np.zeros((MULTIPLIER * channels, 1, k, k), dtype=dtype)
        weights[channels:, 0, k // 2, k // 2] = 1.0
        return cls(
            RealTensor(weights, requires_grad=True),
            RealTensor.zeros((1, MULTIPLIER * channels, 1, 1), dtype=dtype, requires_grad=True),
            RealTensor.scalar(1.0, dtype=dtype, requires_grad=True),
        )

    @property
    def channels(self) -> int:
        return self.dw_weights.data.shape[0] // MULTIPLIER

    @property
    def kernel_size(self) -> int:
        return self.dw_weights.data.shape[2]

    def parameter_count(self) -> int:
        """2*C*k^2 weights + 2*C biases + 1 beta."""
        c, k = self.channels, self.kernel_size
        return MULTIPLIER * c * k * k + MULTIPLIER * c + 1

    def channel(self, c: int) -> "LabParams":
        """Parameters serving input channel `c` alone (shared beta)."""
        picks = [c, self.channels + c]
        return LabParams(
            RealTensor(self.dw_weights.data[picks]),
            RealTensor(self.dw_bias.data[:, picks]),
            RealTensor(self.beta.data.copy()),
        )

    def named_tensors(self, prefix: str) -> Dict[str, RealTensor]:
        return {
            f"{prefix}.dw_weights": self.dw_weights,
            f"{prefix}.dw_bias": self.dw_bias,
            f"{prefix}.beta": self.beta,
        }


@dataclass
class LabCache:
    """Forward state needed by lab_backward."""

    x: np.ndarray
    logits: np.ndarray
    padding: Padding

    @property
    def z0(self) -> np.ndarray:
        return self.logits[:, : self.logits.shape[1] // MULTIPLIER]

    @property
    def z1(self) -> np.ndarray:
        return self.logits[:, self.logits.shape[1] // MULTIPLIER :]


def _logits(x: np.ndarray, p: LabParams, padding: Padding) -> np.ndarray:
    if x.shape[1] != p.channels:
        raise ShapeMismatchError(f"LAB serves {p.channels} channels, input has {x.shape[1]}")
    out = F.depthwise_forward(x, p.dw_weights.data, MULTIPLIER, 1, padding)
    return out + p.dw_bias.data


def lab_forward(x: RealTensor, p: LabParams, padding: Padding = Padding.same(0.0)) -> Tuple[BitTensor, LabCache]:
    """
    Hard LAB forward: depthwise logits then pairwise argmax.

    Returns:
        Tuple[BitTensor, LabCache]: Binary map of x's shape and the cached logits.

    Raises:
        ShapeMismatchError: If x's channels differ from the parameters'.
    """
    logits = _logits(x.data, p, padding)
    cache = LabCache(x.data, logits, padding)
    return BitTensor.from_bool(cache.z1 > cache.z0), cache


def _soft_class(cache: LabCache, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    diff = cache.z1 - cache.z0
    # sigmoid via tanh stays finite for any beta * diff
    p = 0.5 * (1.0 + np.tanh(0.5 * beta * diff))
    return p, diff


def lab_backward(
    cache: LabCache,
    p: LabParams,
    upstream: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Surrogate gradients of y = 2 * sigmoid(beta * (z1 - z0)) - 1.

    Args:
        cache (LabCache): From lab_forward.
        p (LabParams): Parameters used in the forward pass.
        upstream (np.ndarray): d(loss)/d(output), shape of x.

    Returns:
        Tuple: Gradients w.r.t. x, dw_weights, dw_bias and beta.
    """
    beta = float(p.beta.data.reshape(-1)[0])
    prob, diff = _soft_class(cache, beta)
    slope = 2.0 * prob * (1.0 - prob)
    grad_diff = upstream * beta * slope
    grad_logits = np.concatenate([-grad_diff, grad_diff], axis=1)
    grad_beta = np.array((upstream * slope * diff).sum(), dtype=p.beta.data.dtype).reshape(1, 1, 1, 1)
    grad_bias = grad_logits.sum(axis=(0, 2, 3), keepdims=True)
    grad_x, grad_w = F.depthwise_backward(cache.x, p.dw_weights.data, grad_logits, MULTIPLIER, 1, cache.padding)
    return grad_x, grad_w, grad_bias, grad_beta


def lab_surrogate(x: RealTensor, p: LabParams, padding: Padding = Padding.same(0.0)) -> RealTensor:
    """The smooth output 2 * sigmoid(beta * (z1 - z0)) - 1 that lab_backward differentiates."""
    cache = LabCache(x.data, _logits(x.data, p, padding), padding)
    prob, _ = _soft_class(cache, float(p.beta.data.reshape(-1)[0]))
    return RealTensor.wrap(2.0 * prob - 1.0)


def lab(x: RealTensor, p: LabParams, padding: Padding = Padding.same(0.0), relaxed: bool = False) -> RealTensor:
    """
    Differentiable LAB: hard +-1 forward (or the surrogate when `relaxed`), surrogate backward.
    """
    cache = LabCache(x.data, _logits(x.data, p, padding), padding)
    if relaxed:
        prob, _ = _soft_class(cache, float(p.beta.data.reshape(-1)[0]))
        out = 2.0 * prob - 1.0
    else:
        out = np.where(cache.z1 > cache.z0, 1.0, -1.0)
    out = out.astype(x.data.dtype)
    return record(
        "lab",
        (x, p.dw_weights, p.dw_bias, p.beta),
        out,
        lambda g: lab_backward(cache, p, g),
    )
