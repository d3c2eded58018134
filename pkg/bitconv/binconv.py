"""
Bit-packed binary convolution.

Receptive fields of the packed input are re-packed along the fan-in axis
(C_in * k * k) into 64-bit words, XNORed against the packed kernel rows
and popcounted: a dot product of +-1 vectors of length F with m matching
positions equals 2m - F. The result is integer-exact and therefore equal
to a real convolution of the unpacked operands.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from tensor.bits import WORD_BITS, BitTensor, pack
from tensor.functional import conv_geometry, extract_windows
from tensor.real import RealTensor
from tensor.shape import Padding, Shape4
from utils.exceptions import ShapeMismatchError

# Upper bound on the (N, Ho, Wo, chunk, words) XNOR buffer, in words
_CHUNK_WORDS = 1 << 22


@dataclass
class BinConvLayer:
    """
    Packed binary convolution weights.

    Attributes:
        weights (BitTensor): Packed kernel of shape (C_out, C_in, k, k).
        alpha (np.ndarray, optional): Positive per-output-channel scale.
        stride (int): Spatial stride.
        padding (Padding): `valid` or `same(v)` with v in {-1, 0, +1}; a
            zero pad contributes nothing to the dot product.
    """

    weights: BitTensor
    alpha: Optional[np.ndarray] = None
    stride: int = 1
    padding: Padding = Padding.same(-1.0)

    def __post_init__(self):
        if self.weights.shape.h != self.weights.shape.w:
            raise ShapeMismatchError(f"Binary kernel must be square, got {self.weights.shape.as_tuple()}")
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float32).reshape(-1)
            if self.alpha.shape != (self.weights.shape.n,):
                raise ShapeMismatchError(f"alpha must have {self.weights.shape.n} entries")
            if not (self.alpha > 0).all():
                raise ShapeMismatchError("alpha must be strictly positive")
        if self.padding.mode == "same" and self.padding.value not in (-1.0, 0.0, 1.0):
            raise ShapeMismatchError(f"Binary padding value must be -1, 0 or +1, got {self.padding.value}")

    @classmethod
    def from_real(
        cls,
        w: RealTensor,
        stride: int = 1,
        padding: Padding = Padding.same(-1.0),
        use_alpha: bool = False,
    ) -> "BinConvLayer":
        """Binarize latent real weights with sign; alpha is the mean |w| per output channel."""
        alpha = None
        if use_alpha:
            alpha = np.abs(w.data).mean(axis=(1, 2, 3))
            alpha = np.where(alpha > 0, alpha, np.finfo(np.float32).tiny)
        return cls(pack(w), alpha, stride, padding)

    @property
    def out_channels(self) -> int:
        return self.weights.shape.n

    @property
    def in_channels(self) -> int:
        return self.weights.shape.c

    @property
    def kernel_size(self) -> int:
        return self.weights.shape.h

    def output_shape(self, input_shape: Shape4) -> Shape4:
        ho, wo, _ = conv_geometry(input_shape.h, input_shape.w, self.kernel_size, self.stride, self.padding)
        return Shape4(input_shape.n, self.out_channels, ho, wo)


def _pack_fan_in(bits: np.ndarray) -> np.ndarray:
    """Pack the last axis of a boolean array into little-endian uint64 words."""
    fan_in = bits.shape[-1]
    pad = -fan_in % WORD_BITS
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8")


def binconv(a: BitTensor, layer: BinConvLayer, threads: int = 1) -> RealTensor:
    """
    XNOR-popcount convolution of packed activations with packed weights.

    Args:
        a (BitTensor): Packed activations (N, C_in, H, W).
        layer (BinConvLayer): Packed weights and geometry.
        threads (int): Output-channel chunks processed concurrently.

    Returns:
        RealTensor: (N, C_out, H_out, W_out) float32 sums, scaled by alpha if set.

    Raises:
        ShapeMismatchError: On channel mismatch or a kernel larger than a valid input.
    """
    if a.shape.c != layer.in_channels:
        raise ShapeMismatchError(f"Input has {a.shape.c} channels, binary kernel expects {layer.in_channels}")
    k, stride, padding = layer.kernel_size, layer.stride, layer.padding
    ho, wo, pads = conv_geometry(a.shape.h, a.shape.w, k, stride, padding)
    top, bottom, left, right = pads
    spatial = ((0, 0), (0, 0), (top, bottom), (left, right))

    bits = np.pad(a.to_bool(), spatial, constant_values=padding.value > 0)
    valid = np.pad(np.ones(a.shape.as_tuple(), dtype=bool), spatial, constant_values=padding.value != 0)

    def fan_in_words(arr: np.ndarray) -> np.ndarray:
        cols = extract_windows(arr, k, stride, ho, wo).transpose(0, 2, 3, 1, 4, 5)
        return _pack_fan_in(cols.reshape(a.shape.n, ho, wo, -1))

    act_words = fan_in_words(bits)
    valid_words = fan_in_words(valid)
    field = np.bitwise_count(valid_words).sum(axis=-1, dtype=np.int64)

    kernel_bits = layer.weights.to_bool().reshape(layer.out_channels, -1)
    kernel_words = _pack_fan_in(kernel_bits)

    n_words = act_words.shape[-1]
    chunk = max(1, _CHUNK_WORDS // max(1, a.shape.n * ho * wo * n_words))
    out = np.empty((a.shape.n, ho, wo, layer.out_channels), dtype=np.int64)

    def run(start: int) -> None:
        stop = min(start + chunk, layer.out_channels)
        xnor = ~(act_words[:, :, :, None, :] ^ kernel_words[None, None, None, start:stop, :])
        xnor &= valid_words[:, :, :, None, :]
        matches = np.bitwise_count(xnor).sum(axis=-1, dtype=np.int64)
        out[..., start:stop] = 2 * matches - field[..., None]

    starts = range(0, layer.out_channels, chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    else:
        for start in starts:
            run(start)

    result = out.transpose(0, 3, 1, 2).astype(np.float32)
    if layer.alpha is not None:
        result *= layer.alpha.reshape(1, -1, 1, 1)
    return RealTensor.wrap(np.ascontiguousarray(result))


def count_bops(layer: "BinConvLayer | ConvGeometry", input_shape: Shape4) -> int:
    """
    Binary multiply-accumulates: output elements x k*k*C_in.

    One MAC counts as one BOP. Only shapes matter, never the packing.
    """
    out = layer.output_shape(input_shape)
    return out.numel * layer.kernel_size * layer.kernel_size * layer.in_channels


@dataclass(frozen=True)
class ConvGeometry:
    """Shape-only description of a convolution, for counting without weights."""

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: Padding = Padding.same(-1.0)

    def output_shape(self, input_shape: Shape4) -> Shape4:
        ho, wo, _ = conv_geometry(input_shape.h, input_shape.w, self.kernel_size, self.stride, self.padding)
        return Shape4(input_shape.n, self.out_channels, ho, wo)
