"""
Bit-packed binary tensors.

Bit value b encodes the number 2b - 1, so a set bit is +1 and a clear bit
is -1. Each innermost W row is packed LSB-first into little-endian 64-bit
words and padded to a whole word with zero bits.
"""

import numpy as np

from tensor.real import RealTensor
from tensor.shape import Shape4
from utils.exceptions import ShapeMismatchError

WORD_BITS = 64


def words_per_row(w: int) -> int:
    return -(-w // WORD_BITS)


class BitTensor:
    """Rank-4 tensor of {-1, +1} values stored as packed uint64 words."""

    __slots__ = ("shape", "words")

    def __init__(self, shape: Shape4, words: np.ndarray):
        expected = (shape.n, shape.c, shape.h, words_per_row(shape.w))
        if words.shape != expected:
            raise ShapeMismatchError(f"BitTensor words shape {words.shape} does not match {expected}")
        self.shape = shape
        self.words = np.ascontiguousarray(words, dtype="<u8")

    @classmethod
    def from_bool(cls, bits: np.ndarray) -> "BitTensor":
        """Pack a rank-4 boolean array (True means +1)."""
        if bits.ndim != 4:
            raise ShapeMismatchError(f"Expected rank-4 bit array, got shape {bits.shape}")
        shape = Shape4.of(bits.shape)
        pad = words_per_row(shape.w) * WORD_BITS - shape.w
        if pad:
            bits = np.pad(bits, ((0, 0), (0, 0), (0, 0), (0, pad)), constant_values=False)
        packed = np.packbits(bits.astype(np.uint8), axis=-1, bitorder="little")
        words = np.ascontiguousarray(packed).view("<u8")
        return cls(shape, words)

    def to_bool(self) -> np.ndarray:
        """Unpack to a rank-4 boolean array without the row padding."""
        as_bytes = self.words.view(np.uint8)
        bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
        return bits[..., : self.shape.w].astype(bool)

    def channel(self, n: int, c: int) -> "BitTensor":
        """Single-batch single-channel slice."""
        words = self.words[n : n + 1, c : c + 1]
        return BitTensor(Shape4(1, 1, self.shape.h, self.shape.w), words.copy())

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def tobytes(self) -> bytes:
        """Canonical packed bytes (padding bits are always zero)."""
        return self.words.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.shape, self.tobytes()))

    def __repr__(self) -> str:
        return f"BitTensor(shape={self.shape.as_tuple()})"


def pack(x: RealTensor) -> BitTensor:
    """
    Binarize with sign and pack: bit set iff element > 0.

    Zero maps to -1, so pack is exactly the global sign threshold.
    """
    return BitTensor.from_bool(x.data > 0)


def unpack(b: BitTensor, dtype=np.float32) -> RealTensor:
    """Expand packed bits to a RealTensor of exactly -1.0 / +1.0."""
    values = np.where(b.to_bool(), 1.0, -1.0).astype(dtype)
    return RealTensor.wrap(values)
