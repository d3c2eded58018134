"""
Rank-4 shapes and padding modes shared by every kernel.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

from utils.exceptions import ShapeMismatchError

# Largest element count numpy can index on 64-bit hosts
_MAX_ELEMENTS = 2 ** 62


@dataclass(frozen=True)
class Shape4:
    """N, C, H, W extents of a tensor, all strictly positive."""

    n: int
    c: int
    h: int
    w: int

    def __post_init__(self):
        for name in ("n", "c", "h", "w"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ShapeMismatchError(f"Shape4.{name} must be a positive integer, got {value!r}")
        if self.numel > _MAX_ELEMENTS:
            raise ShapeMismatchError(f"Shape4 {self.as_tuple()} exceeds addressable element count")

    @classmethod
    def of(cls, dims: Iterable[int]) -> "Shape4":
        dims = tuple(int(d) for d in dims)
        if len(dims) != 4:
            raise ShapeMismatchError(f"Expected rank-4 shape, got rank {len(dims)}: {dims}")
        return cls(*dims)

    @property
    def numel(self) -> int:
        return self.n * self.c * self.h * self.w

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)

    def __iter__(self):
        return iter(self.as_tuple())


@dataclass(frozen=True)
class Padding:
    """
    Convolution padding mode.

    `valid` never pads. `same` pads so that a stride-1 convolution keeps the
    spatial size, filling with `value`; with stride s the output has
    ceil(H/s) rows and any odd pad row goes to the bottom/right.
    """

    mode: str = "valid"
    value: float = 0.0

    def __post_init__(self):
        if self.mode not in ("valid", "same"):
            raise ShapeMismatchError(f"Unknown padding mode {self.mode!r}")

    @classmethod
    def valid(cls) -> "Padding":
        return cls("valid", 0.0)

    @classmethod
    def same(cls, value: float = 0.0) -> "Padding":
        return cls("same", float(value))

    @classmethod
    def parse(cls, text: str, default_value: float = 0.0) -> "Padding":
        """Parse `valid`, `same` or `same(<value>)`."""
        text = text.strip().lower()
        if text == "valid":
            return cls.valid()
        if text == "same":
            return cls.same(default_value)
        if text.startswith("same(") and text.endswith(")"):
            return cls.same(float(text[5:-1]))
        raise ShapeMismatchError(f"Cannot parse padding mode {text!r}")

    def __str__(self) -> str:
        if self.mode == "valid":
            return "valid"
        return f"same({self.value:g})"

    def output_size(self, size: int, k: int, stride: int) -> int:
        if self.mode == "valid":
            if size < k:
                raise ShapeMismatchError(f"Input extent {size} smaller than kernel {k} under valid padding")
            return (size - k) // stride + 1
        return math.ceil(size / stride)

    def pads(self, size: int, k: int, stride: int) -> Tuple[int, int]:
        """Leading and trailing pad for one spatial axis."""
        if self.mode == "valid":
            return 0, 0
        out = self.output_size(size, k, stride)
        total = max((out - 1) * stride + k - size, 0)
        return total // 2, total - total // 2
