"""
Dense real-valued rank-4 tensors.

A RealTensor owns an N,C,H,W row-major numpy array (float32 by default,
float64 accepted for gradient verification) and an optional gradient slot
filled by `tensor.autodiff.backward`.
"""

from typing import Optional

import numpy as np

from tensor.shape import Shape4
from utils.exceptions import ShapeMismatchError

_REAL_DTYPES = (np.float32, np.float64)


class RealTensor:
    """
    Rank-4 real tensor with a gradient slot.

    Tensors produced by an op are never written again; parameters are
    replaced wholesale by the optimizer between steps.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data)
        if arr.ndim != 4:
            raise ShapeMismatchError(f"RealTensor must be rank 4, got shape {arr.shape}")
        if arr.dtype.type not in _REAL_DTYPES:
            arr = arr.astype(np.float32)
        if not np.isfinite(arr).all():
            raise ShapeMismatchError("RealTensor values must be finite")
        Shape4.of(arr.shape)
        self.data = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "RealTensor":
        """Wrap an op result without re-validating it."""
        out = cls.__new__(cls)
        out.data = arr
        out.grad = None
        out.requires_grad = requires_grad
        out.name = None
        return out

    @classmethod
    def zeros(cls, shape, dtype=np.float32, requires_grad: bool = False, name: Optional[str] = None) -> "RealTensor":
        return cls(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad, name=name)

    @classmethod
    def scalar(cls, value: float, dtype=np.float32, requires_grad: bool = False, name: Optional[str] = None) -> "RealTensor":
        return cls(np.full((1, 1, 1, 1), value, dtype=dtype), requires_grad=requires_grad, name=name)

    @property
    def shape(self) -> Shape4:
        return Shape4.of(self.data.shape)

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() needs a single element, tensor has {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"RealTensor(shape={tuple(self.data.shape)}, dtype={self.data.dtype}{label})"
