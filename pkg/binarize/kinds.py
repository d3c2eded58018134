"""
Activation binarizers as interchangeable objects.

Every kind offers `binarize` (packed inference output), `apply`
(differentiable +-1 output with its surrogate backward) and `parameters`.
The model builder, the uniqueness analysis and the benchmark all go
through this interface.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from binarize.lab import LabParams, lab, lab_forward
from binarize.local import check_window, niblack_margin, sauvola_margin
from binarize.sign import sign_ste, sign_ste_forward
from tensor.autodiff import record
from tensor.bits import BitTensor
from tensor.real import RealTensor
from tensor.shape import Padding
from utils.exceptions import ConfigError


def _threshold_ste(x: RealTensor, margin: np.ndarray, relaxed: bool, op: str) -> RealTensor:
    """sign(x - T) with T held constant; clipped STE on the margin."""
    band = np.abs(margin) <= 1.0
    out = np.clip(margin, -1.0, 1.0) if relaxed else np.where(margin > 0, 1.0, -1.0)
    return record(op, (x,), out.astype(x.data.dtype), lambda g: (g * band,))


@dataclass
class SignSTE:
    """Global threshold at zero."""

    kind = "sign"

    @property
    def label(self) -> str:
        return "sign"

    def binarize(self, x: RealTensor) -> BitTensor:
        return sign_ste_forward(x)

    def apply(self, x: RealTensor, relaxed: bool = False) -> RealTensor:
        return sign_ste(x, relaxed=relaxed)

    def parameters(self, prefix: str) -> Dict[str, RealTensor]:
        return {}


@dataclass
class Lab:
    """Learnable activation binarizer; owns its LabParams."""

    params: LabParams
    padding: Padding = field(default_factory=lambda: Padding.same(0.0))

    kind = "lab"

    @property
    def label(self) -> str:
        return "lab"

    def binarize(self, x: RealTensor) -> BitTensor:
        bits, _ = lab_forward(x, self.params, self.padding)
        return bits

    def apply(self, x: RealTensor, relaxed: bool = False) -> RealTensor:
        return lab(x, self.params, self.padding, relaxed=relaxed)

    def parameters(self, prefix: str) -> Dict[str, RealTensor]:
        return self.params.named_tensors(prefix)

    def channel(self, c: int) -> "Lab":
        return Lab(self.params.channel(c), self.padding)


@dataclass
class Niblack:
    """Local threshold mu + k_n * sigma."""

    k_n: float = -0.2
    window: int = 3

    kind = "niblack"

    def __post_init__(self):
        check_window(self.window)

    @property
    def label(self) -> str:
        return f"niblack(k={self.k_n:g})"

    def binarize(self, x: RealTensor) -> BitTensor:
        return BitTensor.from_bool(niblack_margin(x.data, self.k_n, self.window) > 0)

    def apply(self, x: RealTensor, relaxed: bool = False) -> RealTensor:
        return _threshold_ste(x, niblack_margin(x.data, self.k_n, self.window), relaxed, "niblack")

    def parameters(self, prefix: str) -> Dict[str, RealTensor]:
        return {}


@dataclass
class Sauvola:
    """Local threshold mu * (1 + k_s * (sigma / R - 1)); R None means half the map's range."""

    k_s: float = 0.2
    window: int = 3
    R: Optional[float] = None

    kind = "sauvola"

    def __post_init__(self):
        check_window(self.window)
        if self.R is not None and self.R <= 0:
            raise ConfigError(f"Sauvola R must be positive, got {self.R}", key="R")

    @property
    def label(self) -> str:
        return f"sauvola(k={self.k_s:g})"

    def binarize(self, x: RealTensor) -> BitTensor:
        return BitTensor.from_bool(sauvola_margin(x.data, self.k_s, self.window, self.R) > 0)

    def apply(self, x: RealTensor, relaxed: bool = False) -> RealTensor:
        return _threshold_ste(x, sauvola_margin(x.data, self.k_s, self.window, self.R), relaxed, "sauvola")

    def parameters(self, prefix: str) -> Dict[str, RealTensor]:
        return {}


BinarizerKind = SignSTE | Lab | Niblack | Sauvola
