"""
Pydantic models for every report the toolkit emits.

Reports serialize to JSON via `model_dump_json` and to CSV through
`analysis.writers`. Derived quantities (eta, OP totals) are computed
fields so they can never disagree with the counts they come from.
"""

import math
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, computed_field, model_validator


class UniquenessReport(BaseModel):
    """
    Result of enumerating every binary kernel against one binary map.

    n_t kernels are convolved with the map and binarized; n_c is the
    number of distinct binary outputs among them.
    """
    k: int = Field(description="Kernel size")
    c_in: int = Field(description="Channels of the input map")
    height: int = Field(description="Map height")
    width: int = Field(description="Map width")
    padding: str = Field(description="Padding mode of the binary convolution")
    binarizer: str = Field(description="Binarizer applied to each convolution output")
    n_t: int = Field(description="Number of enumerated kernels, 2^(k*k*c_in)")
    n_c: int = Field(description="Distinct binary outputs counted", ge=1)
    log_theoretical_max_N: float = Field(description="ln of (k^2*C)^(H*W), the unreduced map-count bound")
    log_alternative_max_N: float = Field(description="ln of (k^2*C + 1)^(H*W), the count of distinct per-element sums")

    @computed_field
    @property
    def eta(self) -> float:
        return self.n_c / self.n_t

    @model_validator(mode="after")
    def _check_counts(self) -> "UniquenessReport":
        if self.n_c > self.n_t:
            raise ValueError(f"n_c={self.n_c} exceeds n_t={self.n_t}")
        return self


class LayerUniqueness(BaseModel):
    """Mean eta of one network layer over its channels and images."""
    layer: str
    binarizer: str
    mean_eta: float
    min_eta: float
    max_eta: float
    maps: int = Field(description="Channel maps analysed (channels x images)")
    height: int
    width: int


class LayerDissimilarity(BaseModel):
    """Mean channel-pair SSIM and ENDSIM of one layer."""
    layer: str
    stage: str = Field(description="'pre' (real map before binarization) or 'post' (+-1 map)")
    mean_ssim: float = Field(ge=-1.0 - 1e-9, le=1.0 + 1e-9)
    mean_endsim: float = Field(ge=0.0)
    pair_count: int = Field(description="Unordered channel pairs per image")
    image_count: int


class DissimilarityReport(BaseModel):
    """Per-layer dissimilarity of feature-map channels."""
    layers: List[LayerDissimilarity] = Field(default_factory=list)


class DistributionReport(BaseModel):
    """Fraction of +1 values per channel of one layer's binary map."""
    layer: str
    channel_fractions: List[float]
    mean_fraction: float
    image_count: int


class LayerOps(BaseModel):
    """Operation counts of one counted item (a layer or a sub-operation of one)."""
    layer: str
    category: str = Field(description="binary_conv, stem_conv, shortcut_conv, dense, lab_depthwise, lab_bias_add, lab_argmax, prelu_mul, prelu_neg, ...")
    bop: int = Field(default=0, description="Binary multiply-accumulates", ge=0)
    flop: int = Field(default=0, description="Real multiply-accumulates and elementwise ops", ge=0)

    @computed_field
    @property
    def op(self) -> float:
        return self.bop / 64 + self.flop


class OpsBudget(BaseModel):
    """
    BOP/FLOP/OP totals of a model; OP = BOP/64 + FLOP.
    """
    model: str = Field(default="", description="Label of the counted model")
    layers: List[LayerOps] = Field(default_factory=list)

    @computed_field
    @property
    def bop(self) -> int:
        return sum(row.bop for row in self.layers)

    @computed_field
    @property
    def flop(self) -> int:
        return sum(row.flop for row in self.layers)

    @computed_field
    @property
    def op(self) -> float:
        return self.bop / 64 + self.flop

    def by_category(self) -> Dict[str, int]:
        totals: Dict[str, int] = {}
        for row in self.layers:
            totals[row.category] = totals.get(row.category, 0) + row.flop + row.bop
        return totals


class OperatorTiming(BaseModel):
    """Wall-time statistics of one operator at one layer, in microseconds."""
    operator: str
    layer: str
    mean_us: float
    min_us: float
    max_us: float
    median_us: float
    runs: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_order(self) -> "OperatorTiming":
        # tolerate float noise from averaging identical samples
        slack = 1e-9 * max(1.0, abs(self.max_us))
        if not (self.min_us <= self.mean_us + slack and self.mean_us <= self.max_us + slack):
            raise ValueError("Timing must satisfy min <= mean <= max")
        return self


class BenchReport(BaseModel):
    """Per-operator and end-to-end latency of a model on the host CPU."""
    model: str
    input_shape: List[int]
    threads: int
    warmup: int
    runs: int = Field(ge=1)
    operators: List[OperatorTiming]
    end_to_end: OperatorTiming
    other_us: float = Field(description="End-to-end mean not attributed to any operator")

    @computed_field
    @property
    def attributed_fraction(self) -> float:
        total = self.end_to_end.mean_us
        return 1.0 if total <= 0 else min(1.0, sum(op.mean_us for op in self.operators) / total)


class TrainLogRow(BaseModel):
    """One logged training step or epoch summary."""
    epoch: int
    step: int
    loss: float
    lr: Optional[float] = None
    top1: Optional[float] = None
    top5: Optional[float] = None
    betas: Dict[str, float] = Field(default_factory=dict)


class EvalResult(BaseModel):
    """Top-1 / top-5 accuracy of a model on a dataset split."""
    top1: float = Field(ge=0.0, le=1.0)
    top5: float = Field(ge=0.0, le=1.0)
    samples: int


class SweepRow(BaseModel):
    """One trained variant of a sweep (block placement, ablation or binarizer comparison)."""
    variant: str
    lab_stages: List[int] = Field(default_factory=list)
    top1: float
    top5: float
    param_count: int
    lab_param_count: int
    param_bytes: float
    latency_us: float
    flop: int
    bop: int

    @computed_field
    @property
    def op(self) -> float:
        return self.bop / 64 + self.flop


def log_power(base: float, exponent: int) -> float:
    """ln(base ** exponent) without overflow."""
    return exponent * math.log(base)
