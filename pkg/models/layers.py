"""
Building blocks of a Bi-RealNet-style binary network.

Every block runs in one of three modes:

- ``train``: binarizers and weights give exact +-1 values, gradients flow
  through their surrogates, batchnorm uses batch statistics.
- ``relaxed``: as ``train`` but the binarizers output their smooth
  surrogates, so the network is differentiable end to end.
- ``infer``: activations are packed and convolved with XNOR-popcount,
  batchnorm uses running statistics, nothing is recorded.
"""

from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional

import numpy as np

from binarize.kinds import BinarizerKind, Lab
from binarize.sign import sign_ste
from bitconv.binconv import BinConvLayer, binconv
from models.plan import QUICKNET_MULTIPLIER, StemPlan, UnitPlan
from tensor import ops
from tensor.bits import BitTensor
from tensor.real import RealTensor
from tensor.shape import Padding

Mode = Literal["train", "infer", "relaxed"]
MODES = ("train", "infer", "relaxed")


def section(profiler, operator: str, layer: str):
    """Timing context for one operator, or a no-op without a profiler."""
    return profiler.section(operator, layer) if profiler is not None else nullcontext()


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> RealTensor:
    return RealTensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32), requires_grad=True)


@dataclass
class FeatureCapture:
    """Input of one binary layer before (real) and after (bits) binarization."""

    pre: RealTensor
    post: BitTensor


@dataclass
class BatchNorm:
    gamma: RealTensor
    beta: RealTensor
    state: ops.BatchNormState

    @classmethod
    def create(cls, channels: int) -> "BatchNorm":
        return cls(
            RealTensor(np.ones((1, channels, 1, 1), dtype=np.float32), requires_grad=True),
            RealTensor.zeros((1, channels, 1, 1), requires_grad=True),
            ops.BatchNormState.create(channels),
        )

    def __call__(self, x: RealTensor, mode: Mode) -> RealTensor:
        return ops.batchnorm(x, self.gamma, self.beta, self.state, training=mode != "infer")

    def parameters(self, prefix: str) -> Dict[str, RealTensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def buffers(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.running_mean": self.state.running_mean, f"{prefix}.running_var": self.state.running_var}

    def load_buffers(self, prefix: str, tensors: Dict[str, np.ndarray]) -> None:
        self.state.running_mean = tensors[f"{prefix}.running_mean"].astype(np.float32)
        self.state.running_var = tensors[f"{prefix}.running_var"].astype(np.float32)


@dataclass
class Stem:
    """Real-valued initial layers: plain conv (+ max-pool) or the quicknet stem."""

    plan: StemPlan
    conv_weight: RealTensor
    bn: BatchNorm
    dw_weight: Optional[RealTensor] = None
    dw_bn: Optional[BatchNorm] = None

    @classmethod
    def create(cls, plan: StemPlan, rng: np.random.Generator) -> "Stem":
        c_in = plan.in_shape[0]
        c = plan.conv_shape[0]
        k = plan.kernel
        stem = cls(plan, he_normal(rng, (c, c_in, k, k), c_in * k * k), BatchNorm.create(c))
        if plan.depthwise_shape is not None:
            c_out = plan.depthwise_shape[0]
            stem.dw_weight = he_normal(rng, (c_out, 1, 3, 3), 9)
            stem.dw_bn = BatchNorm.create(c_out)
        return stem

    def forward(self, x: RealTensor, mode: Mode, profiler=None) -> RealTensor:
        with section(profiler, "stem", "stem"):
            y = ops.conv2d(x, self.conv_weight, self.plan.stride, Padding.same(0.0))
            y = self.bn(y, mode)
            if self.dw_weight is not None:
                y = ops.relu(y)
                y = ops.depthwise_conv2d(y, self.dw_weight, QUICKNET_MULTIPLIER, 2, Padding.same(0.0))
                y = self.dw_bn(y, mode)
        if self.plan.pool:
            with section(profiler, "pool", "stem"):
                y = ops.maxpool2x2(y)
        return y

    def parameters(self) -> Dict[str, RealTensor]:
        params = {"stem.conv.weight": self.conv_weight, **self.bn.parameters("stem.bn")}
        if self.dw_weight is not None:
            params["stem.depthwise.weight"] = self.dw_weight
            params.update(self.dw_bn.parameters("stem.depthwise_bn"))
        return params

    def batchnorms(self) -> Dict[str, BatchNorm]:
        norms = {"stem.bn": self.bn}
        if self.dw_bn is not None:
            norms["stem.depthwise_bn"] = self.dw_bn
        return norms


@dataclass
class BinaryUnit:
    """
    binarize -> binary 3x3 conv -> batchnorm (-> PReLU), plus a real shortcut.

    The shortcut is the identity, preceded by a 2x2 average pool when the
    layer strides and followed by a 1x1 real conv + batchnorm when the
    channel count changes. With `binarizer` None the conv is real-valued.
    """

    plan: UnitPlan
    weight: RealTensor
    binarizer: Optional[BinarizerKind]
    bn: BatchNorm
    prelu_slope: Optional[RealTensor] = None
    shortcut_weight: Optional[RealTensor] = None
    shortcut_bn: Optional[BatchNorm] = None
    padding: Padding = field(default_factory=lambda: Padding.same(-1.0))
    use_alpha: bool = False
    prelu_after_add: bool = True
    _packed: Optional[BinConvLayer] = field(default=None, repr=False)
    _packed_source: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return self.plan.name

    def alpha(self) -> np.ndarray:
        """Mean |w| per output channel, a constant of the forward pass."""
        return np.abs(self.weight.data).mean(axis=(1, 2, 3)).astype(np.float32)

    def packed(self) -> BinConvLayer:
        """Packed sign(weight), rebuilt whenever the optimizer replaced the weights."""
        if self._packed is None or self._packed_source is not self.weight.data:
            self._packed = BinConvLayer.from_real(self.weight, self.plan.stride, self.padding, self.use_alpha)
            self._packed_source = self.weight.data
        return self._packed

    def _conv(self, x: RealTensor, mode: Mode, profiler, captures, threads: int) -> RealTensor:
        name = self.name
        if self.binarizer is None:
            with section(profiler, "conv", name):
                return ops.conv2d(x, self.weight, self.plan.stride, Padding.same(0.0))
        if mode == "infer":
            with section(profiler, "binarize", name):
                bits = self.binarizer.binarize(x)
            if captures is not None:
                captures[name] = FeatureCapture(x, bits)
            with section(profiler, "binconv", name):
                return binconv(bits, self.packed(), threads)
        relaxed = mode == "relaxed"
        with section(profiler, "binarize", name):
            a = self.binarizer.apply(x, relaxed=relaxed)
        with section(profiler, "binconv", name):
            y = ops.conv2d(a, sign_ste(self.weight, relaxed=relaxed), self.plan.stride, self.padding)
            if self.use_alpha:
                y = ops.mul(y, RealTensor.wrap(self.alpha().reshape(1, -1, 1, 1)))
        return y

    def _shortcut(self, x: RealTensor, mode: Mode) -> RealTensor:
        s = x
        if self.plan.downsample:
            s = ops.avg_pool2x2(s)
        if self.shortcut_weight is not None:
            s = ops.conv2d(s, self.shortcut_weight)
            s = self.shortcut_bn(s, mode)
        return s

    def forward(self, x: RealTensor, mode: Mode, profiler=None, captures=None, threads: int = 1) -> RealTensor:
        name = self.name
        y = self._conv(x, mode, profiler, captures, threads)
        with section(profiler, "batchnorm", name):
            y = self.bn(y, mode)
        with section(profiler, "shortcut", name):
            s = self._shortcut(x, mode)
        if self.prelu_slope is not None and not self.prelu_after_add:
            with section(profiler, "prelu", name):
                y = ops.prelu(y, self.prelu_slope)
        with section(profiler, "add", name):
            out = ops.add(y, s)
        if self.prelu_slope is not None and self.prelu_after_add:
            with section(profiler, "prelu", name):
                out = ops.prelu(out, self.prelu_slope)
        return out

    def parameters(self) -> Dict[str, RealTensor]:
        name = self.name
        params = {f"{name}.conv.weight": self.weight, **self.bn.parameters(f"{name}.bn")}
        if self.prelu_slope is not None:
            params[f"{name}.prelu.slope"] = self.prelu_slope
        if self.shortcut_weight is not None:
            params[f"{name}.shortcut.conv.weight"] = self.shortcut_weight
            params.update(self.shortcut_bn.parameters(f"{name}.shortcut.bn"))
        if self.binarizer is not None:
            params.update(self.binarizer.parameters(f"lab.{name}"))
        return params

    def batchnorms(self) -> Dict[str, BatchNorm]:
        norms = {f"{self.name}.bn": self.bn}
        if self.shortcut_bn is not None:
            norms[f"{self.name}.shortcut.bn"] = self.shortcut_bn
        return norms

    @property
    def lab(self) -> Optional[Lab]:
        return self.binarizer if isinstance(self.binarizer, Lab) else None


@dataclass
class Classifier:
    """Global average pool followed by a real dense layer."""

    weight: RealTensor
    bias: RealTensor

    @classmethod
    def create(cls, features: int, classes: int, rng: np.random.Generator, zero_init: bool = False) -> "Classifier":
        if zero_init:
            weight = RealTensor.zeros((classes, features, 1, 1), requires_grad=True)
        else:
            weight = RealTensor(
                rng.normal(0.0, np.sqrt(1.0 / features), size=(classes, features, 1, 1)).astype(np.float32),
                requires_grad=True,
            )
        return cls(weight, RealTensor.zeros((1, classes, 1, 1), requires_grad=True))

    def forward(self, x: RealTensor, profiler=None) -> RealTensor:
        with section(profiler, "pool", "classifier"):
            pooled = ops.global_avg_pool(x)
        with section(profiler, "dense", "classifier"):
            return ops.dense(pooled, self.weight, self.bias)

    def parameters(self) -> Dict[str, RealTensor]:
        return {"classifier.weight": self.weight, "classifier.bias": self.bias}
