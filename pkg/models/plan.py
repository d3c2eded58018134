"""
Shape plan of a ModelSpec.

The plan resolves every layer's input and output shape once, so the model
builder and the operation counter can never disagree about geometry.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from schemas.net_schemas import BinarizerConfig, ModelSpec
from tensor.shape import Padding
from utils.exceptions import ModelBuildError, ShapeMismatchError

CHW = Tuple[int, int, int]

QUICKNET_MULTIPLIER = 4


@dataclass(frozen=True)
class StemPlan:
    """Real-valued initial layers."""

    kind: str
    in_shape: CHW
    conv_shape: CHW
    kernel: int
    stride: int
    # quicknet-stem only: output of the depthwise stage
    depthwise_shape: Optional[CHW] = None
    pool: bool = False
    out_shape: CHW = (0, 0, 0)


@dataclass(frozen=True)
class UnitPlan:
    """One binary layer with its shortcut."""

    name: str
    stage: int
    index: int
    in_shape: CHW
    out_shape: CHW
    stride: int
    binarizer: Optional[BinarizerConfig]
    use_prelu: bool

    @property
    def downsample(self) -> bool:
        return self.stride != 1

    @property
    def project(self) -> bool:
        return self.in_shape[0] != self.out_shape[0]


@dataclass(frozen=True)
class ModelPlan:
    stem: StemPlan
    units: List[UnitPlan]
    num_classes: int

    @property
    def feature_channels(self) -> int:
        return self.units[-1].out_shape[0]


def _conv_out(shape: CHW, channels: int, k: int, stride: int, padding: Padding) -> CHW:
    _, h, w = shape
    try:
        return channels, padding.output_size(h, k, stride), padding.output_size(w, k, stride)
    except ShapeMismatchError as e:
        raise ModelBuildError(f"Cannot apply a {k}x{k}/{stride} convolution to {shape}: {e}") from e


def plan_model(spec: ModelSpec) -> ModelPlan:
    """
    Resolve the shapes of every layer of `spec`.

    Raises:
        ModelBuildError: If some layer cannot be applied to its input shape.
    """
    c0 = spec.blocks[0].channels
    same = Padding.same(0.0)
    if spec.stem == "quicknet-stem":
        mid = c0 // QUICKNET_MULTIPLIER
        conv_shape = _conv_out(spec.input_shape, mid, 3, 2, same)
        dw_shape = _conv_out(conv_shape, c0, 3, 2, same)
        stem = StemPlan("quicknet-stem", spec.input_shape, conv_shape, 3, 2, dw_shape, False, dw_shape)
    else:
        conv_shape = _conv_out(spec.input_shape, c0, spec.stem_kernel, spec.stem_stride, same)
        out_shape = conv_shape
        if spec.stem_pool:
            if conv_shape[1] < 2 or conv_shape[2] < 2:
                raise ModelBuildError(f"Stem output {conv_shape} is too small for 2x2 pooling")
            out_shape = (c0, conv_shape[1] // 2, conv_shape[2] // 2)
        stem = StemPlan("plain-conv", spec.input_shape, conv_shape, spec.stem_kernel, spec.stem_stride, None, spec.stem_pool, out_shape)

    units: List[UnitPlan] = []
    shape = stem.out_shape
    padding = Padding.same(spec.binary_padding)
    for block in spec.blocks:
        for index in range(1, block.layers + 1):
            stride = block.stride if index == 1 else 1
            out_shape = _conv_out(shape, block.channels, 3, stride, padding)
            units.append(UnitPlan(
                name=f"stage{block.stage}.layer{index}",
                stage=block.stage,
                index=index,
                in_shape=shape,
                out_shape=out_shape,
                stride=stride,
                binarizer=None if spec.full_precision else block.binarizer,
                use_prelu=block.use_prelu,
            ))
            shape = out_shape
    return ModelPlan(stem, units, spec.num_classes)
