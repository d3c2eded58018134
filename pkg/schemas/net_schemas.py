"""
Pydantic models describing binary network architectures and training runs.

These schemas are the contract between the run config file, the model
builder and the trainer. They validate the structural invariants (stride
values, channel doubling, batch size) before anything is allocated.
"""

from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from binarize.kinds import BinarizerKind, Lab, Niblack, Sauvola, SignSTE
from binarize.lab import LabParams
from config.settings import settings


class BinarizerConfig(BaseModel):
    """
    Declarative choice of activation binarizer for one block.

    Turned into a runtime binarizer by `build`, which also initializes LAB
    parameters for the number of channels it serves.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["sign", "lab", "niblack", "sauvola"] = Field(default="sign", description="Binarizer family")
    k: Optional[float] = Field(default=None, description="Niblack/Sauvola k (defaults -0.2 / 0.2)")
    window: int = Field(default=3, description="Local threshold window (odd, >= 3)")
    R: Optional[float] = Field(default=None, description="Sauvola dynamic range; None = half the map range")
    lab_kernel: int = Field(default=3, description="LAB depthwise kernel size")

    def build(self, channels: int, rng: np.random.Generator) -> BinarizerKind:
        if self.kind == "lab":
            return Lab(LabParams.init(channels, rng, k=self.lab_kernel))
        if self.kind == "niblack":
            return Niblack(-0.2 if self.k is None else self.k, self.window)
        if self.kind == "sauvola":
            return Sauvola(0.2 if self.k is None else self.k, self.window, self.R)
        return SignSTE()

    @property
    def label(self) -> str:
        if self.kind in ("niblack", "sauvola"):
            default = -0.2 if self.kind == "niblack" else 0.2
            return f"{self.kind}(k={default if self.k is None else self.k:g})"
        return self.kind


class BlockSpec(BaseModel):
    """
    One stage of binary layers.

    Every layer in the stage is binarize -> binary conv -> batchnorm
    (-> PReLU) with a real-valued shortcut; the first layer carries the
    stage's stride.
    """
    model_config = ConfigDict(extra="forbid")

    stage: int = Field(description="Stage index, 1-4", ge=1, le=4)
    layers: int = Field(description="Binary layers in this stage", ge=1)
    channels: int = Field(description="Output channels of every layer", gt=0)
    stride: Literal[1, 2] = Field(default=1, description="Stride of the first layer")
    binarizer: BinarizerConfig = Field(default_factory=BinarizerConfig, description="Activation binarizer")
    use_prelu: bool = Field(default=True, description="PReLU after each layer")


class ModelSpec(BaseModel):
    """
    Complete description of a Bi-RealNet-style network.

    Channel counts double from one stage to the next. `full_precision`
    replaces every binary layer by a real convolution and drops the
    binarizers, which is how the full-precision reference is described.
    """
    model_config = ConfigDict(extra="forbid")

    input_shape: Tuple[int, int, int] = Field(description="(C, H, W) of one input image")
    stem: Literal["plain-conv", "quicknet-stem"] = Field(default="plain-conv", description="Initial real layers")
    stem_kernel: int = Field(default=3, description="Plain stem kernel size", ge=1)
    stem_stride: int = Field(default=1, description="Plain stem stride", ge=1, le=2)
    stem_pool: bool = Field(default=False, description="2x2 max-pool after the plain stem")
    blocks: List[BlockSpec] = Field(description="Ordered stages")
    num_classes: int = Field(description="Classifier head width", gt=1)
    full_precision: bool = Field(default=False, description="Real convolutions everywhere")
    prelu_position: Literal["after_add", "before_add"] = Field(default="after_add", description="PReLU relative to the shortcut add")
    binary_padding: float = Field(default=-1.0, description="Pad value of binary 'same' convolutions")
    use_alpha: bool = Field(default=False, description="Per-channel scaling of binary convolutions")
    zero_init_classifier: bool = Field(default=False, description="Start the classifier at zero")

    @model_validator(mode="after")
    def _check_structure(self) -> "ModelSpec":
        if not self.blocks:
            raise ValueError("ModelSpec needs at least one block")
        for prev, block in zip(self.blocks, self.blocks[1:]):
            if block.stage <= prev.stage:
                raise ValueError(f"Stage indices must increase, got {prev.stage} then {block.stage}")
            if block.channels != 2 * prev.channels:
                raise ValueError(
                    f"Stage {block.stage} has {block.channels} channels, expected {2 * prev.channels} (doubling)"
                )
        if self.binary_padding not in (-1.0, 0.0, 1.0):
            raise ValueError(f"binary_padding must be -1, 0 or +1, got {self.binary_padding}")
        if self.stem == "quicknet-stem" and self.blocks[0].channels % 4:
            raise ValueError("quicknet-stem needs first-stage channels divisible by 4")
        return self

    def with_lab_mask(self, mask: Tuple[bool, ...]) -> "ModelSpec":
        """Copy with LAB on the stages where mask is True and sign elsewhere."""
        blocks = [
            block.model_copy(update={"binarizer": BinarizerConfig(kind="lab" if use_lab else "sign")})
            for block, use_lab in zip(self.blocks, mask)
        ]
        return self.model_copy(update={"blocks": blocks})

    def with_binarizer(self, binarizer: BinarizerConfig) -> "ModelSpec":
        blocks = [block.model_copy(update={"binarizer": binarizer}) for block in self.blocks]
        return self.model_copy(update={"blocks": blocks})


class TrainConfig(BaseModel):
    """
    Optimization settings for one training run.
    """
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=64, description="Mini-batch size (batchnorm needs >= 2)", ge=2)
    learning_rate: float = Field(default=1e-3, description="Peak learning rate", gt=0)
    epochs: int = Field(default=1, description="Passes over the training split", ge=1)
    optimizer: Literal["adam", "sgd-momentum"] = Field(default="adam", description="Update rule")
    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, description="Seed for initialization and shuffling")
    lr_schedule: Literal["constant", "cosine"] = Field(default="cosine", description="Learning-rate schedule")
    augment: bool = Field(default=False, description="CIFAR-10 flip + random crop")
    weight_clip: float = Field(default=1.0, description="Latent binary weights are clipped to +-weight_clip", gt=0)
    max_steps: Optional[int] = Field(default=None, description="Stop after this many steps (smoke runs)", ge=1)


def staged_spec(
    input_shape: Tuple[int, int, int],
    num_classes: int,
    stages: int = 4,
    layers_per_stage: int = 2,
    base_channels: int = 32,
    binarizer: Optional[BinarizerConfig] = None,
    lab_stages: Sequence[int] = (),
    use_prelu: bool = True,
    **options,
) -> ModelSpec:
    """
    ResNet-style spec: stage s has base_channels * 2^(s-1) channels, every
    stage after the first halves the resolution.

    Stages listed in lab_stages use LAB; the rest use `binarizer` (sign if None).
    """
    binarizer = binarizer or BinarizerConfig()
    blocks = [
        BlockSpec(
            stage=stage,
            layers=layers_per_stage,
            channels=base_channels * 2 ** (stage - 1),
            stride=1 if stage == 1 else 2,
            binarizer=BinarizerConfig(kind="lab") if stage in lab_stages else binarizer,
            use_prelu=use_prelu,
        )
        for stage in range(1, stages + 1)
    ]
    return ModelSpec(input_shape=input_shape, num_classes=num_classes, blocks=blocks, **options)
