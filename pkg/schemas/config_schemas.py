"""
Pydantic models for the sections of a run config file.

Each section rejects unknown keys. `NetSection.to_model_spec` turns the
flat `[net]` keys into a full ModelSpec.
"""

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config.settings import settings
from schemas.net_schemas import BinarizerConfig, ModelSpec, TrainConfig, staged_spec
from utils.exceptions import ConfigError

DATASET_SHAPES = {"mnist": (1, 28, 28), "cifar10": (3, 32, 32)}
DATASET_CLASSES = {"mnist": 10, "cifar10": 10}


def _as_list(value):
    if value is None or isinstance(value, list):
        return value
    if isinstance(value, str) and not value.strip():
        return []
    return [value]


class NetSection(BaseModel):
    """`[net]`: architecture of the model to train or count."""
    model_config = ConfigDict(extra="forbid")

    dataset: Literal["mnist", "cifar10"] = Field(description="Dataset the model is shaped for")
    stem: Literal["plain-conv", "quicknet-stem"] = Field(default="plain-conv", description="Initial real layers")
    stages: int = Field(default=4, description="Number of stages", ge=1, le=4)
    layers_per_stage: int = Field(default=2, description="Binary layers per stage", ge=1)
    base_channels: int = Field(default=32, description="Channels of stage 1, doubled per stage", gt=0)
    binarizer: Literal["sign", "lab", "niblack", "sauvola"] = Field(default="sign", description="Binarizer of every stage not in lab_stages")
    lab_stages: List[int] = Field(default_factory=list, description="Stages (1-based) that use LAB regardless of `binarizer`")
    threshold_k: Optional[float] = Field(default=None, description="Niblack/Sauvola k")
    window: int = Field(default=3, description="Niblack/Sauvola window")
    sauvola_r: Optional[float] = Field(default=None, description="Sauvola R; unset = half the map range")
    use_prelu: bool = Field(default=True, description="PReLU after each binary layer")
    prelu_position: Literal["after_add", "before_add"] = Field(default="after_add", description="PReLU relative to the shortcut add")
    use_alpha: bool = Field(default=False, description="Per-channel scaling of binary convolutions")
    full_precision: bool = Field(default=False, description="Real convolutions instead of binary ones")
    zero_init_classifier: bool = Field(default=False, description="Start the classifier at zero")

    @field_validator("lab_stages", mode="before")
    @classmethod
    def _wrap_scalar(cls, value):
        return _as_list(value)

    @field_validator("lab_stages")
    @classmethod
    def _check_stages(cls, stages: List[int]) -> List[int]:
        for stage in stages:
            if not 1 <= stage <= 4:
                raise ValueError(f"lab_stages entries must be 1-4, got {stage}")
        return sorted(set(stages))

    def binarizer_config(self) -> BinarizerConfig:
        return BinarizerConfig(kind=self.binarizer, k=self.threshold_k, window=self.window, R=self.sauvola_r)

    def to_model_spec(self) -> ModelSpec:
        """
        Raises:
            ConfigError: If the keys describe an inconsistent architecture.
        """
        try:
            return self._model_spec()
        except ValidationError as e:
            raise ConfigError(f"Invalid [net] architecture: {e.errors()[0]['msg']}", key="net") from e

    def _model_spec(self) -> ModelSpec:
        return staged_spec(
            input_shape=DATASET_SHAPES[self.dataset],
            num_classes=DATASET_CLASSES[self.dataset],
            stages=self.stages,
            layers_per_stage=self.layers_per_stage,
            base_channels=self.base_channels,
            binarizer=self.binarizer_config(),
            lab_stages=self.lab_stages,
            stem=self.stem,
            use_prelu=self.use_prelu,
            prelu_position=self.prelu_position,
            use_alpha=self.use_alpha,
            full_precision=self.full_precision,
            zero_init_classifier=self.zero_init_classifier,
        )


class TrainSection(TrainConfig):
    """`[train]`: TrainConfig plus data location and subsetting."""
    model_config = ConfigDict(extra="forbid")

    data_dir: Optional[str] = Field(default=None, description="Dataset root; falls back to LABNN_DATA_DIR")
    subset: Optional[int] = Field(default=None, description="Use only the first n training records", ge=1)
    eval_subset: Optional[int] = Field(default=None, description="Use only the first n test records", ge=1)
    log_every: int = Field(default=50, description="Steps between progress log lines", ge=1)
    threads: int = Field(default=1, description="Kernel threads", ge=1)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump(include=set(TrainConfig.model_fields)))


class AnalyzeSection(BaseModel):
    """`[analyze]`: image counts and kernel geometry of the diagnostics."""
    model_config = ConfigDict(extra="forbid")

    uniqueness_images: int = Field(default=20, description="Images averaged for eta", ge=1)
    similarity_images: int = Field(default=10, description="Images averaged for SSIM/ENDSIM", ge=1)
    distribution_images: int = Field(default=1000, description="Images averaged for the +1 fraction", ge=1)
    dump_images: int = Field(default=1, description="Images whose feature maps are dumped as PGM", ge=0)
    kernel_size: int = Field(default=3, description="Kernel size enumerated by the uniqueness analysis", ge=1, le=4)
    padding: str = Field(default="valid", description="Padding of the enumerated convolutions: valid, same, same(-1)")
    max_channels: Optional[int] = Field(default=None, description="Analyse at most this many channels per layer", ge=1)
    threads: int = Field(default=1, description="Uniqueness workers", ge=1)


class BenchSection(BaseModel):
    """`[bench]`: latency measurement settings."""
    model_config = ConfigDict(extra="forbid")

    runs: int = Field(default_factory=lambda: settings.BENCH_RUNS, description="Timed runs", ge=1)
    warmup: int = Field(default_factory=lambda: settings.BENCH_WARMUP, description="Untimed warm-up runs", ge=0)
    threads: int = Field(default=1, description="Binary-conv threads", ge=1)
    batch: int = Field(default=1, description="Batch size of the benchmark input", ge=1)


class RunConfig(BaseModel):
    """A whole config file plus command-line overrides."""
    model_config = ConfigDict(extra="forbid")

    net: NetSection
    train: TrainSection = Field(default_factory=TrainSection)
    analyze: AnalyzeSection = Field(default_factory=AnalyzeSection)
    bench: BenchSection = Field(default_factory=BenchSection)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        images: Optional[int] = None,
    ) -> "RunConfig":
        """Apply --seed, --threads and --images on top of the file values."""
        train = self.train
        analyze = self.analyze
        bench = self.bench
        if seed is not None:
            train = train.model_copy(update={"seed": seed})
        if threads is not None:
            train = train.model_copy(update={"threads": threads})
            analyze = analyze.model_copy(update={"threads": threads})
            bench = bench.model_copy(update={"threads": threads})
        if images is not None:
            analyze = analyze.model_copy(update={
                "uniqueness_images": images,
                "similarity_images": images,
                "distribution_images": images,
            })
        return self.model_copy(update={"train": train, "analyze": analyze, "bench": bench})
