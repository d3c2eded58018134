"""
Model construction from a ModelSpec, and the preset specs.

This module turns a validated ModelSpec into a Model with freshly
initialized parameters. Initialization draws from one seeded generator in
build order, so a (spec, seed) pair always yields the same parameters.
"""

from itertools import product
from typing import List, Optional, Tuple

import numpy as np

from models.layers import BatchNorm, BinaryUnit, Classifier, Stem, he_normal
from models.model import Model
from models.plan import plan_model
from schemas.config_schemas import DATASET_CLASSES, DATASET_SHAPES
from schemas.net_schemas import BinarizerConfig, ModelSpec, staged_spec
from tensor.real import RealTensor
from tensor.shape import Padding
from utils.exceptions import LabnnException, ModelBuildError
from utils.logger import get_logger

logger = get_logger(__name__)

PRELU_INIT = 0.25


def build(spec: ModelSpec, seed: int = 0) -> Model:
    """
    Build and initialize a model.

    Args:
        spec (ModelSpec): Validated architecture.
        seed (int): Seed of the initialization generator.

    Returns:
        Model: Stem, one BinaryUnit per binary layer and the classifier.

    Raises:
        ModelBuildError: If the spec's shapes are inconsistent.
    """
    try:
        rng = np.random.default_rng(seed)
        plan = plan_model(spec)
        stem = Stem.create(plan.stem, rng)
        units = []
        for unit_plan in plan.units:
            c_in, c_out = unit_plan.in_shape[0], unit_plan.out_shape[0]
            unit = BinaryUnit(
                plan=unit_plan,
                weight=he_normal(rng, (c_out, c_in, 3, 3), 9 * c_in),
                binarizer=None if unit_plan.binarizer is None else unit_plan.binarizer.build(c_in, rng),
                bn=BatchNorm.create(c_out),
                padding=Padding.same(spec.binary_padding),
                use_alpha=spec.use_alpha,
                prelu_after_add=spec.prelu_position == "after_add",
            )
            if unit_plan.use_prelu:
                unit.prelu_slope = RealTensor(np.full((1, c_out, 1, 1), PRELU_INIT, dtype=np.float32), requires_grad=True)
            if unit_plan.project:
                unit.shortcut_weight = he_normal(rng, (c_out, c_in, 1, 1), c_in)
                unit.shortcut_bn = BatchNorm.create(c_out)
            units.append(unit)
        classifier = Classifier.create(plan.feature_channels, spec.num_classes, rng, spec.zero_init_classifier)
    except ModelBuildError:
        raise
    except LabnnException as e:
        logger.error(f"✗ Failed to build model: {e}")
        raise ModelBuildError(f"Model build failed: {e}") from e

    model = Model(spec, plan, stem, units, classifier)
    logger.debug(
        f"Built model: {len(units)} binary layers, {model.parameter_count()} parameters, "
        f"{len(model.lab_sites())} LAB sites"
    )
    return model


def desk_spec(dataset: str = "cifar10", binarizer: Optional[BinarizerConfig] = None, **options) -> ModelSpec:
    """Desk-scale default: 4 stages x 2 layers, 32/64/128/256 channels."""
    if dataset not in DATASET_SHAPES:
        raise ModelBuildError(f"Unknown dataset {dataset!r}; expected one of {sorted(DATASET_SHAPES)}")
    return staged_spec(
        input_shape=DATASET_SHAPES[dataset],
        num_classes=DATASET_CLASSES[dataset],
        stages=4,
        layers_per_stage=2,
        base_channels=32,
        binarizer=binarizer,
        **options,
    )


def resnet18_imagenet_spec(full_precision: bool = False, binarizer: Optional[BinarizerConfig] = None, **options) -> ModelSpec:
    """
    ImageNet-shaped 18-layer spec: 7x7/2 stem with 2x2 max-pool, 4 stages
    of 4 binary 3x3 layers (64/128/256/512), 224x224x3 input, 1000 classes.
    """
    return staged_spec(
        input_shape=(3, 224, 224),
        num_classes=1000,
        stages=4,
        layers_per_stage=4,
        base_channels=64,
        binarizer=binarizer,
        stem_kernel=7,
        stem_stride=2,
        stem_pool=True,
        full_precision=full_precision,
        **options,
    )


def lab_masks(stages: int = 4) -> List[Tuple[bool, ...]]:
    """All 2^stages LAB placements, from no LAB to LAB everywhere."""
    return [tuple(reversed(bits)) for bits in product((False, True), repeat=stages)]


def mask_label(mask: Tuple[bool, ...]) -> str:
    """'1010' style label: position s is 1 when stage s+1 uses LAB."""
    return "".join("1" if use else "0" for use in mask)
