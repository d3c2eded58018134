"""
Operation counting.

One multiply-accumulate counts as one operation: binary MACs are BOPs,
real MACs and elementwise operations are FLOPs, and OP = BOP/64 + FLOP.
Batchnorm is folded into the preceding layer at inference and is not
counted. Counts are per image.
"""

from typing import Dict, List

from bitconv.binconv import ConvGeometry, count_bops
from models.plan import ModelPlan, UnitPlan, plan_model
from schemas.net_schemas import ModelSpec
from schemas.report_schemas import LayerOps, OpsBudget
from tensor.shape import Padding, Shape4

LAB_MULTIPLIER = 2


def _elements(shape) -> int:
    c, h, w = shape
    return c * h * w


def _conv_macs(out_shape, k: int, in_channels: int) -> int:
    return _elements(out_shape) * k * k * in_channels


def _unit_rows(unit: UnitPlan, binary_padding: float) -> List[LayerOps]:
    rows = []
    c_in, h_in, w_in = unit.in_shape
    c_out = unit.out_shape[0]
    if unit.binarizer is None:
        rows.append(LayerOps(layer=unit.name, category="real_conv", flop=_conv_macs(unit.out_shape, 3, c_in)))
    else:
        geometry = ConvGeometry(c_in, c_out, 3, unit.stride, Padding.same(binary_padding))
        rows.append(LayerOps(layer=unit.name, category="binary_conv", bop=count_bops(geometry, Shape4(1, *unit.in_shape))))
        kind = unit.binarizer.kind
        if kind == "lab":
            k = unit.binarizer.lab_kernel
            logits = LAB_MULTIPLIER * c_in * h_in * w_in
            rows.append(LayerOps(layer=unit.name, category="lab_depthwise", flop=logits * k * k))
            rows.append(LayerOps(layer=unit.name, category="lab_bias_add", flop=logits))
            rows.append(LayerOps(layer=unit.name, category="lab_argmax", flop=c_in * h_in * w_in))
        elif kind in ("niblack", "sauvola"):
            # window mean and variance, then the threshold compare
            window = unit.binarizer.window
            rows.append(LayerOps(layer=unit.name, category=f"{kind}_threshold", flop=(2 * window * window + 4) * c_in * h_in * w_in))
    if unit.downsample:
        rows.append(LayerOps(layer=unit.name, category="shortcut_pool", flop=c_in * h_in * w_in))
    if unit.project:
        rows.append(LayerOps(layer=unit.name, category="shortcut_conv", flop=_conv_macs(unit.out_shape, 1, c_in)))
    rows.append(LayerOps(layer=unit.name, category="residual_add", flop=_elements(unit.out_shape)))
    if unit.use_prelu:
        rows.append(LayerOps(layer=unit.name, category="prelu_mul", flop=_elements(unit.out_shape)))
        rows.append(LayerOps(layer=unit.name, category="prelu_neg", flop=_elements(unit.out_shape)))
    return rows


def count_plan(plan: ModelPlan, binary_padding: float = -1.0, label: str = "") -> OpsBudget:
    """Per-layer BOP/FLOP rows of a resolved plan."""
    stem = plan.stem
    rows = [LayerOps(layer="stem", category="stem_conv", flop=_conv_macs(stem.conv_shape, stem.kernel, stem.in_shape[0]))]
    if stem.depthwise_shape is not None:
        # each depthwise output channel reads one input channel
        rows.append(LayerOps(layer="stem", category="stem_depthwise", flop=_elements(stem.depthwise_shape) * 9))
    for unit in plan.units:
        rows.extend(_unit_rows(unit, binary_padding))
    rows.append(LayerOps(layer="classifier", category="dense", flop=plan.feature_channels * plan.num_classes))
    return OpsBudget(model=label, layers=rows)


def count_ops(spec: ModelSpec, label: str = "") -> OpsBudget:
    """
    BOP/FLOP/OP budget of a model description.

    Args:
        spec (ModelSpec): The model, shaped for one input image.
        label (str): Name stored in the report.

    Returns:
        OpsBudget: One row per counted item; totals are computed fields.
    """
    return count_plan(plan_model(spec), spec.binary_padding, label)


def ops_delta(base: OpsBudget, other: OpsBudget) -> Dict[str, int]:
    """Per-category difference other - base, for LAB-vs-baseline tables."""
    a, b = base.by_category(), other.by_category()
    return {category: b.get(category, 0) - a.get(category, 0) for category in sorted(set(a) | set(b))}
