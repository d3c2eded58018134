"""
Multi-variant experiments: LAB block placement, the ablation ladder and
the binarizer comparison.

Every variant is built and trained with the same seed and TrainConfig,
then evaluated, sized, counted and timed into one SweepRow.
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import ValidationError

from analysis.ops_counter import count_ops
from analysis.writers import write_csv
from bench.bench import bench_model
from models.builder import build, lab_masks, mask_label
from models.model import Model
from schemas.net_schemas import BinarizerConfig, ModelSpec, TrainConfig
from schemas.report_schemas import SweepRow
from train.datasets import DatasetHandle
from train.trainer import evaluate, train
from utils.exceptions import ModelBuildError
from utils.logger import get_logger

logger = get_logger(__name__)

PLACEMENT_CSV = "placement_sweep.csv"
ABLATION_CSV = "ablation.csv"
BINARIZER_CSV = "binarizers.csv"

BINARIZER_VARIANTS: List[Tuple[str, BinarizerConfig]] = [
    ("sign", BinarizerConfig(kind="sign")),
    ("niblack(k=-0.2)", BinarizerConfig(kind="niblack", k=-0.2)),
    ("sauvola(k=0.2)", BinarizerConfig(kind="sauvola", k=0.2)),
    ("sauvola(k=0.5)", BinarizerConfig(kind="sauvola", k=0.5)),
    ("lab", BinarizerConfig(kind="lab")),
]
QUANTIZED_WIDTHS = (8, 4)


def lab_stage_indices(spec: ModelSpec) -> List[int]:
    return [block.stage for block in spec.blocks if block.binarizer.kind == "lab"]


def describe(variant: str, model: Model, eval_set: DatasetHandle, bench_runs: int) -> SweepRow:
    """Evaluate, size, count and time a trained model."""
    accuracy = evaluate(model, eval_set)
    budget = count_ops(model.spec, label=variant)
    latency = bench_model(model, runs=bench_runs, warmup=1, label=variant).end_to_end.mean_us if bench_runs else 0.0
    return SweepRow(
        variant=variant,
        lab_stages=lab_stage_indices(model.spec),
        top1=accuracy.top1,
        top5=accuracy.top5,
        param_count=model.parameter_count(),
        lab_param_count=model.lab_parameter_count(),
        param_bytes=model.param_bytes(),
        latency_us=latency,
        flop=budget.flop,
        bop=budget.bop,
    )


def train_variant(
    variant: str,
    spec: ModelSpec,
    train_set: DatasetHandle,
    eval_set: Optional[DatasetHandle],
    cfg: TrainConfig,
    bench_runs: int = 10,
) -> Tuple[SweepRow, Model]:
    model = build(spec, seed=cfg.seed)
    train(model, train_set, cfg)
    row = describe(variant, model, eval_set or train_set, bench_runs)
    logger.info(f"✓ {variant}: top-1 {row.top1:.4f}, {row.param_bytes:.0f} bytes, {row.latency_us:.0f} us")
    return row, model


def _write(rows: List[SweepRow], out_dir: Optional[Union[str, Path]], name: str) -> None:
    if out_dir is not None:
        write_csv(Path(out_dir) / name, rows)


def placement_sweep(
    base: ModelSpec,
    train_set: DatasetHandle,
    eval_set: Optional[DatasetHandle],
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    bench_runs: int = 10,
) -> List[SweepRow]:
    """
    Train every LAB/sign stage combination of a 4-stage spec.

    Returns:
        List[SweepRow]: 16 rows named by mask ("0000" ... "1111"), best
        top-1 first; ties keep mask order.

    Raises:
        ModelBuildError: If the base spec does not have 4 stages.
    """
    if len(base.blocks) != 4:
        raise ModelBuildError(f"Placement sweep needs a 4-stage spec, got {len(base.blocks)} stages")
    rows = []
    for mask in lab_masks(4):
        row, _ = train_variant(mask_label(mask), base.with_lab_mask(mask), train_set, eval_set, cfg, bench_runs)
        rows.append(row)
    rows.sort(key=lambda row: -row.top1)
    _write(rows, out_dir, PLACEMENT_CSV)
    return rows


def ablation_specs(base: ModelSpec) -> List[Tuple[str, ModelSpec]]:
    """
    Models A-D: sign without PReLU, then adding PReLU, LAB in every stage,
    and finally the cheaper quicknet stem.
    """
    sign = base.with_binarizer(BinarizerConfig(kind="sign"))
    plain = sign.model_copy(update={"blocks": [b.model_copy(update={"use_prelu": False}) for b in sign.blocks]})
    prelu = sign.model_copy(update={"blocks": [b.model_copy(update={"use_prelu": True}) for b in sign.blocks]})
    lab = prelu.with_binarizer(BinarizerConfig(kind="lab"))
    try:
        stem = ModelSpec.model_validate({**lab.model_dump(), "stem": "quicknet-stem"})
    except ValidationError as e:
        raise ModelBuildError(f"Ablation model D cannot use the quicknet stem: {e.errors()[0]['msg']}") from e
    return [
        ("A:sign", plain),
        ("B:+prelu", prelu),
        ("C:+lab", lab),
        ("D:+stem", stem),
    ]


def ablation_ladder(
    base: ModelSpec,
    train_set: DatasetHandle,
    eval_set: Optional[DatasetHandle],
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    bench_runs: int = 10,
) -> List[SweepRow]:
    rows = [train_variant(name, spec, train_set, eval_set, cfg, bench_runs)[0] for name, spec in ablation_specs(base)]
    _write(rows, out_dir, ABLATION_CSV)
    return rows


def compare_binarizers(
    base: ModelSpec,
    train_set: DatasetHandle,
    eval_set: Optional[DatasetHandle],
    cfg: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    bench_runs: int = 10,
) -> List[SweepRow]:
    """
    Train one model per binarizer family, then quantize the trained LAB
    model's depthwise kernels to INT8 and INT4 without retraining.
    """
    rows = []
    lab_model = None
    for name, binarizer in BINARIZER_VARIANTS:
        row, model = train_variant(name, base.with_binarizer(binarizer), train_set, eval_set, cfg, bench_runs)
        rows.append(row)
        if binarizer.kind == "lab":
            lab_model = model
    for bits in QUANTIZED_WIDTHS:
        quantized = build(lab_model.spec, seed=cfg.seed)
        quantized.load_state(lab_model.state_tensors())
        quantized.quantize_lab(bits)
        rows.append(describe(f"lab-int{bits}", quantized, eval_set or train_set, bench_runs))
    _write(rows, out_dir, BINARIZER_CSV)
    return rows
