"""
Subcommand handlers.

Each handler takes the parsed argparse namespace, writes its artifacts
under --out and returns nothing; failures surface as LabnnException
subclasses, which `main.py` maps to exit code 2.
"""

import argparse
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from analysis.distribution import binary_distribution, merge_distributions
from analysis.ops_counter import count_ops, ops_delta
from analysis.similarity import pairwise_dissimilarity
from analysis.uniqueness import layer_uniqueness
from analysis.writers import write_csv, write_json, write_pgm
from bench.bench import bench_model, write_bench
from binarize.kinds import SignSTE
from config.run_config import echo_run_config, load_run_config
from models.builder import build, resnet18_imagenet_spec
from models.layers import FeatureCapture
from models.model import Model
from models.sweep import ablation_ladder, compare_binarizers, placement_sweep
from schemas.config_schemas import RunConfig
from schemas.net_schemas import BinarizerConfig
from schemas.report_schemas import DissimilarityReport, DistributionReport, LayerUniqueness
from tensor.bits import BitTensor, unpack
from tensor.real import RealTensor
from tensor.shape import Padding
from train.datasets import DatasetHandle, load_dataset, resolve_data_dir
from train.trainer import evaluate, load_checkpoint, train
from utils.exceptions import ConfigError, DatasetFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

CAPTURE_BATCH = 100


def _config(args: argparse.Namespace) -> RunConfig:
    path = args.config
    if path is None and getattr(args, "checkpoint", None):
        path = Path(args.checkpoint).parent / "config.ini"
    if path is None:
        raise ConfigError("No --config given and no checkpoint directory to take config.ini from", key="config")
    return load_run_config(path, seed=args.seed, threads=args.threads, images=args.images)


def _out_dir(args: argparse.Namespace, config: Optional[RunConfig] = None, json_copy: bool = True) -> Optional[Path]:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if config is not None:
        echo_run_config(config, out, json_copy)
    return out


def _dataset(args: argparse.Namespace, config: RunConfig, split: str) -> DatasetHandle:
    directory = resolve_data_dir(getattr(args, "data", None) or config.train.data_dir, config.net.dataset)
    handle = load_dataset(directory, config.net.dataset, split)
    limit = config.train.subset if split == "train" else config.train.eval_subset
    return handle.subset(limit) if limit is not None else handle


def _model(args: argparse.Namespace, config: RunConfig) -> Model:
    model = build(config.net.to_model_spec(), seed=config.train.seed)
    if getattr(args, "checkpoint", None):
        load_checkpoint(model, args.checkpoint)
        logger.info(f"✓ Restored {args.checkpoint}")
    return model


def cmd_train(args: argparse.Namespace) -> None:
    config = _config(args)
    out = _out_dir(args, config)
    train_set = _dataset(args, config, "train")
    eval_set = _dataset(args, config, "test")
    model = _model(args, config)
    model.threads = config.train.threads
    result = train(model, train_set, config.train.train_config(), out, eval_set, config.train.log_every)
    if result.final is None:
        raise DatasetFormatError(f"No training step ran on {len(train_set)} training records; nothing to evaluate")
    write_json(out / "eval.json", result.final)
    logger.info(f"✓ Final top-1 {result.final.top1:.4f}, top-5 {result.final.top5:.4f}; checkpoint {result.checkpoint}")


def cmd_eval(args: argparse.Namespace) -> None:
    config = _config(args)
    out = _out_dir(args, config)
    dataset = _dataset(args, config, args.split)
    model = _model(args, config)
    model.threads = config.train.threads
    if args.quantize_lab is not None:
        model.quantize_lab(args.quantize_lab)
    result = evaluate(model, dataset)
    if out is not None:
        write_json(out / "eval.json", result)
    print(result.model_dump_json())
    logger.info(f"✓ top-1 {result.top1:.4f}, top-5 {result.top5:.4f} on {result.samples} {args.split} records")


def _sweep(args: argparse.Namespace, runner) -> None:
    config = _config(args)
    out = _out_dir(args, config)
    train_set = _dataset(args, config, "train")
    eval_set = _dataset(args, config, "test")
    rows = runner(config.net.to_model_spec(), train_set, eval_set, config.train.train_config(), out, config.bench.runs)
    logger.info(f"✓ {len(rows)} variants written to {out}")


def cmd_sweep_blocks(args: argparse.Namespace) -> None:
    _sweep(args, placement_sweep)


def cmd_ablate(args: argparse.Namespace) -> None:
    _sweep(args, ablation_ladder)


def cmd_compare_binarizers(args: argparse.Namespace) -> None:
    _sweep(args, compare_binarizers)


def capture_features(model: Model, dataset: DatasetHandle, images: int) -> Dict[str, FeatureCapture]:
    """Pre/post binarization maps of every binary layer over the first `images` records."""
    parts: Dict[str, List[FeatureCapture]] = {}
    subset = dataset.subset(images)
    for batch, _ in subset.batches(CAPTURE_BATCH):
        captures: Dict[str, FeatureCapture] = {}
        model.forward(batch, "infer", captures=captures)
        for name, capture in captures.items():
            parts.setdefault(name, []).append(capture)
    merged = {}
    for name, chunks in parts.items():
        pre = RealTensor(np.concatenate([c.pre.data for c in chunks]))
        post = chunks[0].post if len(chunks) == 1 else _concat_bits([c.post for c in chunks])
        merged[name] = FeatureCapture(pre, post)
    return merged


def _concat_bits(chunks: List[BitTensor]) -> BitTensor:
    return BitTensor.from_bool(np.concatenate([c.to_bool() for c in chunks]))


def _analyze_uniqueness(model: Model, captures: Dict[str, FeatureCapture], config: RunConfig) -> List[LayerUniqueness]:
    analyze = config.analyze
    padding = Padding.parse(analyze.padding, default_value=model.spec.binary_padding)
    rows = []
    for unit in model.units:
        if unit.binarizer is None or unit.name not in captures:
            continue
        bits = captures[unit.name].post
        binarizers = [unit.binarizer] if unit.binarizer.kind == "sign" else [unit.binarizer, SignSTE()]
        for binarizer in binarizers:
            rows.append(layer_uniqueness(unit.name, bits, binarizer, analyze.kernel_size, padding, analyze.max_channels, analyze.threads))
            logger.debug(f"uniqueness {unit.name} [{binarizer.label}]: {rows[-1].mean_eta:.4f}")
    return rows


def _analyze_similarity(captures: Dict[str, FeatureCapture], window: Optional[int]) -> DissimilarityReport:
    names = [name for name, capture in captures.items() if capture.pre.data.shape[1] >= 2]
    pre = pairwise_dissimilarity([captures[n].pre for n in names], names, "pre", window)
    post = pairwise_dissimilarity([unpack(captures[n].post) for n in names], names, "post", window)
    return DissimilarityReport(layers=pre.layers + post.layers)


def _analyze_distribution(model: Model, dataset: DatasetHandle, images: int) -> List[DistributionReport]:
    per_layer: Dict[str, List[DistributionReport]] = {}
    for batch, _ in dataset.subset(images).batches(CAPTURE_BATCH):
        captures: Dict[str, FeatureCapture] = {}
        model.forward(batch, "infer", captures=captures)
        for name, capture in captures.items():
            per_layer.setdefault(name, []).append(binary_distribution(capture.post, name))
    return [merge_distributions(reports) for reports in per_layer.values()]


def _dump_maps(captures: Dict[str, FeatureCapture], out: Path, images: int, channels: Optional[int] = None) -> int:
    written = 0
    for name, capture in captures.items():
        shape = capture.post.shape
        for n in range(min(images, shape.n)):
            for c in range(shape.c if channels is None else min(channels, shape.c)):
                write_pgm(out / "maps" / name / f"img{n}_ch{c}.pgm", capture.post.channel(n, c))
                written += 1
    return written


def cmd_analyze(args: argparse.Namespace) -> None:
    config = _config(args)
    out = _out_dir(args, config)
    dataset = _dataset(args, config, "test")
    model = _model(args, config)
    model.threads = config.analyze.threads
    analyze = config.analyze
    which = {"uniqueness", "similarity", "distribution"} if args.which == "all" else {args.which}

    if "uniqueness" in which:
        captures = capture_features(model, dataset, analyze.uniqueness_images)
        rows = _analyze_uniqueness(model, captures, config)
        write_csv(out / "uniqueness.csv", rows)
        write_json(out / "uniqueness.json", rows)
        logger.info(f"✓ Uniqueness of {len(rows)} layer/binarizer pairs over {analyze.uniqueness_images} images")
    if "similarity" in which:
        captures = capture_features(model, dataset, analyze.similarity_images)
        report = _analyze_similarity(captures, args.ssim_window)
        write_csv(out / "similarity.csv", report.layers)
        write_json(out / "similarity.json", report)
        _dump_maps(captures, out, analyze.dump_images, channels=1)
        logger.info(f"✓ Dissimilarity of {len(report.layers)} layer maps over {analyze.similarity_images} images")
    if "distribution" in which:
        reports = _analyze_distribution(model, dataset, analyze.distribution_images)
        rows = [{"layer": r.layer, "channel": c, "fraction": f} for r in reports for c, f in enumerate(r.channel_fractions)]
        write_csv(out / "distribution.csv", rows)
        write_json(out / "distribution.json", reports)
        logger.info(f"✓ Distribution of {len(reports)} layers over {analyze.distribution_images} images")


def cmd_dump_maps(args: argparse.Namespace) -> None:
    config = _config(args)
    out = _out_dir(args, config)
    images = args.images if args.images is not None else config.analyze.dump_images
    model = _model(args, config)
    captures = capture_features(model, _dataset(args, config, "test"), images)
    written = _dump_maps(captures, out, images)
    logger.info(f"✓ Wrote {written} PGM maps to {out / 'maps'}")


def _preset_specs(preset: str) -> Tuple[str, object]:
    if preset == "resnet18-fp":
        return "resnet18-fp", resnet18_imagenet_spec(full_precision=True)
    if preset == "resnet18-lab":
        return "resnet18-lab", resnet18_imagenet_spec(binarizer=BinarizerConfig(kind="lab"))
    return "resnet18", resnet18_imagenet_spec()


def cmd_count_ops(args: argparse.Namespace) -> None:
    """
    Write ops.csv/ops.json for the chosen model and, when it uses LAB,
    ops_delta.csv against the same model with sign everywhere.
    """
    if args.preset == "config":
        config = _config(args)
        out = _out_dir(args, config)
        label, spec = "config", config.net.to_model_spec()
    else:
        out = _out_dir(args)
        label, spec = _preset_specs(args.preset)
    budget = count_ops(spec, label)
    write_csv(out / "ops.csv", budget.layers)
    write_json(out / "ops.json", budget)
    if any(block.binarizer.kind == "lab" for block in spec.blocks) and not spec.full_precision:
        baseline = count_ops(spec.with_binarizer(BinarizerConfig(kind="sign")), f"{label}-sign")
        delta = ops_delta(baseline, budget)
        write_csv(out / "ops_delta.csv", [{"category": k, "flop_delta": v} for k, v in delta.items() if v])
    logger.info(f"✓ {label}: {budget.bop} BOPs, {budget.flop} FLOPs, {budget.op:.4g} OPs")


def cmd_bench(args: argparse.Namespace) -> None:
    config = _config(args)
    out = _out_dir(args, config, json_copy=False)
    model = _model(args, config)
    bench = config.bench
    label = Path(args.checkpoint).stem if args.checkpoint else "untrained"
    report = bench_model(model, runs=bench.runs, warmup=bench.warmup, threads=bench.threads, batch=bench.batch, seed=config.train.seed, label=label)
    write_bench(report, out)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-blocks": cmd_sweep_blocks,
    "ablate": cmd_ablate,
    "compare-binarizers": cmd_compare_binarizers,
    "analyze": cmd_analyze,
    "count-ops": cmd_count_ops,
    "bench": cmd_bench,
    "dump-maps": cmd_dump_maps,
}


def run(args: argparse.Namespace) -> None:
    COMMANDS[args.command](args)
