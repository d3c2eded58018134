"""
Host-CPU latency benchmark of a built model.

The model runs in infer mode on a fixed random batch. Warm-up runs are
discarded; every timed run contributes one end-to-end sample and one
sample per tagged operator. Whatever the tags do not cover is reported as
"other".
"""

import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from analysis.writers import write_csv, write_json
from bench.profiler import Profiler
from config.settings import settings
from models.builder import build
from models.model import Model
from schemas.report_schemas import BenchReport, OperatorTiming
from tensor.real import RealTensor
from utils.exceptions import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

BENCH_CSV = "bench.csv"
BENCH_JSON = "bench.json"


def timing(operator: str, layer: str, samples_ns: Sequence[int]) -> OperatorTiming:
    us = np.asarray(samples_ns, dtype=np.float64) / 1000.0
    return OperatorTiming(
        operator=operator,
        layer=layer,
        mean_us=float(us.mean()),
        min_us=float(us.min()),
        max_us=float(us.max()),
        median_us=float(np.median(us)),
        runs=len(us),
    )


def at_input_shape(model: Model, shape: Sequence[int]) -> Model:
    """
    `model` itself when it already takes `shape` images, otherwise a model
    rebuilt for `shape` carrying the same parameters and statistics.

    Raises:
        ModelBuildError: If the layers cannot be applied to `shape`.
    """
    shape = tuple(shape)
    if shape == tuple(model.spec.input_shape):
        return model
    resized = build(model.spec.model_copy(update={"input_shape": shape}))
    resized.load_state(model.state_tensors())
    resized.lab_weight_bits = model.lab_weight_bits
    resized.threads = model.threads
    logger.debug(f"Rebuilt model for input {shape}")
    return resized


def bench_model(
    model: Model,
    input_shape: Optional[Sequence[int]] = None,
    runs: Optional[int] = None,
    warmup: Optional[int] = None,
    threads: int = 1,
    batch: int = 1,
    seed: Optional[int] = None,
    label: str = "",
) -> BenchReport:
    """
    Time a model's forward pass per operator and end to end.

    Args:
        model (Model): Built model.
        input_shape: (C, H, W) of one image; defaults to the spec's input shape.
            Any other shape benchmarks a copy of the model rebuilt for it.
        runs (int): Timed runs, at least 1; defaults to BENCH_RUNS.
        warmup (int): Untimed runs before measuring; defaults to BENCH_WARMUP.
        threads (int): Threads available to the binary convolutions.
        batch (int): Images per forward pass.
        seed (int): Seed of the random input batch; defaults to DEFAULT_SEED.
        label (str): Model name stored in the report.

    Returns:
        BenchReport: Per-operator timings in forward order, end-to-end timing and "other".

    Raises:
        ConfigError: If `runs` is below 1.
        ModelBuildError: If the layers cannot be applied to `input_shape`.
    """
    runs = settings.BENCH_RUNS if runs is None else runs
    warmup = settings.BENCH_WARMUP if warmup is None else warmup
    seed = settings.DEFAULT_SEED if seed is None else seed
    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}", key="bench.runs")
    shape: Tuple[int, ...] = tuple(input_shape) if input_shape is not None else tuple(model.spec.input_shape)
    model = at_input_shape(model, shape)
    rng = np.random.default_rng(seed)
    x = RealTensor(rng.standard_normal((batch, *shape)).astype(np.float32))
    previous_threads = model.threads
    model.threads = threads

    profiler = Profiler()
    end_to_end: List[int] = []
    try:
        for _ in range(warmup):
            model.forward(x, "infer", profiler)
            profiler.discard_run()
        for run in range(runs):
            start = time.perf_counter_ns()
            model.forward(x, "infer", profiler)
            end_to_end.append(time.perf_counter_ns() - start)
            profiler.finish_run()
            logger.debug(f"run {run + 1}/{runs}: {end_to_end[-1] / 1000:.1f} us")
    finally:
        model.threads = previous_threads

    operators = [timing(op, layer, profiler.samples[(op, layer)]) for op, layer in profiler.keys()]
    total = timing("end_to_end", "model", end_to_end)
    other = max(0.0, total.mean_us - sum(op.mean_us for op in operators))
    report = BenchReport(
        model=label,
        input_shape=[batch, *shape],
        threads=threads,
        warmup=warmup,
        runs=runs,
        operators=operators,
        end_to_end=total,
        other_us=other,
    )
    logger.info(
        f"✓ Benchmarked {label or 'model'}: {total.mean_us:.1f} us mean over {runs} runs, "
        f"{report.attributed_fraction:.1%} attributed"
    )
    return report


def write_bench(report: BenchReport, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """bench.csv (one row per operator, then "other" and "end_to_end") and bench.json."""
    out_dir = Path(out_dir)
    rows = [
        {key: getattr(op, key) for key in ("operator", "layer", "mean_us", "min_us", "max_us", "median_us")}
        for op in report.operators
    ]
    rows.append({"operator": "other", "layer": "model", "mean_us": report.other_us})
    end = report.end_to_end
    rows.append({"operator": end.operator, "layer": end.layer, "mean_us": end.mean_us, "min_us": end.min_us, "max_us": end.max_us, "median_us": end.median_us})
    return write_csv(out_dir / BENCH_CSV, rows), write_json(out_dir / BENCH_JSON, report)
