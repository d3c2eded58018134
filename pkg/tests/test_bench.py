import csv

import numpy as np
import pytest

from bench.bench import BENCH_CSV, BENCH_JSON, at_input_shape, bench_model, timing, write_bench
from bench.profiler import Profiler
from conftest import tiny_spec
from config.settings import settings
from models.builder import build
from schemas.config_schemas import BenchSection
from schemas.report_schemas import BenchReport
from tensor.real import RealTensor
from utils.exceptions import ConfigError


def test_timing_statistics():
    single = timing("binconv", "stage1.layer1", [2500])
    assert single.min_us == single.mean_us == single.max_us == single.median_us == 2.5
    spread = timing("binconv", "stage1.layer1", [1000, 2000, 6000])
    assert (spread.min_us, spread.median_us, spread.mean_us, spread.max_us) == (1.0, 2.0, 3.0, 6.0)
    assert spread.runs == 3


def test_profiler_attributes_only_the_outermost_section():
    profiler = Profiler()
    with profiler.section("binarize", "a"):
        with profiler.section("inner", "a"):
            pass
    with profiler.section("binarize", "a"):
        pass
    profiler.finish_run()
    assert profiler.keys() == [("binarize", "a")]
    assert len(profiler.samples[("binarize", "a")]) == 1
    with profiler.section("binconv", "a"):
        pass
    profiler.discard_run()
    assert profiler.keys() == [("binarize", "a")]


def test_single_run_benchmark():
    model = build(tiny_spec(binarizer="lab", stages=2, layers=1))
    model.threads = 2
    report = bench_model(model, runs=1, warmup=0, threads=1, batch=2, label="tiny")
    assert model.threads == 2
    assert report.input_shape == [2, 1, 8, 8]
    keys = [(op.operator, op.layer) for op in report.operators]
    assert keys[0] == ("stem", "stem")
    assert ("binarize", "stage1.layer1") in keys and ("binconv", "stage2.layer1") in keys
    assert keys[-1] == ("dense", "classifier")
    for op in report.operators:
        assert op.runs == 1 and op.min_us == op.mean_us == op.max_us
    assert 0.0 <= report.attributed_fraction <= 1.0
    assert report.other_us >= 0.0
    attributed = sum(op.mean_us for op in report.operators)
    assert attributed + report.other_us >= report.end_to_end.mean_us - 1e-6
    assert attributed <= 1.1 * report.end_to_end.mean_us


def test_runs_must_be_positive():
    with pytest.raises(ConfigError):
        bench_model(build(tiny_spec()), runs=0)


def test_write_bench(tmp_path):
    report = bench_model(build(tiny_spec()), runs=3, warmup=1)
    csv_path, json_path = write_bench(report, tmp_path)
    assert csv_path.name == BENCH_CSV and json_path.name == BENCH_JSON
    with csv_path.open() as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == len(report.operators) + 2
    assert [row["operator"] for row in rows[-2:]] == ["other", "end_to_end"]
    assert rows[-2]["min_us"] == ""
    restored = BenchReport.model_validate_json(json_path.read_text())
    assert restored.runs == 3 and len(restored.operators) == len(report.operators)


def test_defaults_come_from_settings(monkeypatch):
    monkeypatch.setattr(settings, "BENCH_RUNS", 2)
    monkeypatch.setattr(settings, "BENCH_WARMUP", 0)
    report = bench_model(build(tiny_spec()))
    assert (report.runs, report.warmup) == (2, 0)
    assert report.end_to_end.runs == 2
    assert BenchSection().runs == 2 and BenchSection().warmup == 0


def test_other_input_shape_reuses_the_parameters():
    model = build(tiny_spec(binarizer="lab", stages=2, layers=1))
    resized = at_input_shape(model, (1, 16, 12))
    assert at_input_shape(model, (1, 8, 8)) is model
    assert tuple(resized.spec.input_shape) == (1, 16, 12)
    assert tuple(model.spec.input_shape) == (1, 8, 8)
    before, after = model.state_tensors(), resized.state_tensors()
    assert before.keys() == after.keys()
    for name, tensor in before.items():
        if isinstance(tensor, RealTensor):
            np.testing.assert_array_equal(after[name].data, tensor.data)
        else:
            assert after[name] == tensor
    report = bench_model(model, input_shape=(1, 16, 12), runs=1, warmup=0, batch=2)
    assert report.input_shape == [2, 1, 16, 12]


def test_binconv_time_grows_with_input_area():
    model = build(tiny_spec(channels=16, stages=1, layers=2, shape=(1, 48, 48)))

    def binconv_us(shape):
        report = bench_model(model, input_shape=shape, runs=7, warmup=2)
        return sum(op.min_us for op in report.operators if op.operator == "binconv")

    area = binconv_us((1, 48, 48))
    double_area = binconv_us((1, 48, 96))
    assert area > 0.0
    assert double_area >= area


@pytest.mark.slow
def test_lab_model_is_slower_than_sign_model():
    from models.builder import desk_spec
    from schemas.net_schemas import BinarizerConfig

    sign = bench_model(build(desk_spec("cifar10")), runs=10)
    lab = bench_model(build(desk_spec("cifar10", binarizer=BinarizerConfig(kind="lab"))), runs=10)
    assert lab.end_to_end.mean_us > sign.end_to_end.mean_us
