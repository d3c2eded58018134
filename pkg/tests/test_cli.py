import csv
import json

import pytest

import cli.commands
from cli.parser import SUBCOMMANDS, build_parser
from main import main
from schemas.report_schemas import EvalResult, OpsBudget


def tiny_config(tmp_path, data_dir, stages=1, binarizer="lab", extra=""):
    path = tmp_path / "run.ini"
    path.write_text(
        f"[net]\ndataset = mnist\nstages = {stages}\nlayers_per_stage = 1\nbase_channels = 4\nbinarizer = {binarizer}\n\n"
        f"[train]\ndata_dir = {data_dir}\nbatch_size = 10\nepochs = 1\nsubset = 20\neval_subset = 10\nmax_steps = 2\n\n"
        f"[analyze]\nkernel_size = 2\nmax_channels = 1\n\n"
        f"[bench]\nruns = 1\nwarmup = 0\n{extra}"
    )
    return path


def read_rows(path):
    with path.open() as f:
        return list(csv.DictReader(f))


def test_parser_knows_every_subcommand():
    assert set(SUBCOMMANDS) == set(cli.commands.COMMANDS)
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train"])


def test_count_ops_preset(tmp_path):
    assert main(["count-ops", "--preset", "resnet18", "--out", str(tmp_path)]) == 0
    budget = OpsBudget.model_validate_json((tmp_path / "ops.json").read_text())
    assert budget.bop == 1_676_279_808
    assert len(read_rows(tmp_path / "ops.csv")) == len(budget.layers)
    assert not (tmp_path / "ops_delta.csv").exists()


def test_count_ops_lab_preset_writes_delta(tmp_path):
    assert main(["count-ops", "--preset", "resnet18-lab", "--out", str(tmp_path)]) == 0
    delta = {row["category"]: int(row["flop_delta"]) for row in read_rows(tmp_path / "ops_delta.csv")}
    assert delta["lab_depthwise"] == 30_256_128


def test_missing_config_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[net]\nstages = 2\n")
    assert main(["count-ops", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "Missing config key 'net.dataset'" in err
    assert "[key: net.dataset]" in err


def test_config_preset_without_config_exits_2(tmp_path, capsys):
    assert main(["count-ops", "--out", str(tmp_path)]) == 2
    assert "[key: config]" in capsys.readouterr().err


def test_missing_dataset_exits_2(tmp_path):
    config = tiny_config(tmp_path, tmp_path / "nowhere")
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "run")]) == 2


def test_training_on_one_record_exits_2(tmp_path, mnist_dir, capsys):
    config = tiny_config(tmp_path, mnist_dir)
    config.write_text(config.read_text().replace("\nsubset = 20", "\nsubset = 1"))
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "run")]) == 2
    assert "training records" in capsys.readouterr().err
    assert not (tmp_path / "run" / "eval.json").exists()


def test_unexpected_failure_exits_1(tmp_path, monkeypatch, capsys):
    def explode(args):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli.commands, "run", explode)
    assert main(["count-ops", "--preset", "resnet18", "--out", str(tmp_path)]) == 1
    assert "error:" in capsys.readouterr().err


def test_train_then_eval_round_trip(tmp_path, mnist_dir, capsys):
    config = tiny_config(tmp_path, mnist_dir)
    run = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(run)]) == 0
    for name in ("model.labc", "train_log.csv", "eval.json", "config.ini", "config.json"):
        assert (run / name).is_file(), name
    trained = EvalResult.model_validate_json((run / "eval.json").read_text())
    assert trained.samples == 10

    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(run / "model.labc")]) == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("{")]
    assert EvalResult.model_validate_json(lines[-1]) == trained

    assert main(["eval", "--checkpoint", str(run / "model.labc"), "--quantize-lab", "4", "--out", str(tmp_path / "q")]) == 0
    assert EvalResult.model_validate_json((tmp_path / "q" / "eval.json").read_text()).samples == 10


def test_analyze_dump_and_bench(tmp_path, mnist_dir):
    config = tiny_config(tmp_path, mnist_dir)
    run = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(run)]) == 0
    checkpoint = str(run / "model.labc")

    out = tmp_path / "analysis"
    assert main(["analyze", "--checkpoint", checkpoint, "--out", str(out), "--images", "2"]) == 0
    uniqueness = read_rows(out / "uniqueness.csv")
    assert [row["binarizer"] for row in uniqueness] == ["lab", "sign"]
    assert all(0 < float(row["mean_eta"]) <= 1 for row in uniqueness)
    assert [row["stage"] for row in read_rows(out / "similarity.csv")] == ["pre", "post"]
    distribution = read_rows(out / "distribution.csv")
    assert len(distribution) == 4
    assert json.loads((out / "distribution.json").read_text())[0]["image_count"] == 2
    assert (out / "maps" / "stage1.layer1" / "img0_ch0.pgm").read_text().startswith("P2\n28 28\n255\n")

    maps = tmp_path / "maps"
    assert main(["dump-maps", "--checkpoint", checkpoint, "--out", str(maps), "--images", "1"]) == 0
    assert len(list((maps / "maps" / "stage1.layer1").glob("*.pgm"))) == 4

    bench = tmp_path / "bench"
    assert main(["bench", "--config", str(config), "--out", str(bench)]) == 0
    rows = read_rows(bench / "bench.csv")
    assert rows[-1]["operator"] == "end_to_end"
    assert sorted(p.name for p in bench.iterdir() if p.suffix in (".csv", ".json")) == ["bench.csv", "bench.json"]
    assert (bench / "config.ini").is_file()


def test_placement_sweep_writes_16_rows(tmp_path, mnist_dir):
    config = tiny_config(tmp_path, mnist_dir, stages=4, binarizer="sign")
    out = tmp_path / "sweep"
    assert main(["sweep-blocks", "--config", str(config), "--out", str(out)]) == 0
    rows = read_rows(out / "placement_sweep.csv")
    assert sorted(row["variant"] for row in rows) == sorted(f"{m:04b}" for m in range(16))
    top1 = [float(row["top1"]) for row in rows]
    assert top1 == sorted(top1, reverse=True)
    by_name = {row["variant"]: row for row in rows}
    assert int(by_name["0000"]["lab_param_count"]) == 0
    assert int(by_name["1111"]["flop"]) > int(by_name["0000"]["flop"])
    size = {name: float(row["param_bytes"]) for name, row in by_name.items()}
    for small in size:
        for large in size:
            grown = small != large and all(a <= b for a, b in zip(small, large))
            if grown:
                assert size[large] > size[small], (small, large)
    # LAB sites see 4, 4, 8 and 16 channels; 2Ck^2 + 2C + 1 float32 parameters each
    lab_bytes = [4 * (2 * c * 9 + 2 * c + 1) for c in (4, 4, 8, 16)]
    assert int(by_name["1111"]["lab_param_count"]) * 4 == sum(lab_bytes)
    for name, bytes_ in size.items():
        expected = sum(b for bit, b in zip(name, lab_bytes) if bit == "1")
        assert bytes_ - size["0000"] == pytest.approx(expected), name


def test_ablation_and_binarizer_comparison(tmp_path, mnist_dir):
    config = tiny_config(tmp_path, mnist_dir, stages=4, binarizer="sign")
    assert main(["ablate", "--config", str(config), "--out", str(tmp_path / "ablate")]) == 0
    ladder = read_rows(tmp_path / "ablate" / "ablation.csv")
    assert [row["variant"] for row in ladder] == ["A:sign", "B:+prelu", "C:+lab", "D:+stem"]
    assert int(ladder[3]["flop"]) < int(ladder[2]["flop"])

    assert main(["compare-binarizers", "--config", str(config), "--out", str(tmp_path / "cmp")]) == 0
    variants = [row["variant"] for row in read_rows(tmp_path / "cmp" / "binarizers.csv")]
    assert variants == ["sign", "niblack(k=-0.2)", "sauvola(k=0.2)", "sauvola(k=0.5)", "lab", "lab-int8", "lab-int4"]
    sizes = {row["variant"]: float(row["param_bytes"]) for row in read_rows(tmp_path / "cmp" / "binarizers.csv")}
    assert sizes["lab"] > sizes["lab-int8"] > sizes["lab-int4"] > sizes["sign"]
