"""
Command-line surface.

Kept free of numpy imports: `main.py` parses arguments and pins the BLAS
thread count before anything numeric is loaded.
"""

import argparse

from config.settings import settings

SUBCOMMANDS = (
    "train",
    "eval",
    "sweep-blocks",
    "ablate",
    "compare-binarizers",
    "analyze",
    "count-ops",
    "bench",
    "dump-maps",
)


def _common(parser: argparse.ArgumentParser, config_required: bool = False, out_required: bool = True) -> None:
    parser.add_argument("--config", required=config_required, help="Run config file")
    parser.add_argument("--out", required=out_required, help="Output directory")
    parser.add_argument("--seed", type=int, default=None, help="Override [train] seed")
    parser.add_argument("--threads", type=int, default=None, help="Override thread counts")
    parser.add_argument("--images", type=int, default=None, help="Override analysis image counts")


def _checkpoint(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument(
        "--checkpoint",
        required=required,
        help="Checkpoint file; its directory's config.ini is used when --config is omitted",
    )


def _data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", default=None, help="Dataset directory (falls back to [train] data_dir, then LABNN_DATA_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labnn", description=f"{settings.APP_NAME} v{settings.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a model and write its log and checkpoint")
    _common(p, config_required=True)
    _data(p)

    p = sub.add_parser("eval", help="Top-1/top-5 accuracy of a checkpoint")
    _common(p, out_required=False)
    _checkpoint(p)
    _data(p)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--quantize-lab", type=int, choices=(8, 4), default=None, help="Quantize LAB kernels before evaluating")

    for name, text in (
        ("sweep-blocks", "Train all 16 LAB stage placements"),
        ("ablate", "Train the A-D ablation ladder"),
        ("compare-binarizers", "Train one model per binarizer, plus INT8/INT4 LAB"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p, config_required=True)
        _data(p)

    p = sub.add_parser("analyze", help="Uniqueness, dissimilarity and distribution of a checkpoint's feature maps")
    _common(p)
    _checkpoint(p)
    _data(p)
    p.add_argument("--which", choices=("uniqueness", "similarity", "distribution", "all"), default="all")
    p.add_argument("--ssim-window", type=int, default=None, help="Sliding SSIM window (default: global SSIM)")

    p = sub.add_parser("count-ops", help="BOP/FLOP/OP budget of a model")
    _common(p)
    p.add_argument(
        "--preset",
        choices=("config", "resnet18", "resnet18-fp", "resnet18-lab"),
        default="config",
        help="Count the config's [net] or an ImageNet-shaped 18-layer preset",
    )

    p = sub.add_parser("bench", help="Per-operator latency of a model")
    _common(p)
    _checkpoint(p, required=False)

    p = sub.add_parser("dump-maps", help="Write every binary layer's input maps as PGM")
    _common(p)
    _checkpoint(p)
    _data(p)

    return parser
