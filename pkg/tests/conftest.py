"""
Shared fixtures: seeded generators, tiny model specs and synthetic datasets
written in the real on-disk formats.
"""

import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from schemas.net_schemas import BinarizerConfig, staged_spec
from train.datasets import CIFAR_FILES, IMAGE_MAGIC, LABEL_MAGIC, DatasetHandle


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_spec(binarizer: str = "sign", stages: int = 1, layers: int = 2, channels: int = 4, shape=(1, 8, 8), classes: int = 3, **options):
    return staged_spec(
        input_shape=shape,
        num_classes=classes,
        stages=stages,
        layers_per_stage=layers,
        base_channels=channels,
        binarizer=BinarizerConfig(kind=binarizer),
        **options,
    )


@pytest.fixture
def make_spec():
    return tiny_spec


def synthetic_handle(n: int = 32, shape=(1, 8, 8), classes: int = 3, seed: int = 0) -> DatasetHandle:
    """Class-dependent images: the brightness of a centred square encodes the label."""
    r = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    images = r.normal(0.0, 0.3, size=(n, *shape)).astype(np.float32)
    c, h, w = shape
    for i, label in enumerate(labels):
        images[i, :, h // 2 - 2:h // 2 + 1, w // 2 - 2:w // 2 + 1] += 2.0 * (1 - label)
    return DatasetHandle("mnist-idx", "train", images, labels.astype(np.int64), (0.0,) * c, (1.0,) * c, num_classes=classes)


@pytest.fixture
def tiny_dataset():
    return synthetic_handle()


def write_idx(directory: Path, split_files, images: np.ndarray, labels: np.ndarray, compress: bool = False) -> None:
    image_name, label_name = split_files
    n, rows, cols = images.shape
    image_bytes = struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.astype(np.uint8).tobytes()
    label_bytes = struct.pack(">II", LABEL_MAGIC, n) + labels.astype(np.uint8).tobytes()
    for name, payload in ((image_name, image_bytes), (label_name, label_bytes)):
        if compress:
            with gzip.open(directory / f"{name}.gz", "wb") as f:
                f.write(payload)
        else:
            (directory / name).write_bytes(payload)


def write_cifar(directory: Path, name: str, images: np.ndarray, labels: np.ndarray) -> None:
    records = np.concatenate([labels.astype(np.uint8)[:, None], images.reshape(len(labels), -1).astype(np.uint8)], axis=1)
    (directory / name).write_bytes(records.tobytes())


@pytest.fixture
def mnist_dir(tmp_path):
    """A tiny MNIST directory: 40 training and 20 test records of 28 x 28."""
    r = np.random.default_rng(7)
    directory = tmp_path / "mnist"
    directory.mkdir()
    for split, n in (("train", 40), ("test", 20)):
        labels = np.arange(n) % 10
        images = r.integers(0, 60, size=(n, 28, 28))
        for i, label in enumerate(labels):
            images[i, 2 * label:2 * label + 6, 4:12] = 255
        files = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte") if split == "train" else ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
        write_idx(directory, files, images, labels)
    return directory


@pytest.fixture
def cifar_dir(tmp_path):
    """Six tiny CIFAR-10 batch files of 4 records each."""
    r = np.random.default_rng(9)
    directory = tmp_path / "cifar"
    directory.mkdir()
    for name in CIFAR_FILES["train"] + CIFAR_FILES["test"]:
        labels = r.integers(0, 10, size=4)
        write_cifar(directory, name, r.integers(0, 256, size=(4, 3, 32, 32)), labels)
    return directory


@pytest.fixture
def real_data_dir():
    root = os.environ.get("LABNN_DATA_DIR")
    if not root or not Path(root).is_dir():
        pytest.skip("LABNN_DATA_DIR not set")
    return Path(root)

