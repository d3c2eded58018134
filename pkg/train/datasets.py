"""
Dataset ingestion: MNIST (IDX files) and CIFAR-10 (binary batches).

Images are normalized with fixed per-dataset constants, so a checkpoint
evaluates without stored statistics. MNIST files may be gzip-compressed.
"""

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from config.settings import settings
from tensor.real import RealTensor
from utils.exceptions import DatasetFormatError
from utils.logger import get_logger

logger = get_logger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CIFAR_RECORD = 3073
NUM_CLASSES = 10

MNIST_MEAN, MNIST_STD = (0.1307,), (0.3081,)
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}

KIND_ALIASES = {
    "mnist": "mnist-idx",
    "mnist-idx": "mnist-idx",
    "cifar10": "cifar10-binary",
    "cifar10-binary": "cifar10-binary",
}


@dataclass
class DatasetHandle:
    """
    A loaded dataset split.

    Attributes:
        kind: "mnist-idx" or "cifar10-binary".
        split: "train" or "test".
        images: (N, C, H, W) normalized float32 images.
        labels: (N,) int64 class indices.
        mean, std: Per-channel normalization constants applied to [0, 1] pixels.
    """

    kind: str
    split: str
    images: np.ndarray
    labels: np.ndarray
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    num_classes: int = NUM_CLASSES

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def name(self) -> str:
        return "mnist" if self.kind == "mnist-idx" else "cifar10"

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, n: int) -> "DatasetHandle":
        """The first n records."""
        return replace(self, images=self.images[:n], labels=self.labels[:n])

    def batches(
        self,
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
        augment: bool = False,
        drop_last: bool = False,
    ) -> Iterator[Tuple[RealTensor, np.ndarray]]:
        """
        Iterate (images, labels) batches.

        With `rng` the order is a seeded permutation, otherwise file order.
        `augment` applies a random horizontal flip and a 4-pixel random crop
        (CIFAR-10 only) and needs `rng`.
        """
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start:start + batch_size]
            if drop_last and len(index) < batch_size:
                break
            images = self.images[index]
            if augment and rng is not None and self.kind == "cifar10-binary":
                images = flip_and_crop(images, rng)
            yield RealTensor(images), self.labels[index]


def flip_and_crop(images: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Random horizontal flip and random crop from a zero-padded image, per sample."""
    n, _, h, w = images.shape
    flips = rng.random(n) < 0.5
    images = np.where(flips[:, None, None, None], images[..., ::-1], images)
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    out = np.empty_like(images)
    for i, (dy, dx) in enumerate(offsets):
        out[i] = padded[i, :, dy:dy + h, dx:dx + w]
    return out


def _read_bytes(path: Path) -> bytes:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as f:
                return f.read()
        return path.read_bytes()
    except (OSError, EOFError) as e:
        logger.error(f"✗ Cannot read dataset file {path}: {e}")
        raise DatasetFormatError(f"Cannot read dataset file {path}: {e}") from e


def _find(directory: Path, name: str) -> Path:
    for candidate in (directory / name, directory / f"{name}.gz"):
        if candidate.is_file():
            return candidate
    raise DatasetFormatError(f"Dataset file {name} not found in {directory}")


def read_idx_images(path: Path) -> np.ndarray:
    """(N, rows, cols) uint8 images of an IDX3 file."""
    data = _read_bytes(path)
    if len(data) < 16:
        raise DatasetFormatError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise DatasetFormatError(f"{path}: bad IDX image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    expected = 16 + count * rows * cols
    if len(data) != expected:
        raise DatasetFormatError(f"{path}: {len(data)} bytes, header announces {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: Path) -> np.ndarray:
    """(N,) uint8 labels of an IDX1 file."""
    data = _read_bytes(path)
    if len(data) < 8:
        raise DatasetFormatError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise DatasetFormatError(f"{path}: bad IDX label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    if len(data) != 8 + count:
        raise DatasetFormatError(f"{path}: {len(data)} bytes, header announces {8 + count}")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def read_cifar_batch(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """(N, 3, 32, 32) uint8 images and (N,) labels of a CIFAR-10 binary batch."""
    data = _read_bytes(path)
    if not data or len(data) % CIFAR_RECORD:
        raise DatasetFormatError(f"{path}: {len(data)} bytes is not a whole number of {CIFAR_RECORD}-byte records")
    records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32), records[:, 0]


def _normalize(pixels: np.ndarray, mean: Tuple[float, ...], std: Tuple[float, ...]) -> np.ndarray:
    scaled = pixels.astype(np.float32) / 255.0
    m = np.asarray(mean, dtype=np.float32).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float32).reshape(1, -1, 1, 1)
    return np.ascontiguousarray((scaled - m) / s, dtype=np.float32)


def _check_labels(labels: np.ndarray, source: Path) -> np.ndarray:
    if labels.size and labels.max() >= NUM_CLASSES:
        raise DatasetFormatError(f"{source}: label {int(labels.max())} outside 0..{NUM_CLASSES - 1}")
    return labels.astype(np.int64)


def resolve_data_dir(path: Optional[Union[str, Path]], dataset: str) -> Path:
    """
    Directory holding a dataset's files.

    Falls back to LABNN_DATA_DIR when `path` is None, and accepts either
    the directory itself or a root containing `<dataset>/` (or CIFAR-10's
    `cifar-10-batches-bin/`).
    """
    root = path if path is not None else settings.LABNN_DATA_DIR
    if root is None:
        raise DatasetFormatError("No dataset directory given and LABNN_DATA_DIR is not set")
    root = Path(root)
    marker = MNIST_FILES["test"][0] if dataset == "mnist" else CIFAR_FILES["test"][0]
    for candidate in (root / dataset, root / "cifar-10-batches-bin", root):
        if any((candidate / name).is_file() for name in (marker, f"{marker}.gz")):
            return candidate
    return root


def load_dataset(path: Union[str, Path], kind: str, split: str = "train") -> DatasetHandle:
    """
    Load one split of MNIST or CIFAR-10.

    Args:
        path: Directory containing the dataset files.
        kind: "mnist", "mnist-idx", "cifar10" or "cifar10-binary".
        split: "train" or "test".

    Returns:
        DatasetHandle: Normalized images and labels.

    Raises:
        DatasetFormatError: On missing files, bad magic, truncation,
            mismatched counts or out-of-range labels.
    """
    if kind not in KIND_ALIASES:
        raise DatasetFormatError(f"Unknown dataset kind {kind!r}")
    if split not in ("train", "test"):
        raise DatasetFormatError(f"Unknown split {split!r}")
    kind = KIND_ALIASES[kind]
    directory = Path(path)

    if kind == "mnist-idx":
        image_file, label_file = (_find(directory, name) for name in MNIST_FILES[split])
        pixels = read_idx_images(image_file)
        labels = _check_labels(read_idx_labels(label_file), label_file)
        if pixels.shape[0] != labels.shape[0]:
            raise DatasetFormatError(f"{image_file}: {pixels.shape[0]} images but {labels.shape[0]} labels")
        images = _normalize(pixels[:, None], MNIST_MEAN, MNIST_STD)
        handle = DatasetHandle(kind, split, images, labels, MNIST_MEAN, MNIST_STD)
    else:
        parts: List[Tuple[np.ndarray, np.ndarray]] = []
        for name in CIFAR_FILES[split]:
            batch_file = _find(directory, name)
            pixels, labels = read_cifar_batch(batch_file)
            parts.append((pixels, _check_labels(labels, batch_file)))
        images = _normalize(np.concatenate([p for p, _ in parts]), CIFAR_MEAN, CIFAR_STD)
        handle = DatasetHandle(kind, split, images, np.concatenate([y for _, y in parts]), CIFAR_MEAN, CIFAR_STD)

    logger.info(f"✓ Loaded {handle.name} {split}: {len(handle)} records of {handle.image_shape}")
    return handle
