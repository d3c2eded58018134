"""
Checkpoint store for model tensors.

This module reads and writes the bit-exact `LABC` checkpoint format: magic
bytes, a little-endian version and tensor count, then per tensor its UTF-8
name, a dtype code (0 = real-32, 1 = bit-packed), rank 4, four dims and the
little-endian payload. Tensors are written in mapping order, so identical
models produce identical bytes.
"""

import struct
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from tensor.bits import BitTensor, words_per_row
from tensor.real import RealTensor
from tensor.shape import Shape4
from utils.exceptions import CheckpointFormatError, LabnnException
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"LABC"
VERSION = 1
DTYPE_REAL32 = 0
DTYPE_BITS = 1

StoredTensor = Union[RealTensor, BitTensor]


def encode_checkpoint(tensors: Mapping[str, StoredTensor]) -> bytes:
    """
    Serialize named tensors into checkpoint bytes.

    Raises:
        CheckpointFormatError: If a name is too long or a value is not a tensor.
    """
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointFormatError(f"Tensor name too long: {name[:40]}...")
        if isinstance(tensor, RealTensor):
            dtype, dims = DTYPE_REAL32, tensor.data.shape
            payload = np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()
        elif isinstance(tensor, BitTensor):
            dtype, dims = DTYPE_BITS, tensor.shape.as_tuple()
            payload = np.ascontiguousarray(tensor.words, dtype="<u8").tobytes()
        else:
            raise CheckpointFormatError(f"Cannot store {type(tensor).__name__} under {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB4I", dtype, 4, *dims))
        chunks.append(payload)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointFormatError(f"Truncated checkpoint while reading {what}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Dict[str, StoredTensor]:
    """
    Parse checkpoint bytes into an ordered name -> tensor mapping.

    Raises:
        CheckpointFormatError: On bad magic, version, dtype, rank or truncation.
    """
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("Bad checkpoint magic, expected LABC")
    version, count = reader.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointFormatError(f"Unsupported checkpoint version {version}")
    tensors: Dict[str, StoredTensor] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        name = reader.take(name_len, "name").decode("utf-8")
        dtype, rank, *dims = reader.unpack("<BB4I", f"header of {name!r}")
        if rank != 4:
            raise CheckpointFormatError(f"Tensor {name!r} has rank {rank}, only 4 is supported")
        shape = Shape4.of(dims)
        if dtype == DTYPE_REAL32:
            raw = reader.take(shape.numel * 4, f"payload of {name!r}")
            values = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape.as_tuple())
            tensors[name] = RealTensor(values, name=name)
        elif dtype == DTYPE_BITS:
            word_count = shape.n * shape.c * shape.h * words_per_row(shape.w)
            raw = reader.take(word_count * 8, f"payload of {name!r}")
            words = np.frombuffer(raw, dtype="<u8").reshape(shape.n, shape.c, shape.h, -1)
            tensors[name] = BitTensor(shape, words.copy())
        else:
            raise CheckpointFormatError(f"Unknown dtype code {dtype} for {name!r}")
    if reader.offset != len(data):
        raise CheckpointFormatError(f"{len(data) - reader.offset} trailing bytes after last tensor")
    return tensors


class CheckpointStore:
    """
    File-backed storage for named model tensors.

    Wraps encoding/decoding with logging and error translation so callers
    only see CheckpointFormatError.
    """

    def save(self, path: Union[str, Path], tensors: Mapping[str, StoredTensor]) -> Path:
        """
        Write tensors to `path`.

        Args:
            path (Union[str, Path]): Destination file.
            tensors (Mapping[str, StoredTensor]): Named tensors, written in order.

        Returns:
            Path: The written path.

        Raises:
            CheckpointFormatError: If encoding or writing fails.
        """
        path = Path(path)
        try:
            payload = encode_checkpoint(tensors)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(payload)
            logger.info(f"✓ Saved checkpoint with {len(tensors)} tensors: {path}")
            return path
        except LabnnException:
            raise
        except Exception as e:
            logger.error(f"✗ Failed to save checkpoint {path}: {str(e)}")
            raise CheckpointFormatError(f"Failed to save checkpoint: {str(e)}")

    def load(self, path: Union[str, Path]) -> Dict[str, StoredTensor]:
        """
        Read all tensors from `path`.

        Raises:
            CheckpointFormatError: If the file is missing or malformed.
        """
        path = Path(path)
        try:
            tensors = decode_checkpoint(path.read_bytes())
            logger.info(f"✓ Loaded checkpoint with {len(tensors)} tensors: {path}")
            return tensors
        except CheckpointFormatError as e:
            logger.error(f"✗ Malformed checkpoint {path}: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"✗ Failed to load checkpoint {path}: {str(e)}")
            raise CheckpointFormatError(f"Failed to load checkpoint: {str(e)}")

    def list_tensors(self, path: Union[str, Path]) -> List[Tuple[str, str, Tuple[int, int, int, int]]]:
        """Name, dtype label and shape of every stored tensor."""
        listing = []
        for name, tensor in self.load(path).items():
            if isinstance(tensor, RealTensor):
                listing.append((name, "real32", tensor.data.shape))
            else:
                listing.append((name, "bits", tensor.shape.as_tuple()))
        logger.info(f"ℹ Checkpoint {path} holds {len(listing)} tensors")
        return listing


# Global store instance
_store_instance: Optional[CheckpointStore] = None


def get_checkpoint_store() -> CheckpointStore:
    """
    Get or create the global checkpoint store instance.

    Returns:
        CheckpointStore: The global store instance.
    """
    global _store_instance
    if _store_instance is None:
        _store_instance = CheckpointStore()
    return _store_instance
