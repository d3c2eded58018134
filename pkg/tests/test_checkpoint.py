import struct

import numpy as np
import pytest

from models.builder import build
from store.checkpoint_store import MAGIC, CheckpointStore, decode_checkpoint, encode_checkpoint
from tensor.bits import BitTensor
from tensor.real import RealTensor
from utils.exceptions import CheckpointFormatError


@pytest.fixture
def tensors(rng):
    return {
        "stem.weight": RealTensor(rng.normal(size=(4, 1, 3, 3)).astype(np.float32)),
        "stage1.layer1.weight_bits": BitTensor.from_bool(rng.random((2, 3, 4, 70)) < 0.5),
        "classifier.bias": RealTensor(np.arange(3, dtype=np.float32).reshape(1, 3, 1, 1)),
    }


def test_round_trip_preserves_names_order_and_values(tmp_path, tensors):
    store = CheckpointStore()
    path = store.save(tmp_path / "model.labc", tensors)
    restored = store.load(path)
    assert list(restored) == list(tensors)
    np.testing.assert_array_equal(restored["stem.weight"].data, tensors["stem.weight"].data)
    assert restored["stage1.layer1.weight_bits"] == tensors["stage1.layer1.weight_bits"]


def test_header_layout(tensors):
    data = encode_checkpoint(tensors)
    assert data[:4] == MAGIC
    assert struct.unpack("<II", data[4:12]) == (1, 3)
    (name_len,) = struct.unpack("<H", data[12:14])
    assert data[14:14 + name_len] == b"stem.weight"


def test_bad_magic(tensors):
    data = encode_checkpoint(tensors)
    with pytest.raises(CheckpointFormatError, match="magic"):
        decode_checkpoint(b"LABX" + data[4:])


def test_truncation_and_trailing_bytes(tensors):
    data = encode_checkpoint(tensors)
    with pytest.raises(CheckpointFormatError, match="Truncated"):
        decode_checkpoint(data[:-1])
    with pytest.raises(CheckpointFormatError, match="trailing"):
        decode_checkpoint(data + b"\0")


def test_missing_file_is_a_format_error(tmp_path):
    with pytest.raises(CheckpointFormatError):
        CheckpointStore().load(tmp_path / "absent.labc")


def test_list_tensors(tmp_path, tensors):
    store = CheckpointStore()
    listing = store.list_tensors(store.save(tmp_path / "model.labc", tensors))
    assert listing[0] == ("stem.weight", "real32", (4, 1, 3, 3))
    assert listing[1] == ("stage1.layer1.weight_bits", "bits", (2, 3, 4, 70))


def test_identical_models_give_identical_bytes(make_spec):
    spec = make_spec(binarizer="lab")
    first = encode_checkpoint(build(spec, seed=5).state_tensors())
    second = encode_checkpoint(build(spec, seed=5).state_tensors())
    assert first == second
    assert first != encode_checkpoint(build(spec, seed=6).state_tensors())
