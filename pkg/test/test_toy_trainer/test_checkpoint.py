import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from errors import CorruptFileError
from toy_trainer import load_tensors, save_tensors


def test_tensors_survive_the_dump(tmp_path):
    tensors = {
        "matrix": np.arange(6, dtype=np.float64).reshape(2, 3) / 7,
        "vector": np.array([np.pi, -0.0, 1e-300]),
        "scalar": np.array([2.5]),
    }
    save_tensors(tmp_path / "ckpt", tensors, {"context_window": 4})
    loaded, metadata = load_tensors(tmp_path / "ckpt")
    assert list(loaded) == ["matrix", "vector", "scalar"]
    for name, tensor in tensors.items():
        assert_array_equal(loaded[name], tensor)
    assert metadata == {"context_window": 4}


def test_manifest_lists_offsets(tmp_path):
    save_tensors(tmp_path, {"a": np.zeros(2), "b": np.zeros((1, 3))})
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert [(e["name"], e["offset"], e["length"]) for e in manifest["tensors"]] == [
        ("a", 0, 16),
        ("b", 16, 24),
    ]
    assert (tmp_path / "tensors.bin").stat().st_size == 40


def test_truncated_tensor_file(tmp_path):
    save_tensors(tmp_path, {"a": np.zeros(4)})
    (tmp_path / "tensors.bin").write_bytes(b"\0" * 8)
    with pytest.raises(CorruptFileError, match="truncated"):
        load_tensors(tmp_path)
