"""
Flat tensor dump.

``tensors.bin`` is the concatenation of every tensor as little-endian float64
(C order). ``manifest.json`` lists, in file order, each tensor's name, shape,
dtype (``<f8``), byte offset and byte length, plus free-form metadata.
"""
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from errors import CorruptFileError

MANIFEST = "manifest.json"
TENSORS = "tensors.bin"
DTYPE = "<f8"


def save_tensors(
    directory: Path, tensors: Mapping[str, np.ndarray], metadata: dict = None
) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with (directory / TENSORS).open("wb") as out:
        for name, tensor in tensors.items():
            data = np.ascontiguousarray(tensor, dtype=DTYPE).tobytes(order="C")
            out.write(data)
            entries.append(
                {
                    "name": name,
                    "shape": list(np.shape(tensor)),
                    "dtype": DTYPE,
                    "offset": offset,
                    "length": len(data),
                }
            )
            offset += len(data)
    manifest = {"byte_order": "little", "tensors": entries, "metadata": metadata or {}}
    (directory / MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_tensors(directory: Path) -> tuple[dict[str, np.ndarray], dict]:
    manifest_path = directory / MANIFEST
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptFileError(manifest_path, exc.lineno, exc.msg) from exc
    data = (directory / TENSORS).read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        start, length = entry["offset"], entry["length"]
        if start + length > len(data):
            raise CorruptFileError(directory / TENSORS, 1, f"{entry['name']} truncated")
        tensors[entry["name"]] = (
            np.frombuffer(data[start : start + length], dtype=entry["dtype"])
            .reshape(entry["shape"])
            .astype(np.float64)
        )
    return tensors, manifest.get("metadata", {})
