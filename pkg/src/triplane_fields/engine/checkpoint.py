"""Parameter checkpoints: flat little-endian f32 blob + JSON descriptor."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor


def save_checkpoint(params: dict, path, extra: dict | None = None):
    """Write {name: Tensor} to `path` (blob) and `path`.json (descriptor)."""
    path = Path(path)
    names = sorted(params)
    descriptor = {"params": [], "extra": extra or {}}
    offset = 0
    with open(path, "wb") as fh:
        for name in names:
            arr = params[name].data.astype("<f4")
            fh.write(arr.tobytes())
            descriptor["params"].append(
                {"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(descriptor, fh, indent=1)


def load_checkpoint(path, requires_grad=True, dtype=np.float32):
    """Return ({name: Tensor}, extra) from a checkpoint pair."""
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        descriptor = json.load(fh)
    blob = np.frombuffer(path.read_bytes(), dtype="<f4")
    params = {}
    for entry in descriptor["params"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = blob[entry["offset"]:entry["offset"] + size].reshape(entry["shape"])
        params[entry["name"]] = Tensor(arr.astype(dtype, copy=True),
                                       requires_grad=requires_grad)
    return params, descriptor.get("extra", {})
