"""Single-file tensor container used for model checkpoints and clip caches.

Layout: one ASCII line holding the byte length of the JSON header, the
header itself (config dict plus a tensor manifest with names, shapes and
byte offsets), a newline, then raw little-endian float32 data in manifest
order. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

FORMAT_TAG = "stmae-tensors-v1"


def save_tensors(path, tensors, config=None):
    """Write `tensors` (dict name -> array) and a JSON-able `config`."""
    manifest = []
    offset = 0
    blocks = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blocks.append(arr)
        offset += arr.nbytes
    header = json.dumps({
        "format": FORMAT_TAG,
        "config": config if config is not None else {},
        "tensors": manifest,
    }).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(f"{len(header)}\n".encode("ascii"))
            fh.write(header)
            fh.write(b"\n")
            for block in blocks:
                fh.write(block.astype("<f4").tobytes())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_tensors(path):
    """Read a container; returns (dict name -> float32 array, config dict)."""
    with open(path, "rb") as fh:
        header_len = int(fh.readline().decode("ascii").strip())
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: not a {FORMAT_TAG} container")
        fh.read(1)  # newline after header
        data = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = flat.reshape(shape).copy()
    return tensors, header["config"]
