"""Parameter checkpoints: a binary blob of shape-prefixed little-endian float64
arrays plus a JSON manifest describing how to reassemble them.

Blob layout, repeated per array::

    <u4 ndim> <u8 dim_0> ... <u8 dim_{ndim-1}> <f8 data, C order>
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def write_arrays(path, arrays) -> None:
    with open(path, "wb") as fh:
        for a in arrays:
            a = np.asarray(a, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(a.tobytes())


def read_arrays(path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(raw):
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        out.append(a.copy())
    return out


def save_checkpoint(stem, arrays, manifest: dict) -> tuple[Path, Path]:
    """Write ``<stem>.bin`` and ``<stem>.json``."""
    stem = Path(stem)
    bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    write_arrays(bin_path, arrays)
    meta = dict(manifest)
    meta["shapes"] = [list(np.shape(a)) for a in arrays]
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return bin_path, json_path


def load_checkpoint(stem) -> tuple[list[np.ndarray], dict]:
    stem = Path(stem)
    arrays = read_arrays(stem.with_suffix(".bin"))
    meta = json.loads(stem.with_suffix(".json").read_text())
    if [list(a.shape) for a in arrays] != meta.get("shapes"):
        raise ValueError("checkpoint blob does not match its manifest")
    return arrays, meta
