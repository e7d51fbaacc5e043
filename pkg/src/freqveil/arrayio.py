"""Binary array container used for dataset clips and model checkpoints.

Layout: an 8-byte magic, a little-endian uint32 header length, a UTF-8 JSON
header {"dtype", "shape"}, then the raw C-order array bytes.  Round trips
are bit-exact by construction.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"FVARR001"


class ArrayFormatError(ValueError):
    """Raised when a container file is malformed."""


def write_array(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array)
    header = json.dumps(
        {"dtype": arr.dtype.str, "shape": list(arr.shape)}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        fh.write(arr.tobytes())


def read_array(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ArrayFormatError(f"{path}: bad magic {magic!r}")
        (hlen,) = np.frombuffer(fh.read(4), dtype=np.uint32)
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        dtype = np.dtype(header["dtype"])
        shape = tuple(int(s) for s in header["shape"])
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype)
        if data.size != count:
            raise ArrayFormatError(f"{path}: truncated payload")
    return data.reshape(shape).copy()
