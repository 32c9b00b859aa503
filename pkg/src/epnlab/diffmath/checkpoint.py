"""Binary checkpoint format for parameter sets.

Layout: the 10 ASCII bytes ``EPNCKPT v1``, then one record per tensor:
name length (u64 LE), name (UTF-8), rank (u64 LE), each dim (u64 LE),
values as float32 LE in row-major order. Records run to end of file.
Round-trips are bit-exact for float32 parameters.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .params import ParameterSet

MAGIC = b"EPNCKPT v1"


class CheckpointFormatError(ValueError):
    pass


def save_params(params: ParameterSet, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, t in params.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<Q", len(raw)))
            f.write(raw)
            dims = t.data.shape
            f.write(struct.pack("<Q", len(dims)))
            for d in dims:
                f.write(struct.pack("<Q", d))
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_params(path) -> ParameterSet:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"bad checkpoint header in {path}")
    off = len(MAGIC)
    params = ParameterSet()
    while off < len(blob):
        (name_len,) = struct.unpack_from("<Q", blob, off)
        off += 8
        name = blob[off: off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<Q", blob, off)
        off += 8
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=off).copy()
        off += 4 * count
        params.add(name, values.reshape(dims))
    return params
