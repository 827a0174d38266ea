"""Named-array binary container (``PCT1``) used for checkpoints.

Layout, little-endian throughout::

    b"PCT1"  u32 count
    repeated count times:
        u16 name_len  name (UTF-8)  u8 rank  u32 dim * rank  f64 * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"PCT1"


class ArrayFormatError(ValueError):
    pass


def dumps_arrays(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ArrayFormatError(f"array name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads_arrays(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise ArrayFormatError("bad magic: not a PCT1 file")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise ArrayFormatError("truncated PCT1 data")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ArrayFormatError("array name is not valid UTF-8") from exc
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        if name in out:
            raise ArrayFormatError(f"duplicate array name {name!r}")
        out[name] = values.reshape(dims)
    if pos != len(buf):
        raise ArrayFormatError("trailing bytes after PCT1 payload")
    return out


def save_arrays(path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_arrays(arrays))


def load_arrays(path) -> dict[str, np.ndarray]:
    return loads_arrays(Path(path).read_bytes())
