"""Binary prompt checkpoints.

Layout, little-endian throughout::

    b"PTXT"  u32 version
    u32 N   u32 d   u32 C   u64 seed   u32 bucket_count
    C x (u32 byte length, UTF-8 class name)
    N*d f64 coarse rows, then N*d f64 fine rows (row-major)
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .corpus import BUCKET_COUNT, tokenize
from .encoder import PromptBank
from .errors import CorruptCheckpoint, VersionMismatch

MAGIC = b"PTXT"
VERSION = 1

_HEAD = struct.Struct("<4sI")
_DIMS = struct.Struct("<IIIQI")
_LEN = struct.Struct("<I")


def encode_checkpoint(bank: PromptBank, bucket_count: int = BUCKET_COUNT) -> bytes:
    parts = [
        _HEAD.pack(MAGIC, VERSION),
        _DIMS.pack(bank.n_prompt, bank.dim, bank.num_classes, bank.seed, bucket_count),
    ]
    for name in bank.class_names:
        raw = name.encode("utf-8")
        parts.append(_LEN.pack(len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(bank.coarse, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(bank.fine, dtype="<f8").tobytes())
    return b"".join(parts)


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(bank: PromptBank, path: str | Path, bucket_count: int = BUCKET_COUNT) -> None:
    write_atomic(path, encode_checkpoint(bank, bucket_count))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct) -> tuple:
        return st.unpack(self.take(st.size))


def decode_checkpoint(
    data: bytes, expected_dim: int | None = None
) -> tuple[PromptBank, int]:
    """Parse checkpoint bytes into a bank and the recorded bucket count."""
    r = _Reader(data)
    magic, version = r.unpack(_HEAD)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, reader supports {VERSION}")
    n, d, c, seed, buckets = r.unpack(_DIMS)
    if expected_dim is not None and d != expected_dim:
        raise VersionMismatch(f"checkpoint has d={d}, expected d={expected_dim}")
    if n < 1 or d < 1 or c < 1:
        raise CorruptCheckpoint(f"invalid sizes N={n} d={d} C={c}")
    names = []
    for _ in range(c):
        (length,) = r.unpack(_LEN)
        try:
            names.append(r.take(length).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorruptCheckpoint("class name is not UTF-8") from exc
    count = n * d
    coarse = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(n, d)
    fine = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(n, d)
    if r.pos != len(data):
        raise CorruptCheckpoint(f"{len(data) - r.pos} trailing bytes")
    seqs = [tokenize(name, buckets) for name in names]
    return PromptBank(coarse, fine, tuple(names), tuple(seqs), int(seed)), int(buckets)


def load_checkpoint(path: str | Path, expected_dim: int | None = None) -> PromptBank:
    return decode_checkpoint(Path(path).read_bytes(), expected_dim)[0]
