"""Integrity-checked binary container for named tensors plus run metadata.

Layout (all integers little-endian):

    magic "IERCKPT1"
    u32 tensor count
    per tensor: u16 name length, name (UTF-8), u8 rank, rank x u32 dims,
                u8 dtype tag (0 = f32, 1 = f64), raw row-major payload
    u32 metadata length, metadata (UTF-8 JSON)
    u32 CRC-32 of all preceding bytes

The same container stores model checkpoints (phase "source"/"adapted") and
embedding dumps (phase "embeddings").
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"IERCKPT1"

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


class CheckpointError(Exception):
    """Base class for checkpoint load/save failures."""


class BadMagicError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class FormatError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class DigestMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    phase: str
    step: int
    class_names: list[str]
    config_digest: str
    seed: int
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        meta = {
            "phase": self.phase,
            "step": self.step,
            "class_names": list(self.class_names),
            "config_digest": self.config_digest,
            "seed": self.seed,
        }
        meta.update(self.extra)
        return meta


def save_bytes(ckpt: Checkpoint) -> bytes:
    """Serialize; tensors are written in sorted-name order for determinism."""
    if not ckpt.tensors:
        raise FormatError("refusing to write an empty tensor table")
    parts = [MAGIC, struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name])
        if arr.dtype not in _DTYPE_TAGS:
            raise FormatError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<B", _DTYPE_TAGS[arr.dtype]))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    meta = json.dumps(ckpt.metadata(), sort_keys=True, separators=(",", ":")).encode()
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(
                f"truncated while reading {what}: need {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_bytes(data: bytes, expected_digest: str | None = None) -> Checkpoint:
    if len(data) < len(MAGIC):
        raise TruncatedError(f"file too short ({len(data)} bytes)")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}")
    if len(data) < len(MAGIC) + 4:
        raise TruncatedError("missing checksum")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    r = _Reader(data[:-4])
    r.take(len(MAGIC), "magic")
    count = r.u32("tensor count")
    if count == 0:
        raise FormatError("empty tensor table")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name = r.take(r.u16(f"tensor {i} name length"), f"tensor {i} name").decode("utf-8")
        rank = r.u8(f"tensor {name!r} rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"tensor {name!r} dims"))
        tag = r.u8(f"tensor {name!r} dtype")
        if tag not in _TAG_DTYPES:
            raise FormatError(f"tensor {name!r} has unknown dtype tag {tag}")
        dtype = _TAG_DTYPES[tag]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        payload = r.take(n_bytes, f"tensor {name!r} payload")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=dtype.newbyteorder("<")).astype(
            dtype
        ).reshape(dims)
    meta_raw = r.take(r.u32("metadata length"), "metadata")
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after metadata")
    try:
        meta = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata is not valid JSON: {exc}") from exc

    known = ("phase", "step", "class_names", "config_digest", "seed")
    missing = [key for key in known if key not in meta]
    if missing:
        raise FormatError(f"metadata missing keys {missing}")
    ckpt = Checkpoint(
        tensors=tensors,
        phase=meta["phase"],
        step=meta["step"],
        class_names=meta["class_names"],
        config_digest=meta["config_digest"],
        seed=meta["seed"],
        extra={k: v for k, v in meta.items() if k not in known},
    )
    if expected_digest is not None and ckpt.config_digest != expected_digest:
        raise DigestMismatchError(
            f"config digest mismatch: checkpoint built for "
            f"{ckpt.config_digest[:12]}..., current config is "
            f"{expected_digest[:12]}..."
        )
    return ckpt


def save_file(path, ckpt: Checkpoint) -> None:
    blob = save_bytes(ckpt)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_file(path, expected_digest: str | None = None) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return load_bytes(data, expected_digest)
