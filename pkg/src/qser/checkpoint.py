"""QSER checkpoint files.

Byte layout (all integers little-endian):

    4   magic b"QSER"
    u32 format version (1)
    u32 metadata length M
    M   UTF-8 JSON metadata: model spec, label table, feature config,
        normalisation stats, feature hash
    u32 array count A
    A x { u16 name length, name (ASCII), u32 ndim, u32 dims[ndim],
          float64 data (row-major) }
    u32 CRC-32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CompatibilityError
from .features import FeatureConfig, NormStats, feature_hash
from .training import QCNN, ModelSpec

MAGIC = b"QSER"
VERSION = 1


@dataclass
class ModelCheckpoint:
    model: QCNN
    labels: list
    feature_config: FeatureConfig
    stats: NormStats

    @property
    def spec(self) -> ModelSpec:
        return self.model.spec

    @property
    def feature_hash(self) -> str:
        return feature_hash(self.feature_config, self.stats)


def payload_overhead(spec: ModelSpec) -> int:
    """Bytes of a checkpoint for ``spec`` that are neither parameters nor JSON metadata."""
    size = 4 + 4 + 4 + 4 + 4
    for name, shape in spec.param_shapes().items():
        size += 2 + len(name) + 4 + 4 * len(shape)
    return size


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    meta = {
        "spec": ckpt.spec.to_dict(),
        "labels": list(ckpt.labels),
        "feature_config": ckpt.feature_config.to_dict(),
        "stats": {"ref_power": ckpt.stats.ref_power, "db_min": ckpt.stats.db_min, "db_max": ckpt.stats.db_max},
        "feature_hash": ckpt.feature_hash,
    }
    meta_b = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_b)), meta_b, struct.pack("<I", len(ckpt.model.params))]
    for name, shape in ckpt.spec.param_shapes().items():
        arr = ckpt.model.params[name]
        nb = name.encode("ascii")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CompatibilityError("corrupt checkpoint: truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> ModelCheckpoint:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise CompatibilityError("corrupt checkpoint: bad magic")
    if len(buf) < 12:
        raise CompatibilityError("corrupt checkpoint: truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    r = _Reader(body)
    r.read(4)
    version, meta_len = r.unpack("<II")
    if version != VERSION:
        raise CompatibilityError(f"unsupported checkpoint version {version}")
    if zlib.crc32(body) != crc:
        raise CompatibilityError("corrupt checkpoint: checksum mismatch")
    try:
        meta = json.loads(r.read(meta_len).decode())
        spec = ModelSpec(**meta["spec"])
        fcfg = FeatureConfig(**meta["feature_config"])
        stats = NormStats(**meta["stats"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CompatibilityError(f"corrupt checkpoint metadata: {exc}") from exc
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.read(nlen).decode("ascii")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(r.read(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(body):
        raise CompatibilityError("corrupt checkpoint: trailing bytes")
    try:
        model = QCNN(spec, params)
    except ValueError as exc:
        raise CompatibilityError(f"checkpoint parameters do not match its spec: {exc}") from exc
    ckpt = ModelCheckpoint(model, meta["labels"], fcfg, stats)
    if ckpt.feature_hash != meta["feature_hash"]:
        raise CompatibilityError("checkpoint feature hash does not match its metadata")
    return ckpt


def save(path, ckpt: ModelCheckpoint) -> int:
    data = to_bytes(ckpt)
    Path(path).write_bytes(data)
    return len(data)


def load(path) -> ModelCheckpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CompatibilityError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(buf)
