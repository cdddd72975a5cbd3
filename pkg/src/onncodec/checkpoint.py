"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"ONCK"  u16 version
    u32 config_len, config JSON (utf-8)
    u32 tensor_count
    per tensor: u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims, float64 '<f8' values
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib

import numpy as np

from .codec import JointCompressionModel, ModelConfig

MAGIC = b"ONCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(model: JointCompressionModel, config: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<H", VERSION))
    cfg = json.dumps(config, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(cfg)) + cfg)
    params = list(model.named_parameters())
    buf.write(struct.pack("<I", len(params)))
    for name, p in params:
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", p.ndim))
        buf.write(struct.pack(f"<{p.ndim}I", *p.shape))
        buf.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> tuple[JointCompressionModel, dict]:
    if len(blob) < 10 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 6
    (n,) = struct.unpack_from("<I", body, off)
    off += 4
    config = json.loads(body[off : off + n].decode())
    off += n
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off : off + ln].decode()
        off += ln
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(body, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    model = JointCompressionModel(ModelConfig.from_dict(config.get("model", {})))
    load_state(model, tensors)
    return model, config


def load_state(model: JointCompressionModel, tensors: dict) -> None:
    params = dict(model.named_parameters())
    missing = set(params) - set(tensors)
    extra = set(tensors) - set(params)
    if missing or extra:
        raise CheckpointError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            raise CheckpointError(f"{name}: shape {tensors[name].shape} != {p.shape}")
        p.data = np.array(tensors[name])


def save(path: str | os.PathLike, model: JointCompressionModel, config: dict) -> bytes:
    blob = dumps(model, config)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


def load(path: str | os.PathLike) -> tuple[JointCompressionModel, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())


def fingerprint(model: JointCompressionModel) -> int:
    """CRC32 over parameter names and values; ties bitstreams to the weights that wrote them."""
    crc = 0
    for name, p in model.named_parameters():
        crc = zlib.crc32(name.encode(), crc)
        crc = zlib.crc32(np.ascontiguousarray(p.data, dtype="<f8").tobytes(), crc)
    return crc
