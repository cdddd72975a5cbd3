"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(buf: bytes, count: int):
    """Parse ``count`` whitespace-separated header fields; returns (fields, offset)."""
    out, i = [], 0
    while len(out) < count:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ImageFormatError("truncated header")
        out.append(buf[i:j])
        i = j
    return out, i + 1  # exactly one whitespace byte precedes the raster


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Return a float64 (3, H, W) array in [0, 1]; grey images are replicated to 3 channels."""
    with open(path, "rb") as fh:
        buf = fh.read()
    (magic, w, h, maxval), off = _tokens(buf, 4)
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: unsupported magic {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit images supported (maxval={maxval})")
    c = 3 if magic == b"P6" else 1
    if len(buf) - off < w * h * c:
        raise ImageFormatError(f"{path}: raster truncated ({len(buf) - off} of {w * h * c} bytes)")
    raster = np.frombuffer(buf, dtype=np.uint8, count=w * h * c, offset=off)
    img = raster.reshape(h, w, c).transpose(2, 0, 1).astype(np.float64) / 255.0
    return np.repeat(img, 3, axis=0) if c == 1 else img


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(np.asarray(img) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_image(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write a (3,H,W) array as P6 or a (1,H,W)/(H,W) array as P5."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise ImageFormatError(f"cannot write {c}-channel image")
    magic = b"P6" if c == 3 else b"P5"
    raster = to_uint8(img).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode() + raster)


def quantize_8bit(img: np.ndarray) -> np.ndarray:
    """Round-trip through 8-bit storage."""
    return to_uint8(img).astype(np.float64) / 255.0
