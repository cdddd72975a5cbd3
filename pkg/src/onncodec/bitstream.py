"""Image <-> ``.onnp`` bitstream through the trained model and the range coder.

Layout (little-endian)::

    b"ONNP" u8 version u8 q_index u16 H u16 W u8 pad_right u8 pad_bottom
    u32 z_len  z bytes
    u32 y_len  y bytes
    u32 checksum

``checksum`` is CRC32 over all preceding bytes, with the CRC register seeded
by the model fingerprint (:func:`onncodec.checkpoint.fingerprint`), so a stream
decoded with different weights (hence different tables) is rejected.
Symbols are scanned channel-major, then row-major within a channel.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .checkpoint import fingerprint
from .codec import JointCompressionModel
from .datasets import pad_to_multiple
from .entropy import gaussian_masses, logistic_masses, round_half_away
from .rangecoder import ALPHABET, DecodingError, cdf_from_freqs, quantize_masses, rc_decode, rc_encode

MAGIC = b"ONNP"
VERSION = 1
_HEADER = struct.Struct("<4sBBHHBB")


class BitstreamError(ValueError):
    pass


@dataclass
class Header:
    q_index: int
    height: int
    width: int
    pad_right: int
    pad_bottom: int
    version: int = VERSION


@dataclass
class EncodeResult:
    data: bytes
    y_hat: np.ndarray
    z_hat: np.ndarray
    x_hat: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def num_bits(self) -> int:
        return 8 * len(self.data)


def _z_tables(model: JointCompressionModel):
    loc = model.prior.loc.data
    scale = np.exp(model.prior.log_scale.data)
    return cdf_from_freqs(quantize_masses(logistic_masses(loc, scale, *ALPHABET)))


def _y_tables(mu: np.ndarray, sigma: np.ndarray):
    masses = gaussian_masses(mu.reshape(-1), sigma.reshape(-1), *ALPHABET)
    return cdf_from_freqs(quantize_masses(masses))


def _z_index(shape):
    _, c, h, w = shape
    return np.repeat(np.arange(c), h * w)


def _clip(v: np.ndarray) -> tuple[np.ndarray, int]:
    lo, hi = ALPHABET
    clipped = np.clip(v, lo, hi)
    return clipped, int(np.count_nonzero(clipped != v))


def analyse(model: JointCompressionModel, x: np.ndarray, denoise: bool = True):
    """Inference-mode latents for one padded (3,H,W) image: (y_hat, z_hat, mu, sigma, clipped counts)."""
    with ag.no_grad():
        _, y1 = model.encode_latents(ag.Tensor(x[None]), denoise)
        z = model.ha(y1)
        z_hat, z_clip = _clip(round_half_away(z.data))
        mu, sigma = model.hs(ag.Tensor(z_hat), y1.shape[2:])
        y_hat, y_clip = _clip(round_half_away(y1.data))
    return y_hat, z_hat, mu.data, sigma.data, {"clipped_y": y_clip, "clipped_z": z_clip}


def synthesize(model: JointCompressionModel, y_hat: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    with ag.no_grad():
        x_hat = model.decode_latent(ag.Tensor(y_hat), None).data[0]
    h, w = hw
    return np.clip(x_hat[:, :h, :w], 0.0, 1.0)


def encode_image(model: JointCompressionModel, x: np.ndarray, q_index: int = 0, denoise: bool = True) -> EncodeResult:
    """Compress one (3,H,W) image in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"expected a (3,H,W) image, got {x.shape}")
    h, w = x.shape[1:]
    if h > 0xFFFF or w > 0xFFFF:
        raise ValueError("image dimensions exceed 65535")
    xp, (pb, pr) = pad_to_multiple(x, 16)
    y_hat, z_hat, mu, sigma, diag = analyse(model, xp, denoise)
    z_bytes = rc_encode(z_hat.reshape(-1).astype(np.int64), _z_tables(model), _z_index(z_hat.shape),
                        s_min=ALPHABET[0], validate=False)
    y_cdfs = _y_tables(mu, sigma)
    y_bytes = rc_encode(y_hat.reshape(-1).astype(np.int64), y_cdfs, None, s_min=ALPHABET[0], validate=False)
    head = _HEADER.pack(MAGIC, VERSION, q_index & 0xFF, h, w, pr, pb)
    body = head + struct.pack("<I", len(z_bytes)) + z_bytes + struct.pack("<I", len(y_bytes)) + y_bytes
    crc = zlib.crc32(body, fingerprint(model))
    data = body + struct.pack("<I", crc)
    x_hat = synthesize(model, y_hat, (h, w))
    diag.update(header_bytes=len(head) + 12, z_bytes=len(z_bytes), y_bytes=len(y_bytes))
    return EncodeResult(data, y_hat, z_hat, x_hat, diag)


def parse(data: bytes):
    if len(data) < _HEADER.size + 12:
        raise BitstreamError("bitstream truncated (shorter than the fixed header)")
    magic, version, q, h, w, pr, pb = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BitstreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitstreamError(f"unsupported bitstream version {version}")
    off = _HEADER.size
    (zl,) = struct.unpack_from("<I", data, off)
    off += 4
    z_bytes = data[off : off + zl]
    off += zl
    if off + 4 > len(data):
        raise BitstreamError(f"bitstream truncated inside the z section (byte {off})")
    (yl,) = struct.unpack_from("<I", data, off)
    off += 4
    y_bytes = data[off : off + yl]
    off += yl
    if off + 4 != len(data):
        raise BitstreamError(f"bitstream length {len(data)} inconsistent with section sizes (expected {off + 4})")
    return Header(q, h, w, pr, pb, version), z_bytes, y_bytes


def decode_image(model: JointCompressionModel, data: bytes) -> tuple[np.ndarray, Header]:
    """Inverse of :func:`encode_image`; raises :class:`BitstreamError` on corruption or model mismatch."""
    header, z_bytes, y_bytes = parse(data)
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4], fingerprint(model)) != crc:
        raise BitstreamError("checksum mismatch: corrupted stream or decoded with the wrong model")
    hp, wp = header.height + header.pad_bottom, header.width + header.pad_right
    c, cz = model.config.channels, model.config.hyper_channels
    yh, yw = hp // 16, wp // 16
    zh, zw = -(-yh // 4), -(-yw // 4)
    z_shape = (1, cz, zh, zw)
    try:
        z_sym = rc_decode(z_bytes, cz * zh * zw, _z_tables(model), _z_index(z_shape), s_min=ALPHABET[0])
        z_hat = z_sym.reshape(z_shape).astype(np.float64)
        with ag.no_grad():
            mu, sigma = model.hs(ag.Tensor(z_hat), (yh, yw))
        y_sym = rc_decode(y_bytes, c * yh * yw, _y_tables(mu.data, sigma.data), None, s_min=ALPHABET[0])
    except DecodingError as exc:
        raise BitstreamError(str(exc)) from exc
    y_hat = y_sym.reshape(1, c, yh, yw).astype(np.float64)
    return synthesize(model, y_hat, (header.height, header.width)), header


def estimated_bits(model: JointCompressionModel, x: np.ndarray, denoise: bool = True) -> float:
    """Model rate estimate (inference-mode likelihoods) for one image, in bits."""
    from .entropy import gaussian_likelihood, rate

    xp, _ = pad_to_multiple(np.asarray(x, dtype=np.float64), 16)
    y_hat, z_hat, mu, sigma, _ = analyse(model, xp, denoise)
    with ag.no_grad():
        ly = gaussian_likelihood(ag.Tensor(y_hat), ag.Tensor(mu), ag.Tensor(sigma))
        lz = model.prior.likelihood(ag.Tensor(z_hat))
        return rate(ly).item() + rate(lz).item()

