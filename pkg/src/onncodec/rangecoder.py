"""32-bit carry-less range coder (Subbotin style) with 16-bit frequency tables.

Tables are cumulative frequency lists ``cdf`` of length ``n + 1`` with
``cdf[0] == 0``, ``cdf[n] == 2**16`` and every symbol at least one count wide.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .entropy import SIGMA_MIN, gaussian_masses

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_BOT = 1 << 16
_MASK = 0xFFFFFFFF

ALPHABET = (-64, 63)


class EncodingError(ValueError):
    pass


class DecodingError(ValueError):
    pass


@dataclass
class CdfTable:
    cdf: np.ndarray  # int64, length n + 1
    s_min: int

    @property
    def s_max(self) -> int:
        return self.s_min + len(self.cdf) - 2

    @property
    def num_symbols(self) -> int:
        return len(self.cdf) - 1

    def probability(self, s: int) -> float:
        i = s - self.s_min
        return (int(self.cdf[i + 1]) - int(self.cdf[i])) / TOTAL


def quantize_masses(masses: np.ndarray) -> np.ndarray:
    """Integer frequencies summing to 2**16 per row, each >= 1.

    Counts start at floor(mass * 2**16) raised to 1; a positive shortfall is
    handed out by largest remainder, an excess is taken from the widest bin.
    """
    masses = np.atleast_2d(np.asarray(masses, dtype=np.float64))
    rows, n = masses.shape
    if n < 1:
        raise ValueError("empty alphabet")
    if n > TOTAL:
        raise ValueError(f"alphabet of {n} symbols does not fit in {PRECISION}-bit tables")
    masses = np.clip(masses, 0.0, None)
    masses = masses / masses.sum(axis=1, keepdims=True)
    scaled = masses * TOTAL
    base = np.floor(scaled)
    freq = np.maximum(base, 1.0).astype(np.int64)
    remainder = np.where(base >= 1.0, scaled - base, -1.0)
    deficit = TOTAL - freq.sum(axis=1)
    order = np.argsort(-remainder, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(n)[None, :].repeat(rows, 0), axis=1)
    freq += (ranks < np.maximum(deficit, 0)[:, None]).astype(np.int64)
    over = np.minimum(deficit, 0)
    if np.any(over):
        widest = freq.argmax(axis=1)
        freq[np.arange(rows), widest] += over
    if np.any(freq < 1):
        raise AssertionError("frequency quantization produced an empty bin")
    return freq


def cdf_from_freqs(freq: np.ndarray) -> np.ndarray:
    freq = np.atleast_2d(freq)
    out = np.zeros((freq.shape[0], freq.shape[1] + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=out[:, 1:])
    return out


def build_cdf(mu: float, sigma: float, alphabet: tuple[int, int] = ALPHABET,
              sigma_min: float = SIGMA_MIN) -> CdfTable:
    """Table for a discretized Gaussian over ``alphabet`` (end bins take the tails)."""
    s_min, s_max = alphabet
    if s_max < s_min:
        raise ValueError(f"empty alphabet {alphabet}")
    masses = gaussian_masses(np.asarray([mu]), np.asarray([sigma]), s_min, s_max, sigma_min)
    return CdfTable(cdf_from_freqs(quantize_masses(masses))[0], s_min)


def build_cdfs(masses: np.ndarray, s_min: int) -> list[CdfTable]:
    cdfs = cdf_from_freqs(quantize_masses(masses))
    return [CdfTable(row, s_min) for row in cdfs]


def _as_lists(cdfs):
    if isinstance(cdfs, np.ndarray) and cdfs.ndim == 2:
        return cdfs.tolist(), None
    lists, mins = [], []
    for t in cdfs:
        lists.append(np.asarray(t.cdf).tolist())
        mins.append(t.s_min)
    return lists, mins


def _validate(tables):
    for t in tables:
        if t[0] != 0 or t[-1] != TOTAL:
            raise EncodingError("cdf table must start at 0 and end at 2**16")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise EncodingError("cdf table must be strictly increasing")


def rc_encode(symbols: Sequence[int], cdfs, index: Optional[Sequence[int]] = None, s_min: Optional[int] = None,
              validate: bool = True) -> bytes:
    """Encode ``symbols[i]`` with table ``cdfs[index[i]]`` (``index`` defaults to ``i``).

    ``cdfs`` is a list of :class:`CdfTable` or a 2-D integer array of cumulative
    rows sharing ``s_min``.
    """
    tables, mins = _as_lists(cdfs)
    if validate:
        _validate(tables)
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    n = symbols.size
    if index is None:
        if len(tables) != n:
            raise EncodingError(f"{n} symbols but {len(tables)} tables and no index")
        index = np.arange(n)
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    if index.size != n:
        raise EncodingError("index length differs from symbol count")
    if mins is None:
        offsets = symbols - (0 if s_min is None else s_min)
    else:
        offsets = symbols - np.asarray(mins, dtype=np.int64)[index]
    sizes = np.asarray([len(t) - 1 for t in tables], dtype=np.int64)
    bad = (offsets < 0) | (offsets >= sizes[index])
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EncodingError(f"symbol {int(symbols[i])} at position {i} lies outside its table's alphabet")

    out = bytearray()
    low, rng = 0, _MASK
    for t, s in zip(index.tolist(), offsets.tolist()):
        cdf = tables[t]
        c = cdf[s]
        r = rng >> PRECISION
        low += r * c
        rng = r * (cdf[s + 1] - c)
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            out.append(low >> 24)
            rng = (rng << 8) & _MASK
            low = (low << 8) & _MASK
    for _ in range(4):
        out.append(low >> 24)
        low = (low << 8) & _MASK
    return bytes(out)


def rc_decode(data: bytes, count: int, cdfs, index: Optional[Sequence[int]] = None,
              s_min: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`rc_encode` given the same tables in the same order."""
    tables, mins = _as_lists(cdfs)
    if index is None:
        if len(tables) != count:
            raise DecodingError(f"{count} symbols requested but {len(tables)} tables and no index")
        index = range(count)
    else:
        index = np.asarray(index, dtype=np.int64).reshape(-1)
        if index.size != count:
            raise DecodingError("index length differs from symbol count")
        index = index.tolist()
    buf = bytes(data)
    end = len(buf)
    if end < 4:
        raise DecodingError(f"stream truncated: {end} bytes, need at least 4")
    code = int.from_bytes(buf[:4], "big")
    pos = 4
    low, rng = 0, _MASK
    out = [0] * count
    for i, t in enumerate(index):
        cdf = tables[t]
        r = rng >> PRECISION
        target = ((code - low) & _MASK) // r
        if target >= TOTAL:
            raise DecodingError(f"corrupt stream at symbol {i} (byte {pos})")
        s = bisect_right(cdf, target) - 1
        c = cdf[s]
        low += r * c
        rng = r * (cdf[s + 1] - c)
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            if pos >= end:
                raise DecodingError(f"stream truncated at byte {pos} while decoding symbol {i}")
            code = ((code << 8) | buf[pos]) & _MASK
            pos += 1
            rng = (rng << 8) & _MASK
            low = (low << 8) & _MASK
        out[i] = s
    res = np.asarray(out, dtype=np.int64)
    if mins is None:
        return res + (0 if s_min is None else s_min)
    return res + np.asarray(mins, dtype=np.int64)[np.asarray(list(index), dtype=np.int64)]


def information_content(symbols, cdfs, index=None, s_min: Optional[int] = None) -> float:
    """Sum of ``-log2 p`` under the integer tables, in bits."""
    tables, mins = _as_lists(cdfs)
    arr = np.asarray(tables if not isinstance(cdfs, np.ndarray) else cdfs, dtype=object)
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    index = np.arange(symbols.size) if index is None else np.asarray(index, dtype=np.int64).reshape(-1)
    base = np.asarray(mins, dtype=np.int64)[index] if mins is not None else (0 if s_min is None else s_min)
    offs = symbols - base
    widths = np.fromiter(
        (tables[t][s + 1] - tables[t][s] for t, s in zip(index.tolist(), offs.tolist())),
        dtype=np.float64,
        count=symbols.size,
    )
    del arr
    return float(-np.log2(widths / TOTAL).sum())
