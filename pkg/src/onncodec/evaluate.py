"""Rate-distortion evaluation through real bitstreams."""

from __future__ import annotations

import csv
import logging
import os
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import checkpoint
from .bitstream import decode_image, encode_image
from .codec import JointCompressionModel
from .datasets import load_images
from .metrics import RdPoint, ms_ssim, msssim_scales, psnr
from .noise import level_params, synthesize_noise

log = logging.getLogger(__name__)

CSV_FIELDS = ("dataset", "level", "q", "bpp", "psnr_db", "msssim", "enc_ms", "dec_ms")
QUALITIES = (1, 2, 3, 4, 5, 6)


@dataclass
class ImageResult:
    bpp: float
    psnr_db: float
    msssim: float
    enc_ms: float
    dec_ms: float
    noisy_psnr_db: float
    num_bytes: int


def noisy_copy(img: np.ndarray, level: int, index: int, seed: int = 2024) -> np.ndarray:
    """Frozen noisy version of image ``index`` at a test level (same draw for every model)."""
    rng = np.random.default_rng([seed, level, index])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return synthesize_noise(img, level_params(level), rng)


def evaluate_image(model: JointCompressionModel, clean: np.ndarray, noisy: np.ndarray, q: int = 0,
                   denoise: bool = True) -> ImageResult:
    """Compress ``noisy``, decode the stream, and score the decode against ``clean``."""
    t0 = time.perf_counter()
    enc = encode_image(model, noisy, q, denoise)
    t1 = time.perf_counter()
    x_hat, _ = decode_image(model, enc.data)
    t2 = time.perf_counter()
    h, w = clean.shape[1:]
    mss = ms_ssim(clean, x_hat) if msssim_scales(h, w) else float("nan")
    return ImageResult(
        bpp=8.0 * len(enc.data) / (h * w),
        psnr_db=psnr(clean, x_hat),
        msssim=mss,
        enc_ms=1e3 * (t1 - t0),
        dec_ms=1e3 * (t2 - t1),
        noisy_psnr_db=psnr(clean, noisy),
        num_bytes=len(enc.data),
    )


def evaluate_model(model: JointCompressionModel, images: Sequence[np.ndarray], levels: Iterable[int], q: int,
                   dataset: str = "data", seed: int = 2024) -> list[dict]:
    rows = []
    for level in levels:
        for i, img in enumerate(images):
            r = evaluate_image(model, img, noisy_copy(img, level, i, seed), q)
            rows.append({"dataset": dataset, "level": level, "q": q, "bpp": r.bpp, "psnr_db": r.psnr_db,
                         "msssim": r.msssim, "enc_ms": r.enc_ms, "dec_ms": r.dec_ms})
    return rows


def find_checkpoints(ckpt_dir: str | os.PathLike, qualities: Sequence[int] = QUALITIES):
    """Map quality index -> checkpoint path, warning about every missing quality point."""
    found: dict[int, Path] = {}
    for path in sorted(Path(ckpt_dir).glob("*.bin")):
        try:
            _, cfg = checkpoint.load(path)
        except checkpoint.CheckpointError as exc:
            warnings.warn(f"skipping {path}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        q = int(cfg.get("quality", 0))
        if q in found:
            warnings.warn(f"duplicate checkpoint for q{q}: keeping {found[q]}, ignoring {path}", RuntimeWarning,
                          stacklevel=2)
            continue
        found[q] = path
    for q in qualities:
        if q not in found:
            warnings.warn(f"no checkpoint for quality q{q}; skipped", RuntimeWarning, stacklevel=2)
    return {q: found[q] for q in sorted(found) if q in qualities}


def evaluate(ckpt_dir: str | os.PathLike, data_dir: str | os.PathLike, levels: Sequence[int],
             out_csv: Optional[str | os.PathLike] = None, seed: int = 2024) -> list[dict]:
    images = load_images(data_dir)
    if not images:
        raise ValueError(f"no images in {data_dir}")
    dataset = Path(data_dir).name
    rows = []
    for q, path in find_checkpoints(ckpt_dir).items():
        model, _ = checkpoint.load(path)
        log.info("evaluating q%d from %s", q, path)
        rows.extend(evaluate_model(model, images, levels, q, dataset, seed))
    if out_csv:
        write_csv(out_csv, rows)
    return rows


def write_csv(path: str | os.PathLike, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CSV_FIELDS})


def read_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row in reader:
            out.append({
                "dataset": row["dataset"],
                "level": int(row["level"]),
                "q": int(row["q"]),
                **{k: float(row[k]) for k in ("bpp", "psnr_db", "msssim", "enc_ms", "dec_ms")},
            })
        return out


def rd_curves(rows: Sequence[dict]) -> dict[tuple[str, int], list[RdPoint]]:
    """Per-(dataset, level) curves of per-quality means, ordered by rate."""
    groups: dict = defaultdict(lambda: defaultdict(list))
    for r in rows:
        groups[(r["dataset"], r["level"])][r["q"]].append(r)
    curves = {}
    for key, by_q in groups.items():
        pts = [
            RdPoint(
                float(np.mean([r["bpp"] for r in rs])),
                float(np.mean([r["psnr_db"] for r in rs])),
                float(np.mean([r["msssim"] for r in rs])),
            )
            for _, rs in sorted(by_q.items())
        ]
        curves[key] = sorted(pts, key=lambda p: p.bpp)
    return curves
