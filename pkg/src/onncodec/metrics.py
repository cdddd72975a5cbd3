"""Image quality metrics and Bjontegaard delta rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def mse(x, x_hat, peak: float = 255.0) -> float:
    x = np.asarray(x, dtype=np.float64) * peak
    x_hat = np.asarray(x_hat, dtype=np.float64) * peak
    return float(np.mean((x - x_hat) ** 2))


def psnr(x, x_hat, peak: float = 255.0) -> float:
    """PSNR in dB for images in [0, 1], measured on the ``peak`` scale.

    Returns ``inf`` when the images are identical.
    """
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    err = mse(x, x_hat, peak)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, keeping only positions where the window fits
    half = len(g) // 2
    out = correlate1d(img, g, axis=-1, mode="constant")
    out = correlate1d(out, g, axis=-2, mode="constant")
    return out[..., half : img.shape[-2] - half, half : img.shape[-1] - half]


def _ssim_terms(x: np.ndarray, y: np.ndarray, data_range: float):
    g = _gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    # per-channel means over the spatial axes
    return (lum * cs).mean(axis=(-2, -1)), cs.mean(axis=(-2, -1))


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[-2:]
    h2, w2 = h // 2 * 2, w // 2 * 2
    v = img[..., :h2, :w2]
    return 0.25 * (v[..., 0::2, 0::2] + v[..., 1::2, 0::2] + v[..., 0::2, 1::2] + v[..., 1::2, 1::2])


def msssim_scales(height: int, width: int, max_scales: int = 5) -> int:
    """How many dyadic scales fit with an 11-pixel window at the coarsest one."""
    side, levels = min(height, width), 0
    while levels < max_scales and side >= WINDOW:
        levels += 1
        side //= 2
    return levels


def ms_ssim(x, x_hat, data_range: float = 1.0, weights: Sequence[float] = MSSSIM_WEIGHTS) -> float:
    """Multi-scale SSIM of (C,H,W) or (H,W) images, averaged over channels.

    Images whose short side is under 176 pixels cannot host five full windows; they
    use as many as fit and the leading weights renormalised to sum to one.
    Negative contrast-structure means are clamped to zero before the
    fractional powers are taken.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(x_hat, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ValueError("expected (C,H,W) or (H,W) images")
    levels = msssim_scales(*x.shape[-2:], max_scales=len(weights))
    if levels == 0:
        raise ValueError(f"image {x.shape[-2:]} too small for an {WINDOW}x{WINDOW} window")
    w = np.asarray(weights[:levels], dtype=np.float64)
    w = w / w.sum()
    cs_terms = []
    for i in range(levels):
        ssim_c, cs_c = _ssim_terms(x, y, data_range)
        if i < levels - 1:
            cs_terms.append(np.maximum(cs_c, 0.0))
            x, y = _downsample(x), _downsample(y)
    per_channel = np.maximum(ssim_c, 0.0) ** w[-1]
    for cs, wi in zip(cs_terms, w[:-1]):
        per_channel = per_channel * cs**wi
    return float(per_channel.mean())


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr_db: float
    msssim: float


def _curve(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = sorted(points, key=lambda p: p.bpp)
    return (np.array([p.bpp for p in pts]), np.array([p.psnr_db for p in pts]), np.array([p.msssim for p in pts]))


def _check_curve(rate, quality, name):
    rate = np.asarray(rate, dtype=np.float64)
    quality = np.asarray(quality, dtype=np.float64)
    if rate.shape != quality.shape or rate.ndim != 1:
        raise ValueError(f"{name}: rate and quality must be 1-D arrays of equal length")
    if rate.size < 4:
        raise ValueError(f"{name}: need at least 4 rate points, got {rate.size}")
    if np.any(rate <= 0):
        raise ValueError(f"{name}: rates must be positive")
    return rate, quality


def _common_interval(q_ref, q_test):
    lo = max(q_ref.min(), q_test.min())
    hi = min(q_ref.max(), q_test.max())
    if not hi > lo:
        raise ArithmeticError("rate-quality curves do not overlap in quality")
    return lo, hi


def bd_rate_arrays(rate_ref, q_ref, rate_test, q_test) -> float:
    """Average rate difference in percent at equal quality (cubic fit of log10 rate on quality)."""
    rate_ref, q_ref = _check_curve(rate_ref, q_ref, "reference")
    rate_test, q_test = _check_curve(rate_test, q_test, "test")
    lo, hi = _common_interval(q_ref, q_test)
    p_ref = np.polyfit(q_ref, np.log10(rate_ref), 3)
    p_test = np.polyfit(q_test, np.log10(rate_test), 3)
    i_ref, i_test = np.polyint(p_ref), np.polyint(p_test)
    area_ref = np.polyval(i_ref, hi) - np.polyval(i_ref, lo)
    area_test = np.polyval(i_test, hi) - np.polyval(i_test, lo)
    delta = (area_test - area_ref) / (hi - lo)
    return float(100.0 * (10.0**delta - 1.0))


def bd_rate(curve_ref: Sequence[RdPoint], curve_test: Sequence[RdPoint], metric: str = "psnr") -> float:
    if metric not in ("psnr", "msssim"):
        raise ValueError(f"metric must be 'psnr' or 'msssim', got {metric!r}")
    r_ref, p_ref, m_ref = _curve(curve_ref)
    r_test, p_test, m_test = _curve(curve_test)
    if metric == "psnr":
        return bd_rate_arrays(r_ref, p_ref, r_test, p_test)
    return bd_rate_arrays(r_ref, m_ref, r_test, m_test)
