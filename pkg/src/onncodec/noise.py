"""Synthetic sensor noise and noise-free augmentations for contrastive pairs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

GAMMA = 2.2
SIGMA_R_RANGE = (1e-3, 10**-1.5)
SIGMA_S_RANGE = (1e-4, 1e-2)


@dataclass(frozen=True)
class NoiseParams:
    """Readout std ``sigma_r`` and shot coefficient ``sigma_s`` (variance = sigma_r**2 + sigma_s * signal)."""

    sigma_r: float
    sigma_s: float

    def in_training_range(self) -> bool:
        lo_r, hi_r = SIGMA_R_RANGE
        lo_s, hi_s = SIGMA_S_RANGE
        return lo_r <= self.sigma_r <= hi_r and lo_s <= self.sigma_s <= hi_s


def to_linear(x: np.ndarray) -> np.ndarray:
    return np.power(np.clip(x, 0.0, 1.0), GAMMA)


def to_display(x_lin: np.ndarray) -> np.ndarray:
    return np.power(np.clip(x_lin, 0.0, 1.0), 1.0 / GAMMA)


def linear_noise(x_lin: np.ndarray, p: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean heteroscedastic Gaussian noise for a linear-domain signal."""
    std = np.sqrt(p.sigma_r**2 + p.sigma_s * np.clip(x_lin, 0.0, None))
    return rng.standard_normal(np.shape(x_lin)) * std


def synthesize_noise(x_clean: np.ndarray, p: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    """Noisy version of a [0, 1] display-domain image.

    The image is linearised with a 2.2 power law, perturbed, clipped and
    re-encoded. Pixels that drew exactly zero noise come back unchanged.
    """
    x = np.asarray(x_clean, dtype=np.float64)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("synthesize_noise expects pixel values in [0, 1]")
    if p.sigma_r < 0 or p.sigma_s < 0:
        raise ValueError(f"noise parameters must be nonnegative, got {p}")
    if not p.in_training_range():
        warnings.warn(f"noise parameters {p} lie outside the training ranges", RuntimeWarning, stacklevel=2)
    x_lin = to_linear(x)
    n = linear_noise(x_lin, p, rng)
    return np.where(n == 0.0, x, to_display(x_lin + n))


def sample_train_params(rng: np.random.Generator) -> NoiseParams:
    """Log-uniform draw over the training ranges of both parameters."""
    lr = rng.uniform(np.log10(SIGMA_R_RANGE[0]), np.log10(SIGMA_R_RANGE[1]))
    ls = rng.uniform(np.log10(SIGMA_S_RANGE[0]), np.log10(SIGMA_S_RANGE[1]))
    return NoiseParams(float(10.0**lr), float(10.0**ls))


def test_levels() -> list[NoiseParams]:
    """Frozen evaluation levels 1..4: log-spaced from the range minima to the maxima."""
    r = np.logspace(np.log10(SIGMA_R_RANGE[0]), np.log10(SIGMA_R_RANGE[1]), 4)
    s = np.logspace(np.log10(SIGMA_S_RANGE[0]), np.log10(SIGMA_S_RANGE[1]), 4)
    return [NoiseParams(float(a), float(b)) for a, b in zip(r, s)]


test_levels.__test__ = False  # not a pytest test


def level_params(level: int) -> NoiseParams:
    levels = test_levels()
    if not 1 <= level <= len(levels):
        raise ValueError(f"noise level must be 1..{len(levels)}, got {level}")
    return levels[level - 1]


@dataclass(frozen=True)
class AugmentSpec:
    """Flip flags (``None`` = draw at random), multiplicative jitter amplitudes and crop size."""

    hflip: Optional[bool] = False
    vflip: Optional[bool] = False
    brightness: float = 0.0
    contrast: float = 0.0
    crop: Optional[tuple[int, int]] = None

    @classmethod
    def identity(cls) -> "AugmentSpec":
        return cls()

    @classmethod
    def random(cls, crop: Optional[tuple[int, int]] = None) -> "AugmentSpec":
        return cls(hflip=None, vflip=None, brightness=0.2, contrast=0.2, crop=crop)


def augment(x_clean: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Flip, jitter and crop a (..., C, H, W) image without adding noise."""
    x = np.asarray(x_clean, dtype=np.float64)
    h, w = x.shape[-2:]
    if spec.crop is not None:
        ch, cw = spec.crop
        if not (1 <= ch <= h and 1 <= cw <= w):
            raise ValueError(f"crop {spec.crop} does not fit inside a {h}x{w} image")
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        x = x[..., top : top + ch, left : left + cw]
    hflip = bool(rng.integers(0, 2)) if spec.hflip is None else spec.hflip
    vflip = bool(rng.integers(0, 2)) if spec.vflip is None else spec.vflip
    if hflip:
        x = x[..., :, ::-1]
    if vflip:
        x = x[..., ::-1, :]
    if spec.brightness or spec.contrast:
        b = 1.0 + rng.uniform(-spec.brightness, spec.brightness)
        c = 1.0 + rng.uniform(-spec.contrast, spec.contrast)
        m = x.mean()
        x = np.clip((x - m) * c + m * b, 0.0, 1.0)
    return np.ascontiguousarray(x)
