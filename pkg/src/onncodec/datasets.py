"""Image folders, structured synthetic images and patch sampling."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imageio import quantize_8bit, read_image, write_image

IMAGE_SUFFIXES = (".ppm", ".pgm")


def list_images(directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ValueError(f"dataset directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_images(directory: str | os.PathLike) -> list[np.ndarray]:
    paths = list_images(directory)
    if not paths:
        raise ValueError(f"no PPM/PGM images in {directory}")
    return [read_image(p) for p in paths]


def _colour(rng):
    return rng.uniform(0.1, 0.9, size=(3, 1, 1))


def _gradient(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    theta = rng.uniform(0, 2 * np.pi)
    t = np.cos(theta) * xx + np.sin(theta) * yy
    t = (t - t.min()) / max(np.ptp(t), 1e-9)
    a, b = _colour(rng), _colour(rng)
    if rng.random() < 0.5:
        cy, cx = rng.uniform(0, 1, 2)
        r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        t = 0.5 * t + 0.5 * (r / max(r.max(), 1e-9))
    return a + (b - a) * t[None]


def _checkerboard(rng, h, w):
    cell = int(rng.integers(8, 33))
    yy, xx = np.mgrid[0:h, 0:w]
    ox, oy = rng.integers(0, cell, 2)
    mask = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float64)
    a, b = _colour(rng), _colour(rng)
    img = a + (b - a) * mask[None]
    return gaussian_filter(img, sigma=(0, rng.uniform(0.8, 2.0), rng.uniform(0.8, 2.0)))


def _texture(rng, h, w):
    sigma = rng.uniform(2.0, 6.0)
    field = gaussian_filter(rng.standard_normal((3, h, w)), sigma=(0, sigma, sigma))
    field /= max(field.std(), 1e-9)
    base = _colour(rng)
    return base + rng.uniform(0.05, 0.15) * field


def synthetic_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """One (3,H,W) image blending a gradient background with a checkerboard or texture layer."""
    kind = rng.integers(0, 3)
    bg = _gradient(rng, h, w)
    if kind == 0:
        img = bg
    elif kind == 1:
        alpha = rng.uniform(0.3, 0.7)
        img = (1 - alpha) * bg + alpha * _checkerboard(rng, h, w)
    else:
        img = bg + (_texture(rng, h, w) - 0.5)
    if rng.random() < 0.5:
        img = 0.7 * img + 0.3 * _texture(rng, h, w)
    return quantize_8bit(np.clip(img, 0.0, 1.0))


def synthetic_images(n: int, h: int, w: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, h, w) for _ in range(n)]


def write_synthetic_dataset(directory: str | os.PathLike, n: int, size: int = 128, seed: int = 0) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synthetic_images(n, size, size, seed)):
        p = d / f"synth_{i:04d}.ppm"
        write_image(p, img)
        paths.append(p)
    return paths


def sample_patches(images: list[np.ndarray], n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``size`` x ``size`` crops, one image drawn per crop; returns (n,3,size,size)."""
    if not images:
        raise ValueError("empty dataset")
    out = np.empty((n, 3, size, size))
    for i in range(n):
        img = images[int(rng.integers(0, len(images)))]
        h, w = img.shape[1:]
        if h < size or w < size:
            raise ValueError(f"image {img.shape} smaller than patch size {size}")
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        out[i] = img[:, top : top + size, left : left + size]
    return out


def pad_to_multiple(img: np.ndarray, multiple: int = 16) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad the bottom/right of a (C,H,W) image; returns the padded image and (pad_bottom, pad_right)."""
    h, w = img.shape[-2:]
    pb = (-h) % multiple
    pr = (-w) % multiple
    if pb == 0 and pr == 0:
        return img, (0, 0)
    mode = "reflect" if pb < h and pr < w else "symmetric"
    pad = [(0, 0)] * (img.ndim - 2) + [(0, pb), (0, pr)]
    return np.pad(img, pad, mode=mode), (pb, pr)
