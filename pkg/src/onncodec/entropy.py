"""Quantization proxy, discretized likelihoods and rate."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import ndtr

from . import autograd as ag
from .autograd import Tensor, _sigmoid

SIGMA_MIN = 0.11
P_MIN = 2.0**-16
MODES = ("train", "infer")


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(x, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Additive U(-0.5, 0.5) noise in training, rounding at inference.

    Both branches pass gradients straight through.
    """
    x = ag.as_tensor(x)
    if mode == "train":
        if rng is None:
            raise ValueError("training-mode quantization needs a seeded generator")
        noise = rng.uniform(-0.5, 0.5, size=x.shape)
        return ag.custom_op(x.data + noise, (x,), lambda g: (g,))
    if mode == "infer":
        return ag.custom_op(round_half_away(x.data), (x,), lambda g: (g,))
    raise ValueError(f"unknown quantization mode {mode!r}; expected one of {MODES}")


def _normal_pdf(v):
    return np.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)


def _logistic_pdf(v):
    s = _sigmoid(v)
    return s * (1.0 - s)


def _discretized(y, loc, scale, cdf: Callable, pdf: Callable) -> Tensor:
    """Mass of the unit bin around ``y`` under a symmetric location-scale law.

    Evaluated on the lower half-line (mirrored) so the difference of CDFs keeps
    its precision far from the centre.
    """
    y, loc, scale = ag.as_tensor(y), ag.as_tensor(loc), ag.as_tensor(scale)
    v = y.data - loc.data
    sgn = np.sign(v)
    a = np.abs(v)
    s = scale.data
    up = (0.5 - a) / s
    lo = (-0.5 - a) / s
    p = cdf(up) - cdf(lo)
    pu, pl = pdf(up), pdf(lo)
    dp_da = (pl - pu) / s
    dp_ds = (pl * lo - pu * up) / s

    def bw(g):
        gy = g * dp_da * sgn
        return (
            ag._unbroadcast(gy, y.shape) if y.requires_grad else None,
            ag._unbroadcast(-gy, loc.shape) if loc.requires_grad else None,
            ag._unbroadcast(g * dp_ds, scale.shape) if scale.requires_grad else None,
        )

    return ag.custom_op(p, (y, loc, scale), bw)


def gaussian_likelihood(y_hat, mu, sigma, sigma_min: float = SIGMA_MIN, p_min: float = P_MIN) -> Tensor:
    """P(y_hat) = Phi((y_hat-mu+0.5)/sigma) - Phi((y_hat-mu-0.5)/sigma), floored at ``p_min``."""
    sigma = ag.lower_bound(sigma, sigma_min)
    p = _discretized(y_hat, mu, sigma, ndtr, _normal_pdf)
    return ag.lower_bound(p, p_min) if p_min > 0 else p


def logistic_likelihood(z_hat, loc, scale, p_min: float = P_MIN) -> Tensor:
    p = _discretized(z_hat, loc, scale, _sigmoid, _logistic_pdf)
    return ag.lower_bound(p, p_min) if p_min > 0 else p


def rate(likelihoods) -> Tensor:
    """Information content ``-sum(log2 P)`` in bits."""
    likelihoods = ag.as_tensor(likelihoods)
    if np.any(likelihoods.data <= 0):
        raise ValueError("rate needs strictly positive likelihoods (missing floor?)")
    return ag.mul(ag.log(likelihoods).sum(), -1.0 / math.log(2.0))


def bits_to_bpp(bits, num_pixels: int):
    return bits / float(num_pixels)


def alphabet_masses(cdf: Callable, loc: np.ndarray, scale: np.ndarray, s_min: int, s_max: int) -> np.ndarray:
    """Bin masses over ``[s_min, s_max]`` with the end bins absorbing both tails.

    ``loc`` and ``scale`` broadcast against each other; the symbol axis is last.
    """
    if s_max < s_min:
        raise ValueError(f"empty alphabet [{s_min}, {s_max}]")
    loc = np.asarray(loc, dtype=np.float64)[..., None]
    scale = np.asarray(scale, dtype=np.float64)[..., None]
    # CDF at every bin edge, edge e_i = s_min - 0.5 + i; computed on the side
    # nearer the tail for precision
    edges = np.arange(s_min, s_max + 2) - 0.5
    t = (edges - loc) / scale
    upper_tail = cdf(-t)  # 1 - F(t)
    lower_tail = cdf(t)
    n = s_max - s_min + 1
    masses = np.empty(np.broadcast_shapes(loc.shape[:-1], scale.shape[:-1]) + (n,))
    inner_right = t[..., 1:] <= 0
    # bin [e_i, e_{i+1}]: F(e_{i+1}) - F(e_i) == S(e_i) - S(e_{i+1})
    left_side = lower_tail[..., 1:] - lower_tail[..., :-1]
    right_side = upper_tail[..., :-1] - upper_tail[..., 1:]
    masses[...] = np.where(inner_right, left_side, right_side)
    masses[..., 0] = lower_tail[..., 1]
    masses[..., -1] = upper_tail[..., -2]
    return masses


def gaussian_masses(mu, sigma, s_min: int, s_max: int, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    return alphabet_masses(ndtr, mu, np.maximum(sigma, sigma_min), s_min, s_max)


def logistic_masses(loc, scale, s_min: int, s_max: int) -> np.ndarray:
    return alphabet_masses(_sigmoid, loc, scale, s_min, s_max)
