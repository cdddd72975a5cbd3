"""Training objectives: feature guidance, contrastive, rate-distortion and their sum."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor

# lambda_d per quality index q1..q6, applied to MSE on the 0..255 scale
LAMBDA_LADDER = (0.0018, 0.0035, 0.0067, 0.013, 0.025, 0.0483)


def lambda_for_quality(q: int) -> float:
    if not 1 <= q <= len(LAMBDA_LADDER):
        raise ValueError(f"quality index must be in 1..{len(LAMBDA_LADDER)}, got {q}")
    return LAMBDA_LADDER[q - 1]


@dataclass
class LossWeights:
    lambda_d: float = LAMBDA_LADDER[2]
    lambda_g: float = 3.0
    lambda_c: float = 1.5
    tau: float = 0.1
    contrastive_enabled: bool = True

    def __post_init__(self):
        for name in ("lambda_d", "lambda_g", "lambda_c", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")


def guidance_loss(y0, y0_gt, y1, y1_gt, reduction: str = "mean") -> Tensor:
    """L1 distance between denoised and guiding features, summed over both levels."""
    return ag.l1_distance(y0, y0_gt, reduction) + ag.l1_distance(y1, y1_gt, reduction)


def mse_255(x, x_hat) -> Tensor:
    x, x_hat = ag.as_tensor(x), ag.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"distortion: shape mismatch {x.shape} vs {x_hat.shape}")
    d = (x_hat - x) * 255.0
    return ag.mean(d * d)


def contrastive_loss(z_noisy, z_aug, tau: float = 0.1) -> Tensor:
    """NT-Xent over the 2N embeddings ``[z_noisy; z_aug]``, averaged over all anchors.

    Row ``i`` of ``z_noisy`` and row ``i`` of ``z_aug`` are positives; every
    other embedding in the batch is a negative.
    """
    z_noisy, z_aug = ag.as_tensor(z_noisy), ag.as_tensor(z_aug)
    if z_noisy.ndim != 2 or z_noisy.shape != z_aug.shape:
        raise ValueError(f"expected two (N,d) arrays of equal shape, got {z_noisy.shape} and {z_aug.shape}")
    n = z_noisy.shape[0]
    if n == 0:
        raise ValueError("contrastive loss needs at least one pair")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    e = ag.concat([z_noisy, z_aug], axis=0)
    norms = np.linalg.norm(e.data, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        warnings.warn("contrastive_loss: rows are not unit-norm; normalizing", RuntimeWarning, stacklevel=2)
        e = ag.l2_normalize(e, axis=1)
    logits = ag.matmul(e, ag.transpose(e)) * (1.0 / tau)
    m = 2 * n
    idx = np.arange(m)
    partner = (idx + n) % m
    positive = np.zeros((m, m))
    positive[idx, partner] = 1.0
    off_diag = ~np.eye(m, dtype=bool)
    pos_logit = ag.sum_(logits * positive, axis=1)
    per_anchor = ag.logsumexp(logits, axis=1, where=off_diag) - pos_logit
    return ag.mean(per_anchor)


def rd_loss(bpp_y, bpp_z, x, x_hat, lambda_d: float) -> Tensor:
    """Rate in bits per pixel plus ``lambda_d`` times the 255-scale MSE."""
    return ag.as_tensor(bpp_y) + bpp_z + mse_255(x, x_hat) * lambda_d


@dataclass
class LossParts:
    bpp_y: Tensor
    bpp_z: Tensor
    distortion: Tensor
    guidance: Optional[Tensor] = None
    contrastive: Optional[Tensor] = None


def total_loss(parts: LossParts, weights: LossWeights) -> Tensor:
    loss = parts.bpp_y + parts.bpp_z + parts.distortion * weights.lambda_d
    if parts.guidance is not None:
        loss = loss + parts.guidance * weights.lambda_g
    if weights.contrastive_enabled and parts.contrastive is not None:
        loss = loss + parts.contrastive * weights.lambda_c
    return loss
