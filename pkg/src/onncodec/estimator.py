"""scikit-learn style wrappers over the functional core.

Images are passed as a 4-D array ``(n, 3, H, W)`` or a list of ``(3, H, W)``
arrays with values in [0, 1]. Sizes may differ between list entries.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bitstream import decode_image, encode_image
from .metrics import psnr
from .noise import NoiseParams, level_params, synthesize_noise


def check_images(X, name: str = "X") -> list[np.ndarray]:
    """Validate an image collection and return it as a list of float64 (3,H,W) arrays."""
    if isinstance(X, np.ndarray):
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4:
            raise ValueError(f"{name} must be 4-D (n, 3, H, W), got {X.ndim}-D")
        items = list(X)
    else:
        items = list(X)
    if not items:
        raise ValueError(f"{name} is empty")
    out = []
    for i, img in enumerate(items):
        a = np.asarray(img, dtype=np.float64)
        if a.ndim != 3 or a.shape[0] != 3:
            raise ValueError(f"{name}[{i}] must have shape (3, H, W), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name}[{i}] contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError(f"{name}[{i}] values must lie in [0, 1]")
        out.append(a)
    return out


def check_paired(X, y, names=("X", "y")):
    xs, ys = check_images(X, names[0]), check_images(y, names[1])
    if len(xs) != len(ys):
        raise ValueError(f"{names[0]} has {len(xs)} images but {names[1]} has {len(ys)}")
    for i, (a, b) in enumerate(zip(xs, ys)):
        if a.shape != b.shape:
            raise ValueError(f"image {i}: shape {a.shape} vs {b.shape}")
    return xs, ys


class NoiseSynthesizer(TransformerMixin, BaseEstimator):
    """Adds synthetic sensor noise at a test level or at explicit parameters.

    Args:
        level: Test level 1 to 4. Ignored when both sigmas are given.
        sigma_r: Readout noise standard deviation (linear domain).
        sigma_s: Shot noise variance coefficient.
        random_state: Seed; each transform call restarts from it, so repeated
            calls on the same input return the same noisy images.
    """

    def __init__(self, level: int = 4, sigma_r: Optional[float] = None, sigma_s: Optional[float] = None,
                 random_state: int = 0):
        self.level = level
        self.sigma_r = sigma_r
        self.sigma_s = sigma_s
        self.random_state = random_state

    def _params(self) -> NoiseParams:
        if self.sigma_r is not None and self.sigma_s is not None:
            return NoiseParams(float(self.sigma_r), float(self.sigma_s))
        return level_params(self.level)

    def fit(self, X, y=None):
        check_images(X)
        self.params_ = self._params()
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        rng = np.random.default_rng(self.random_state)
        imgs = check_images(X)
        out = [synthesize_noise(img, self.params_, rng) for img in imgs]
        return _restack(X, out)


def _restack(X, out):
    if isinstance(X, np.ndarray):
        return np.stack(out) if X.ndim == 4 else out[0]
    return out


class JointDenoisingCodec(TransformerMixin, BaseEstimator):
    """Trainable joint denoiser and compressor.

    ``fit`` takes clean images and trains with synthetic noise. ``transform``
    maps noisy images to their decoded reconstructions through real
    bitstreams, and ``compress``/``decompress`` expose the streams themselves.

    Args:
        quality: Index into the distortion-weight ladder (1 to 6).
        steps: Optimizer steps.
        lr: Adam learning rate.
        schedule: ``"constant"`` or ``"cosine"``.
        channels: Latent channels.
        hyper_channels: Hyper-latent channels.
        q_order: Taylor order of the generative-neuron layers.
        denoiser_kind: ``"selfonn"`` or ``"conv"`` for the second-level denoiser.
        multiscale: Use the four-branch dilated block.
        contrastive: Train the contrastive branch.
        batch_size: Patches per step.
        patch_size: Side of square training patches.
        crop_size: Side of the crops used as augmented contrastive views.
        random_state: Seed for initialisation and every batch.
    """

    def __init__(self, quality: int = 3, steps: int = 1000, lr: float = 1e-4, schedule: str = "constant",
                 channels: int = 32, hyper_channels: int = 16, q_order: int = 3, denoiser_kind: str = "selfonn",
                 multiscale: bool = True, contrastive: bool = True, batch_size: int = 4, patch_size: int = 64,
                 crop_size: int = 48, random_state: int = 0):
        self.quality = quality
        self.steps = steps
        self.lr = lr
        self.schedule = schedule
        self.channels = channels
        self.hyper_channels = hyper_channels
        self.q_order = q_order
        self.denoiser_kind = denoiser_kind
        self.multiscale = multiscale
        self.contrastive = contrastive
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.crop_size = crop_size
        self.random_state = random_state

    def train_config(self):
        from .training import TrainConfig

        return TrainConfig(
            quality=self.quality, seed=self.random_state, channels=self.channels,
            hyper_channels=self.hyper_channels, q_order=self.q_order, denoiser_kind=self.denoiser_kind,
            multiscale=self.multiscale, contrastive_enabled=self.contrastive, lr=self.lr,
            schedule=self.schedule, steps=self.steps, batch_size=self.batch_size, patch_size=self.patch_size,
            crop_size=self.crop_size,
        )

    def fit(self, X, y=None):
        """Train on clean images ``X``; ``y`` is ignored."""
        from .training import train

        imgs = check_images(X)
        small = [i for i, a in enumerate(imgs) if min(a.shape[1:]) < self.patch_size]
        if small:
            raise ValueError(f"images {small[:5]} are smaller than patch_size={self.patch_size}")
        cfg = self.train_config()
        self.model_, self.history_ = train(cfg, imgs)
        self.config_ = cfg.to_dict()
        return self

    @classmethod
    def from_checkpoint(cls, path) -> "JointDenoisingCodec":
        from . import checkpoint
        from .training import TrainConfig

        model, cfg = checkpoint.load(path)
        tc = TrainConfig.from_dict(cfg)
        est = cls(quality=tc.quality, steps=tc.steps, lr=tc.lr, schedule=tc.schedule, channels=tc.channels,
                  hyper_channels=tc.hyper_channels, q_order=tc.q_order, denoiser_kind=tc.denoiser_kind,
                  multiscale=tc.multiscale, contrastive=tc.contrastive_enabled, batch_size=tc.batch_size,
                  patch_size=tc.patch_size, crop_size=tc.crop_size, random_state=tc.seed)
        est.model_, est.config_, est.history_ = model, cfg, []
        return est

    def save(self, path) -> None:
        from . import checkpoint

        check_is_fitted(self, "model_")
        checkpoint.save(path, self.model_, self.config_)

    def compress(self, X, denoise: bool = True) -> list[bytes]:
        check_is_fitted(self, "model_")
        return [encode_image(self.model_, img, self.quality, denoise).data for img in check_images(X)]

    def decompress(self, streams: Sequence[bytes]) -> list[np.ndarray]:
        check_is_fitted(self, "model_")
        return [decode_image(self.model_, s)[0] for s in streams]

    def transform(self, X):
        """Decoded reconstructions of (noisy) images ``X``."""
        out = self.decompress(self.compress(X))
        return _restack(X, out)

    def score(self, X, y=None):
        """Mean PSNR (dB) of the reconstructions of ``X`` against ``y`` (``X`` itself when omitted)."""
        if y is None:
            y = X
        xs, ys = check_paired(X, y, ("X", "y"))
        rec = self.decompress(self.compress(xs))
        return float(np.mean([psnr(t, r) for t, r in zip(ys, rec)]))

    def bits_per_pixel(self, X) -> np.ndarray:
        imgs = check_images(X)
        return np.array([8.0 * len(s) / (a.shape[1] * a.shape[2]) for s, a in zip(self.compress(imgs), imgs)])
