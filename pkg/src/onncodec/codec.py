"""Joint denoising compression model.

Noisy input flows ``ga0 -> +d0 -> ga1 -> +d1`` to the latent ``y1``; a
mean-scale hyperprior (``ha``/``hs`` with a per-channel logistic prior on the
hyper-latent) supplies the entropy parameters, and ``gs`` reconstructs the
image. The clean image, when given, is pushed through the same ``ga0``/``ga1``
without gradient to produce guidance targets.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .denoiser import DenoiserStage
from .entropy import SIGMA_MIN, gaussian_likelihood, logistic_likelihood, quantize
from .layers import Conv2d, Linear, Module, Upsample2x, layer_rng

LEAKY_SLOPE = 0.1
DOWNSAMPLE = 16


@dataclass
class ModelConfig:
    channels: int = 32
    hyper_channels: int = 16
    q_order: int = 3
    d1_kind: str = "selfonn"
    multiscale: bool = True
    contrastive: bool = True
    proj_dim: int = 64
    cbam_ratio: int = 4
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


class AnalysisStage(Module):
    """Two stride-2 5x5 convolutions, each followed by a leaky rectifier (4x downsampling)."""

    def __init__(self, c_in: int, c_out: int, seed: int, name: str):
        self.conv1 = Conv2d(c_in, c_out, 5, stride=2, padding=2, rng=layer_rng(seed, f"{name}.conv1"))
        self.conv2 = Conv2d(c_out, c_out, 5, stride=2, padding=2, rng=layer_rng(seed, f"{name}.conv2"))

    def forward(self, x):
        x = ag.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        return ag.leaky_relu(self.conv2(x), LEAKY_SLOPE)


class SynthesisTransform(Module):
    """Four 2x transposed convolutions mapping the latent back to 3 image channels."""

    def __init__(self, channels: int, seed: int, name: str = "gs"):
        widths = [channels, channels, channels, channels, 3]
        self.ups = [
            Upsample2x(widths[i], widths[i + 1], 5, rng=layer_rng(seed, f"{name}.up{i}")) for i in range(4)
        ]

    def forward(self, y):
        for i, up in enumerate(self.ups):
            y = up(y)
            if i < len(self.ups) - 1:
                y = ag.leaky_relu(y, LEAKY_SLOPE)
        return y


class HyperAnalysis(Module):
    def __init__(self, channels: int, hyper_channels: int, seed: int, name: str = "ha"):
        self.conv1 = Conv2d(channels, hyper_channels, 5, stride=2, padding=2, rng=layer_rng(seed, f"{name}.conv1"))
        self.conv2 = Conv2d(hyper_channels, hyper_channels, 5, stride=2, padding=2,
                            rng=layer_rng(seed, f"{name}.conv2"))

    def forward(self, y):
        return self.conv2(ag.leaky_relu(self.conv1(y), LEAKY_SLOPE))


class HyperSynthesis(Module):
    """Emits mean and (positive) scale planes for every latent element."""

    def __init__(self, channels: int, hyper_channels: int, seed: int, name: str = "hs"):
        self.channels = channels
        self.up1 = Upsample2x(hyper_channels, hyper_channels, 5, rng=layer_rng(seed, f"{name}.up1"))
        self.up2 = Upsample2x(hyper_channels, 2 * channels, 5, rng=layer_rng(seed, f"{name}.up2"))

    def forward(self, z_hat, latent_hw: tuple[int, int]):
        params = self.up2(ag.leaky_relu(self.up1(z_hat), LEAKY_SLOPE))
        h, w = latent_hw
        c = self.channels
        mu = params[:, :c, :h, :w]
        sigma = ag.softplus(params[:, c:, :h, :w])
        return mu, sigma


class FactorizedPrior(Module):
    """Independent logistic law per hyper-latent channel; scale stored as exp(log_scale)."""

    def __init__(self, channels: int):
        self.loc = Tensor(np.zeros(channels), requires_grad=True, name="loc")
        self.log_scale = Tensor(np.zeros(channels), requires_grad=True, name="log_scale")

    def scales(self) -> Tensor:
        return ag.exp(self.log_scale)

    def likelihood(self, z_hat) -> Tensor:
        c = self.loc.shape[0]
        loc = ag.reshape(self.loc, (1, c, 1, 1))
        scale = ag.reshape(self.scales(), (1, c, 1, 1))
        return logistic_likelihood(z_hat, loc, scale)


class ProjectionHead(Module):
    """Spatial mean pool, two fully connected layers with a rectifier, unit-norm output."""

    def __init__(self, channels: int, proj_dim: int, seed: int, name: str = "proj"):
        self.fc1 = Linear(channels, channels, rng=layer_rng(seed, f"{name}.fc1"))
        self.fc2 = Linear(channels, proj_dim, rng=layer_rng(seed, f"{name}.fc2"))

    def forward(self, y):
        n, c = y.shape[:2]
        v = ag.reshape(ag.global_avg_pool(y), (n, c))
        return ag.l2_normalize(self.fc2(ag.relu(self.fc1(v))), axis=1)


@dataclass
class LatentBundle:
    y0: Tensor
    y1: Tensor
    z: Tensor
    y1_hat: Tensor
    z_hat: Tensor
    y0_gt: Optional[Tensor] = None
    y1_gt: Optional[Tensor] = None


@dataclass
class ForwardResult:
    bundle: LatentBundle
    x_hat: Tensor
    mu: Tensor
    sigma: Tensor
    likelihoods_y: Tensor
    likelihoods_z: Tensor
    emb_noisy: Optional[Tensor] = None
    emb_aug: Optional[Tensor] = None
    diagnostics: dict = field(default_factory=dict)


def check_image_batch(x, name: str = "x") -> Tensor:
    x = ag.as_tensor(x)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"{name} must be an (N,3,H,W) batch, got shape {x.shape}")
    if x.shape[2] % DOWNSAMPLE or x.shape[3] % DOWNSAMPLE:
        raise ValueError(f"{name} spatial dims must be divisible by {DOWNSAMPLE}, got {x.shape[2:]}")
    return x


class JointCompressionModel(Module):
    """All trainable pieces of the codec; see the module docstring for the data flow."""

    def __init__(self, config: Optional[ModelConfig] = None):
        cfg = config or ModelConfig()
        self.config = cfg
        c, cz, s = cfg.channels, cfg.hyper_channels, cfg.seed
        self.ga0 = AnalysisStage(3, c, s, "ga0")
        self.ga1 = AnalysisStage(c, c, s, "ga1")
        self.d0 = DenoiserStage(c, "conv", cfg.multiscale, cfg.q_order, cfg.cbam_ratio, s, "d0")
        self.d1 = DenoiserStage(c, cfg.d1_kind, cfg.multiscale, cfg.q_order, cfg.cbam_ratio, s, "d1")
        self.ha = HyperAnalysis(c, cz, s)
        self.hs = HyperSynthesis(c, cz, s)
        self.gs = SynthesisTransform(c, s)
        self.prior = FactorizedPrior(cz)
        self.proj = ProjectionHead(c, cfg.proj_dim, s) if cfg.contrastive else None

    def config_json(self) -> str:
        return json.dumps(self.config.to_dict(), sort_keys=True)

    # -- branches
    def encode_latents(self, x, denoise: bool = True):
        """Denoising branch: returns (y0, y1)."""
        f0 = self.ga0(x)
        y0 = f0 + self.d0(f0) if denoise else f0
        f1 = self.ga1(y0)
        y1 = f1 + self.d1(f1) if denoise else f1
        return y0, y1

    def guidance_features(self, x_clean):
        """Guidance branch on the clean image; treated as constants."""
        with ag.no_grad():
            y0 = self.ga0(x_clean)
            y1 = self.ga1(y0)
        return Tensor(y0.data), Tensor(y1.data)

    def hyper(self, y1, mode: str, rng=None):
        z = self.ha(y1)
        z_hat = quantize(z, mode, rng)
        mu, sigma = self.hs(z_hat, y1.shape[2:])
        return z, z_hat, mu, sigma

    def decode_latent(self, y_hat, hw: Optional[tuple[int, int]] = None):
        x_hat = self.gs(y_hat)
        if hw is not None and x_hat.shape[2:] != tuple(hw):
            x_hat = x_hat[:, :, : hw[0], : hw[1]]
        return x_hat

    def embed(self, y1):
        if self.proj is None:
            raise RuntimeError("contrastive branch disabled in this model")
        return self.proj(y1)

    def forward(self, x_noisy, x_clean=None, mode: str = "train", rng: Optional[np.random.Generator] = None,
                x_aug=None, denoise: bool = True) -> ForwardResult:
        x_noisy = check_image_batch(x_noisy, "x_noisy")
        y0, y1 = self.encode_latents(x_noisy, denoise)
        z, z_hat, mu, sigma = self.hyper(y1, mode, rng)
        y1_hat = quantize(y1, mode, rng)
        lik_y = gaussian_likelihood(y1_hat, mu, sigma)
        lik_z = self.prior.likelihood(z_hat)
        x_hat = self.decode_latent(y1_hat, x_noisy.shape[2:])
        bundle = LatentBundle(y0, y1, z, y1_hat, z_hat)
        if x_clean is not None:
            bundle.y0_gt, bundle.y1_gt = self.guidance_features(check_image_batch(x_clean, "x_clean"))
        result = ForwardResult(bundle, x_hat, mu, sigma, lik_y, lik_z)
        if x_aug is not None and self.proj is not None:
            result.emb_noisy = self.embed(y1)
            _, y1_aug = self.encode_latents(ag.as_tensor(x_aug), denoise)
            result.emb_aug = self.embed(y1_aug)
        result.diagnostics = {
            "sigma_at_floor": float(np.mean(sigma.data <= SIGMA_MIN)),
            "num_pixels": int(x_noisy.shape[0] * x_noisy.shape[2] * x_noisy.shape[3]),
        }
        return result


def encode_forward(model: JointCompressionModel, x_noisy, x_clean=None, mode: str = "train", rng=None,
                   x_aug=None):
    """Run every configured branch; returns ``(bundle, x_hat, diagnostics)``."""
    res = model(x_noisy, x_clean, mode, rng, x_aug)
    return res.bundle, res.x_hat, res.diagnostics
