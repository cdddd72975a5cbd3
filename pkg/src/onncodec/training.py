"""Configuration, optimizer and the seeded training loop."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .codec import JointCompressionModel, ModelConfig
from .datasets import load_images, sample_patches
from .entropy import rate
from .losses import LossParts, LossWeights, contrastive_loss, guidance_loss, lambda_for_quality, mse_255, total_loss
from .noise import AugmentSpec, augment, sample_train_params, synthesize_noise

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    quality: int = 3
    seed: int = 0
    channels: int = 32
    hyper_channels: int = 16
    q_order: int = 3
    proj_dim: int = 64
    cbam_ratio: int = 4
    denoiser_kind: str = "selfonn"
    multiscale: bool = True
    lambda_d: Optional[float] = None
    lambda_g: float = 3.0
    lambda_c: float = 1.5
    tau: float = 0.1
    contrastive_enabled: bool = True
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    schedule: str = "constant"
    clip_grad_norm: Optional[float] = None
    steps: int = 1000
    batch_size: int = 4
    patch_size: int = 64
    crop_size: int = 48
    log_every: int = 50

    def __post_init__(self):
        if self.crop_size > self.patch_size:
            raise ValueError(f"crop_size {self.crop_size} exceeds patch_size {self.patch_size}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")

    @property
    def effective_lambda_d(self) -> float:
        return self.lambda_d if self.lambda_d is not None else lambda_for_quality(self.quality)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            channels=self.channels,
            hyper_channels=self.hyper_channels,
            q_order=self.q_order,
            d1_kind=self.denoiser_kind,
            multiscale=self.multiscale,
            contrastive=self.contrastive_enabled,
            proj_dim=self.proj_dim,
            cbam_ratio=self.cbam_ratio,
            seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.effective_lambda_d, self.lambda_g, self.lambda_c, self.tau, self.contrastive_enabled)

    def to_dict(self) -> dict:
        """Sectioned form echoed into checkpoints and accepted by ``from_dict``."""
        return {
            "quality": self.quality,
            "seed": self.seed,
            "model": self.model_config().to_dict(),
            "denoiser": {"kind": self.denoiser_kind, "multiscale": self.multiscale},
            "loss": {
                "lambda_d": self.effective_lambda_d,
                "lambda_g": self.lambda_g,
                "lambda_c": self.lambda_c,
                "tau": self.tau,
                "contrastive_enabled": self.contrastive_enabled,
            },
            "optimizer": {
                "lr": self.lr,
                "betas": list(self.betas),
                "eps": self.eps,
                "schedule": self.schedule,
                "clip_grad_norm": self.clip_grad_norm,
            },
            "train": {
                "steps": self.steps,
                "batch_size": self.batch_size,
                "patch_size": self.patch_size,
                "crop_size": self.crop_size,
                "log_every": self.log_every,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        flat: dict = {}
        for key, value in d.items():
            if key == "model" and isinstance(value, dict):
                for k in ("channels", "hyper_channels", "q_order", "proj_dim", "cbam_ratio"):
                    if k in value:
                        flat[k] = value[k]
            elif key == "denoiser" and isinstance(value, dict):
                if "kind" in value:
                    flat["denoiser_kind"] = value["kind"]
                if "multiscale" in value:
                    flat["multiscale"] = value["multiscale"]
            elif key in ("loss", "optimizer", "train") and isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        unknown = set(flat) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "betas" in flat:
            flat["betas"] = tuple(flat["betas"])
        return cls(**flat)

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "TrainConfig":
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: Sequence[ag.Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, tuple(betas), eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(params: Sequence[ag.Tensor], max_norm: float) -> float:
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def learning_rate(cfg: TrainConfig, step: int) -> float:
    if cfg.schedule == "constant":
        return cfg.lr
    if cfg.schedule == "cosine":
        return cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + math.cos(math.pi * step / max(1, cfg.steps))))
    raise ValueError(f"unknown schedule {cfg.schedule!r}")


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(step)])


@dataclass
class Batch:
    clean: np.ndarray
    noisy: np.ndarray
    aug: Optional[np.ndarray]


def make_batch(images: list[np.ndarray], cfg: TrainConfig, rng: np.random.Generator, contrastive: bool) -> Batch:
    clean = sample_patches(images, cfg.batch_size, cfg.patch_size, rng)
    noisy = np.stack([synthesize_noise(c, sample_train_params(rng), rng) for c in clean])
    aug = None
    if contrastive:
        spec = AugmentSpec.random(crop=(cfg.crop_size, cfg.crop_size))
        # one crop geometry per batch so the augmented views stack
        aug = augment(clean, spec, rng)
    return Batch(clean, noisy, aug)


def compute_loss(model: JointCompressionModel, batch: Batch, weights: LossWeights, rng, mode: str = "train"):
    """Forward every branch and assemble the training objective; returns (loss, parts, result)."""
    use_cl = weights.contrastive_enabled and model.proj is not None and batch.aug is not None
    res = model(batch.noisy, batch.clean, mode, rng, batch.aug if use_cl else None)
    npx = res.diagnostics["num_pixels"]
    parts = LossParts(
        bpp_y=rate(res.likelihoods_y) * (1.0 / npx),
        bpp_z=rate(res.likelihoods_z) * (1.0 / npx),
        distortion=mse_255(batch.clean, res.x_hat),
        guidance=guidance_loss(res.bundle.y0, res.bundle.y0_gt, res.bundle.y1, res.bundle.y1_gt),
        contrastive=contrastive_loss(res.emb_noisy, res.emb_aug, weights.tau) if use_cl else None,
    )
    return total_loss(parts, weights), parts, res


TELEMETRY_FIELDS = ("step", "loss", "bpp", "mse", "psnr", "guidance", "contrastive", "lr")


def train(cfg: TrainConfig, images: list[np.ndarray], telemetry_path: Optional[str] = None,
          dump_dir: Optional[str] = None, model: Optional[JointCompressionModel] = None):
    """Train from scratch (or continue ``model``); returns (model, history rows)."""
    if not images:
        raise ValueError("empty dataset")
    model = model if model is not None else JointCompressionModel(cfg.model_config())
    weights = cfg.loss_weights()
    opt = Adam(model.parameters(), cfg.lr, cfg.betas, cfg.eps)
    history = []
    writer = None
    fh = None
    if telemetry_path:
        fh = open(telemetry_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=TELEMETRY_FIELDS)
        writer.writeheader()
    try:
        for step in range(1, cfg.steps + 1):
            rng = step_rng(cfg.seed, step)
            batch = make_batch(images, cfg, rng, weights.contrastive_enabled and model.proj is not None)
            opt.zero_grad()
            with ag.Tape() as tape:
                loss, parts, _ = compute_loss(model, batch, weights, rng)
            value = loss.item()
            if not math.isfinite(value):
                _dump(dump_dir, cfg, step)
                raise TrainingError(f"non-finite loss at step {step}; batch seed = ({cfg.seed}, {step})")
            tape.backward(loss)
            if cfg.clip_grad_norm:
                clip_gradients(opt.params, cfg.clip_grad_norm)
            lr = learning_rate(cfg, step)
            opt.step(lr)
            mse = parts.distortion.item()
            row = {
                "step": step,
                "loss": value,
                "bpp": parts.bpp_y.item() + parts.bpp_z.item(),
                "mse": mse,
                "psnr": 10 * math.log10(255.0**2 / mse) if mse > 0 else float("inf"),
                "guidance": parts.guidance.item(),
                "contrastive": parts.contrastive.item() if parts.contrastive is not None else 0.0,
                "lr": lr,
            }
            history.append(row)
            if step % cfg.log_every == 0 or step == cfg.steps:
                log.info("step %d loss %.4f bpp %.4f psnr %.2f", step, value, row["bpp"], row["psnr"])
                if writer:
                    writer.writerow(row)
    finally:
        if fh:
            fh.close()
    return model, history


def _dump(dump_dir, cfg, step):
    if not dump_dir:
        return
    os.makedirs(dump_dir, exist_ok=True)
    with open(os.path.join(dump_dir, "nonfinite_batch.json"), "w") as fh:
        json.dump({"seed": cfg.seed, "step": step, "config": cfg.to_dict()}, fh, indent=2)


def train_from_dir(cfg: TrainConfig, dataset_dir: str, out_path: Optional[str] = None,
                   telemetry_path: Optional[str] = None):
    from . import checkpoint

    images = load_images(dataset_dir)
    model, history = train(cfg, images, telemetry_path, dump_dir=os.path.dirname(out_path or "") or None)
    if out_path:
        checkpoint.save(out_path, model, cfg.to_dict())
    return model, history


def evaluation_loss(model: JointCompressionModel, images: list[np.ndarray], cfg: TrainConfig, seed: int = 12345,
                    batches: int = 4) -> float:
    """Mean of rate + lambda_d * D + lambda_g * G on fixed held-out noisy batches.

    The contrastive term is left out so models with and without a projection
    head are scored on the same objective.
    """
    weights = cfg.loss_weights()
    weights = LossWeights(weights.lambda_d, weights.lambda_g, weights.lambda_c, weights.tau, False)
    vals = []
    for b in range(batches):
        rng = step_rng(seed, b)
        batch = make_batch(images, cfg, rng, contrastive=False)
        loss, _, _ = compute_loss(model, batch, weights, rng)
        vals.append(loss.item())
    return float(np.mean(vals))

