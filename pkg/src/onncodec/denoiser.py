"""Residual feature denoisers: multi-scale dilated branches, CBAM, output layer.

A stage computes a correction ``d(feat)``; callers add it back to ``feat``.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .layers import Conv2d, Module, layer_rng
from .selfonn import GenerativeNeuronLayer

KINDS = ("conv", "selfonn")
DILATIONS = (1, 2, 3, 4)


def _make_layer(kind, c_in, c_out, k, dilation, q, rng, zero_init=False):
    if kind == "conv":
        return Conv2d(c_in, c_out, k, dilation=dilation, rng=rng, zero_init=zero_init)
    if kind == "selfonn":
        return GenerativeNeuronLayer(c_in, c_out, k, q=q, dilation=dilation, rng=rng, zero_init=zero_init)
    raise ValueError(f"unknown layer kind {kind!r}; expected one of {KINDS}")


class MultiScaleBlock(Module):
    """Four 3x3 branches at dilation 1..4, each emitting C/4 channels, concatenated.

    ``multiscale=False`` collapses this to one dilation-1 branch with all C channels.
    """

    def __init__(self, channels: int, kind: str = "conv", multiscale: bool = True, q: int = 3,
                 seed: int = 0, name: str = "ms"):
        if multiscale and channels % 4:
            raise ValueError(f"multi-scale block needs channels divisible by 4, got {channels}")
        self.channels, self.kind, self.multiscale = channels, kind, multiscale
        if multiscale:
            self.branches = [
                _make_layer(kind, channels, channels // 4, 3, d, q, layer_rng(seed, f"{name}.b{d}"))
                for d in DILATIONS
            ]
        else:
            self.branches = [_make_layer(kind, channels, channels, 3, 1, q, layer_rng(seed, f"{name}.b1"))]

    def forward(self, x):
        outs = [branch(x) for branch in self.branches]
        return outs[0] if len(outs) == 1 else ag.concat_channels(outs)


def multiscale_forward(block: MultiScaleBlock, x):
    return block(x)


class CbamBlock(Module):
    """Channel attention from a shared MLP on pooled descriptors, then 7x7 spatial attention."""

    def __init__(self, channels: int, ratio: int = 4, seed: int = 0, name: str = "cbam"):
        hidden = max(1, channels // ratio)
        self.fc1 = Conv2d(channels, hidden, 1, rng=layer_rng(seed, f"{name}.fc1"))
        self.fc2 = Conv2d(hidden, channels, 1, rng=layer_rng(seed, f"{name}.fc2"))
        self.spatial = Conv2d(2, 1, 7, rng=layer_rng(seed, f"{name}.spatial"))

    def _mlp(self, v):
        return self.fc2(ag.relu(self.fc1(v)))

    def channel_attention(self, x):
        return ag.sigmoid(self._mlp(ag.global_avg_pool(x)) + self._mlp(ag.global_max_pool(x)))

    def spatial_attention(self, x):
        pooled = ag.concat_channels([ag.mean(x, axis=1, keepdims=True), ag.max_(x, axis=1, keepdims=True)])
        return ag.sigmoid(self.spatial(pooled))

    def forward(self, x):
        x = x * self.channel_attention(x)
        return x * self.spatial_attention(x)


def cbam_forward(block: CbamBlock, x):
    return block(x)


class DenoiserStage(Module):
    """``out(act(cbam(multiscale(act(feat)))))`` with a zero-initialised output layer.

    ``act`` is tanh so generative layers always see inputs in (-1, 1); the same
    wiring is used for convolutional stages, which makes the two kinds
    interchangeable in ablations.
    """

    def __init__(self, channels: int, kind: str = "conv", multiscale: bool = True, q: int = 3,
                 cbam_ratio: int = 4, seed: int = 0, name: str = "d", zero_init_last: bool = True):
        if kind not in KINDS:
            raise ValueError(f"unknown denoiser kind {kind!r}; expected one of {KINDS}")
        self.kind, self.channels = kind, channels
        self.multiscale = MultiScaleBlock(channels, kind, multiscale, q, seed, f"{name}.ms")
        self.cbam = CbamBlock(channels, cbam_ratio, seed, f"{name}.cbam")
        self.out = _make_layer(kind, channels, channels, 3, 1, q, layer_rng(seed, f"{name}.out"),
                               zero_init=zero_init_last)

    def forward(self, feat):
        h = self.multiscale(ag.tanh(feat))
        h = self.cbam(h)
        out = self.out(ag.tanh(h))
        if out.shape != ag.as_tensor(feat).shape:
            raise AssertionError(f"denoiser changed shape {feat.shape} -> {out.shape}")
        return out


def denoise_stage(stage: DenoiserStage, feat):
    return stage(feat)


def make_stage(channels: int, kind: str, multiscale: bool = True, q: int = 3, cbam_ratio: int = 4,
               seed: int = 0, name: str = "d", zero_init_last: bool = True) -> DenoiserStage:
    return DenoiserStage(channels, kind, multiscale, q, cbam_ratio, seed, name, zero_init_last)


def copy_parameters(src: Module, dst: Module) -> None:
    """Copy values between modules whose parameter lists line up (conv vs Q=1 generative)."""
    sp, dp = src.parameters(), dst.parameters()
    if len(sp) != len(dp):
        raise ValueError(f"parameter lists differ: {len(sp)} vs {len(dp)}")
    for a, b in zip(sp, dp):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        b.data = np.array(a.data)

