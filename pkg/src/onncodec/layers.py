"""Parameter containers built on the autograd ops."""

from __future__ import annotations

import zlib
from typing import Iterator, Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def layer_rng(seed: int, name: str) -> np.random.Generator:
    """Generator keyed on (seed, layer name) so unrelated layers never share a stream."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal module: attributes that are Tensors, Modules or lists of either are walked."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            yield from _walk(value, name)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        stride: int = 1,
        padding: Optional[int] = None,
        dilation: int = 1,
        rng: Optional[np.random.Generator] = None,
        zero_init: bool = False,
        bias: bool = True,
    ):
        if min(c_in, c_out, k) < 1:
            raise ValueError(f"Conv2d dims must be positive, got {(c_in, c_out, k)}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride, self.dilation = stride, dilation
        self.padding = dilation * (k - 1) // 2 if padding is None else padding
        bound = 0.0 if zero_init else np.sqrt(3.0 / (c_in * k * k))
        self.weight = _param(_uniform(rng, (c_out, c_in, k, k), bound), "weight")
        self.bias = _param(np.zeros(c_out), "bias") if bias else None

    def forward(self, x):
        return ag.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class Upsample2x(Module):
    """Stride-2 transposed convolution doubling H and W exactly."""

    def __init__(self, c_in: int, c_out: int, k: int = 5, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        # each output sees about k*k/4 taps per input channel
        bound = np.sqrt(3.0 / max(1.0, c_in * k * k / 4.0))
        self.weight = _param(_uniform(rng, (c_in, c_out, k, k), bound), "weight")
        self.bias = _param(np.zeros(c_out), "bias")

    def forward(self, x):
        return ag.upsample2x_transposed_conv(x, self.weight, self.bias)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _param(_uniform(rng, (d_in, d_out), np.sqrt(3.0 / d_in)), "weight")
        self.bias = _param(np.zeros(d_out), "bias")

    def forward(self, x):
        return ag.matmul(x, self.weight) + self.bias
