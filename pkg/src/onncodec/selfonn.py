"""Generative-neuron (Self-ONN) layers.

Each output is a truncated Maclaurin polynomial of the input, one kernel bank
per power::

    out = bias + conv(x, w_1) + conv(x**2, w_2) + ... + conv(x**Q, w_Q)

With ``Q == 1`` this is exactly an ordinary convolution.
"""

from __future__ import annotations

import math
import warnings
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .layers import Module, layer_rng


class DomainWarning(UserWarning):
    """Input to a generative layer left the bounded range its powers assume."""


class GenerativeNeuronLayer(Module):
    """Bank of ``q`` kernel sets plus a bias, all sharing stride/padding/dilation.

    Args:
        c_in, c_out, k: channel counts and square kernel size.
        q: Taylor order (number of power terms).
        rng: generator for the initial kernels.
        zero_init: start with every kernel and the bias at zero.
        check_bounds: warn when ``|x| > 1 + eps`` reaches the layer.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int = 3,
        q: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        dilation: int = 1,
        rng: Optional[np.random.Generator] = None,
        zero_init: bool = False,
        check_bounds: bool = False,
    ):
        if min(c_in, c_out, k, q) < 1:
            raise ValueError(f"all dims must be positive, got c_in={c_in} c_out={c_out} k={k} q={q}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.c_in, self.c_out, self.k, self.q = c_in, c_out, k, q
        self.a = 0.0
        self.stride, self.dilation = stride, dilation
        self.padding = dilation * (k - 1) // 2 if padding is None else padding
        self.check_bounds = check_bounds
        base = 0.0 if zero_init else math.sqrt(3.0 / (c_in * k * k))
        self.kernels = [
            Tensor(
                rng.uniform(-1.0, 1.0, size=(c_out, c_in, k, k)) * (base / math.factorial(n)),
                requires_grad=True,
                name=f"w{n}",
            )
            for n in range(1, q + 1)
        ]
        self.bias = Tensor(np.zeros(c_out), requires_grad=True, name="w0")

    def forward(self, x):
        x = ag.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"expected (N,{self.c_in},H,W) input, got {x.shape}")
        if self.check_bounds and np.abs(x.data).max(initial=0.0) > 1.0 + 1e-9:
            warnings.warn("generative layer input exceeds [-1, 1]", DomainWarning, stacklevel=2)
        if self.q == 1:
            return ag.conv2d(x, self.kernels[0], self.bias, self.stride, self.padding, self.dilation)
        powers = [x] + [ag.elementwise_pow(x, n) for n in range(2, self.q + 1)]
        # one convolution over stacked powers == sum of per-power convolutions
        return ag.conv2d(
            ag.concat_channels(powers),
            ag.concat(self.kernels, axis=1),
            self.bias,
            self.stride,
            self.padding,
            self.dilation,
        )


def make_selfonn(c_in: int, c_out: int, k: int, Q: int, seed: int) -> GenerativeNeuronLayer:
    """Seeded generative layer with 'same' padding."""
    return GenerativeNeuronLayer(c_in, c_out, k, q=Q, rng=layer_rng(seed, "selfonn"))


def selfonn_forward(layer: GenerativeNeuronLayer, x) -> Tensor:
    return layer(x)


def parameter_count(c_in: int, c_out: int, k: int, q: int) -> int:
    return q * c_out * c_in * k * k + c_out
