"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Operations record themselves on the innermost active :class:`Tape`. Outside a
tape nothing is recorded, which is how inference runs::

    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ArrayLike = Union["Tensor", np.ndarray, float, int]

_TAPE_STACK: list[Optional["Tape"]] = []


class Tensor:
    """A float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")
    # make ``ndarray <op> Tensor`` dispatch to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # basic properties
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return elementwise_pow(self, n)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations; creation order is a topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        for i in range(len(_TAPE_STACK) - 1, -1, -1):
            if _TAPE_STACK[i] is self:
                del _TAPE_STACK[i]
                break

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward: Callable) -> None:
        self.nodes.append(_Node(tuple(inputs), output, backward))

    def backward(self, loss: Tensor, retain: bool = False) -> None:
        backward(self, loss, retain=retain)


def backward(tape: Tape, loss: Tensor, retain: bool = False) -> None:
    """Populate ``.grad`` of every grad-requiring tensor that ``loss`` depends on.

    Gradients are added to existing ``.grad`` buffers, so callers zero them
    between optimizer steps. The tape is cleared afterwards unless ``retain``.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    touched: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                touched[key] = t
        node_out = node.output
        _accumulate(node_out, g)
    # leaves left in the dict never appeared as a node output
    for key, g in grads.items():
        _accumulate(touched[key], g)
    if not retain:
        tape.nodes.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.broadcast_to(g, t.shape) if g.shape != t.shape else g
    t.grad = g.copy() if t.grad is None else t.grad + g


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_grad:
    """Suspend recording inside an enclosing tape."""

    def __enter__(self) -> "no_grad":
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def custom_op(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap ``data`` as the output of an operation on ``inputs``.

    ``backward_fn(grad_out)`` must return one gradient array (or None) per input.
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(inputs, out, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{opname}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return custom_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return custom_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return custom_op(-a.data, (a,), lambda g: (-g,))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return custom_op(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return custom_op(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        ),
    )


def elementwise_pow(x: ArrayLike, n: int) -> Tensor:
    """Raise every element to the positive integer power ``n``."""
    if int(n) != n or n < 1:
        raise ValueError(f"elementwise_pow needs a positive integer exponent, got {n}")
    n = int(n)
    x = as_tensor(x)
    if n == 1:
        return custom_op(x.data.copy(), (x,), lambda g: (g,))
    lower = x.data ** (n - 1)
    return custom_op(lower * x.data, (x,), lambda g: (g * n * lower,))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return custom_op(out, (x,), lambda g: (g * out,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise ValueError("log of a nonpositive value")
    return custom_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def abs_(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return custom_op(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return custom_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: ArrayLike, slope: float = 0.1) -> Tensor:
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return custom_op(x.data * factor, (x,), lambda g: (g * factor,))


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return custom_op(out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return custom_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    return custom_op(out, (x,), lambda g: (g * _sigmoid(x.data),))


def lower_bound(x: ArrayLike, bound: float) -> Tensor:
    """``max(x, bound)``; gradients below the bound pass only if they push upward."""
    x = as_tensor(x)
    above = x.data >= bound
    out = np.where(above, x.data, bound)
    return custom_op(out, (x,), lambda g: (g * (above | (g < 0)),))


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return custom_op(out, (x,), bw)


def mean(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return custom_op(out, (x,), bw)


def max_(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    """Maximum over ``axis``; ties send the gradient to every maximal entry, split evenly."""
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    kept = x.data.max(axis=axes, keepdims=True)
    mask = x.data == kept
    share = mask / mask.sum(axis=axes, keepdims=True)
    out = kept if keepdims else np.squeeze(kept, axis=axes)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (g * share,)

    return custom_op(out, (x,), bw)


def logsumexp(x: ArrayLike, axis: int = -1, where: Optional[np.ndarray] = None) -> Tensor:
    """Stable log-sum-exp along one axis, optionally over the entries selected by ``where``."""
    x = as_tensor(x)
    mask = np.ones(x.shape, dtype=bool) if where is None else np.broadcast_to(where, x.shape)
    if not np.all(mask.any(axis=axis)):
        raise ValueError("logsumexp: every slice needs at least one selected entry")
    masked = np.where(mask, x.data, -np.inf)
    m = masked.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(masked - m), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    soft = e / s
    return custom_op(out, (x,), lambda g: (np.expand_dims(g, axis) * soft,))


def global_avg_pool(x: ArrayLike) -> Tensor:
    """(N,C,H,W) -> (N,C,1,1) spatial mean."""
    return mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x: ArrayLike) -> Tensor:
    """(N,C,H,W) -> (N,C,1,1) spatial maximum."""
    return max_(x, axis=(2, 3), keepdims=True)


def l1_distance(a: ArrayLike, b: ArrayLike, reduction: str = "mean") -> Tensor:
    """Sum or mean of ``|a - b|`` over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"l1_distance: shape mismatch {a.shape} vs {b.shape}")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    diff = a.data - b.data
    scale = 1.0 / diff.size if reduction == "mean" else 1.0
    sign = np.sign(diff) * scale
    out = np.abs(diff).sum() * scale
    return custom_op(
        np.asarray(out),
        (a, b),
        lambda g: (g * sign, -g * sign),
    )


def l2_normalize(x: ArrayLike, axis: int = 1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    out = x.data / norm

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - out * dot) / norm,)

    return custom_op(out, (x,), bw)


# ---------------------------------------------------------------- shape ops


def reshape(x: ArrayLike, shape) -> Tensor:
    x = as_tensor(x)
    return custom_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {x.shape}")
    return custom_op(x.data.T, (x,), lambda g: (g.T,))


def getitem(x: ArrayLike, index) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        full = np.zeros(x.shape)
        if _is_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return custom_op(x.data[index], (x,), bw)


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[ArrayLike], axis: int = 1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat needs at least one tensor")
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(
            a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ValueError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return custom_op(
        np.concatenate([t.data for t in ts], axis=axis),
        ts,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def concat_channels(tensors: Sequence[ArrayLike]) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    return concat(tensors, axis=1)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return custom_op(
        a.data @ b.data,
        (a, b),
        lambda g: (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        ),
    )


# ---------------------------------------------------------------- convolution


def conv_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _windows(xp: np.ndarray, k: int, stride: int, dilation: int, ho: int, wo: int):
    """Strided view (N, C, Ho, Wo, k, k) of a padded input; no copy."""
    span = dilation * (k - 1) + 1
    view = sliding_window_view(xp, (span, span), axis=(2, 3))
    return view[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride, ::dilation, ::dilation]


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _conv_fwd(x, w, stride, padding, dilation):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho = conv_output_size(h, k, stride, padding, dilation)
    wo = conv_output_size(wd, k, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: input {x.shape} too small for kernel {k} dilation {dilation}")
    win = _windows(_pad(x, padding), k, stride, dilation, ho, wo)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    return out.transpose(0, 3, 1, 2), win


def _conv_bwd_input(g, w, in_shape, stride, padding, dilation):
    n, c, h, wd = in_shape
    _, _, k, _ = w.shape
    _, _, ho, wo = g.shape
    cols = np.tensordot(g, w, axes=([1], [0]))  # (N, Ho, Wo, C, k, k)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)  # (N, C, k, k, Ho, Wo)
    gp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            r, q = i * dilation, j * dilation
            gp[:, :, r : r + hs : stride, q : q + ws : stride] += cols[:, :, i, j]
    if padding:
        gp = gp[:, :, padding:-padding, padding:-padding]
    return gp


def _conv_bwd_weight(win, g):
    # win (N, C, Ho, Wo, k, k), g (N, O, Ho, Wo) -> (O, C, k, k)
    return np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))


def _check_conv_args(stride, dilation, padding):
    if int(stride) < 1 or int(dilation) < 1:
        raise ValueError(f"stride and dilation must be >= 1, got {stride}, {dilation}")
    if int(padding) < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")


def conv2d(
    x: ArrayLike,
    weight: ArrayLike,
    bias: Optional[ArrayLike] = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """2-D cross-correlation of an (N,C,H,W) input with an (O,C,k,k) kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv_args(stride, dilation, padding)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d expects square kernels, got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d: input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    out, win = _conv_fwd(x.data, weight.data, stride, padding, dilation)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({weight.shape[0]},)")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)

    def bw(g):
        gx = _conv_bwd_input(g, weight.data, x.shape, stride, padding, dilation) if x.requires_grad else None
        gw = _conv_bwd_weight(win, g) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return custom_op(out, inputs, bw)


def conv_transpose2d(
    x: ArrayLike,
    weight: ArrayLike,
    bias: Optional[ArrayLike] = None,
    stride: int = 2,
    padding: int = 0,
    output_padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """Adjoint of :func:`conv2d`; weight is (C_in, C_out, k, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv_args(stride, dilation, padding)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ValueError(f"conv_transpose2d: incompatible shapes {x.shape} and {weight.shape}")
    if not 0 <= output_padding < max(stride, dilation):
        raise ValueError("output_padding must be smaller than stride or dilation")
    n, _, h, wd = x.shape
    k = weight.shape[2]
    ho = (h - 1) * stride - 2 * padding + dilation * (k - 1) + output_padding + 1
    wo = (wd - 1) * stride - 2 * padding + dilation * (k - 1) + output_padding + 1
    out_shape = (n, weight.shape[1], ho, wo)
    out = _conv_bwd_input(x.data, weight.data, out_shape, stride, padding, dilation)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise ValueError(f"conv_transpose2d: bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)

    def bw(g):
        gx, win = _conv_fwd(g, weight.data, stride, padding, dilation)
        gw = _conv_bwd_weight(win, x.data) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return custom_op(out, inputs, bw)


def upsample2x_transposed_conv(x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None) -> Tensor:
    """Exact 2x spatial upsampling with an odd square kernel."""
    k = as_tensor(weight).shape[2]
    if k % 2 == 0:
        raise ValueError("upsample2x_transposed_conv expects an odd kernel size")
    return conv_transpose2d(x, weight, bias, stride=2, padding=k // 2, output_padding=1)


# ---------------------------------------------------------------- gradient check


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central finite differences of a scalar ``fn()`` w.r.t. ``param.data``.

    With ``indices`` (flat positions) only those entries are perturbed; the
    result then has one value per index.
    """
    flat = param.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = fn().item()
        flat[i] = orig - h
        fm = fn().item()
        flat[i] = orig
        out.append((fp - fm) / (2 * h))
    out = np.asarray(out)
    return out.reshape(param.shape) if indices is None else out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm error scaled by the larger of the two gradient magnitudes."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between tape gradients and finite differences over ``params``."""
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        worst = max(worst, relative_error(analytic, numerical_gradient(fn, p, h)))
    return worst

