"""Differentiable primitives.

Every function takes and returns :class:`Tensor` objects and records a local
gradient rule. Broadcasting follows numpy; gradients are summed back onto the
broadcast input shape.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .tensor import DTYPE, Tensor, as_tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return Tensor.from_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return Tensor.from_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)

    return Tensor.from_op(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return Tensor.from_op(out, (a, b), bw, "div")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(np.log(xd), (x,), lambda g: (g / xd,), "log")


def square(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor.from_op(xd * xd, (x,), lambda g: (2.0 * g * xd,), "square")


def gelu_grad(x: np.ndarray, cdf: np.ndarray | None = None) -> np.ndarray:
    if cdf is None:
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    return Tensor.from_op(xd * cdf, (x,), lambda g: (g * gelu_grad(xd, cdf),), "gelu")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


# -- reductions and shape ------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor.from_op(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor.from_op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, tuple(axes))


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor.from_op(x.data[idx], (x,), bw, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def broadcast_to(x: Tensor, shape) -> Tensor:
    src = x.shape
    return Tensor.from_op(
        np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (unbroadcast(g, src),), "broadcast"
    )


# -- linear algebra --------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2:
        # shared weight matrix: fold the batch axes into one GEMM
        k, n = bd.shape
        a2 = ad.reshape(-1, k)
        out = (a2 @ bd).reshape(ad.shape[:-1] + (n,))

        def bw(g):
            g2 = g.reshape(-1, n)
            return (g2 @ bd.T).reshape(ad.shape), a2.T @ g2

        return Tensor.from_op(out, (a, b), bw, "matmul")

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return Tensor.from_op(ad @ bd, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def embedding(weight: Tensor, ids) -> Tensor:
    """Gather rows of ``weight`` for integer ``ids`` of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(f"ids out of range for embedding table of size {weight.shape[0]}")
    wshape = weight.shape

    def bw(g):
        out = np.zeros(wshape, dtype=DTYPE)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, wshape[1]))
        return (out,)

    return Tensor.from_op(weight.data[ids], (weight,), bw, "embedding")


# -- normalizations ----------------------------------------------------------

def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Stable softmax; entries where ``mask`` is False get probability exactly 0."""
    if x.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(mask, xd.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax slice with every entry masked")
        xd = np.where(mask, xd, -np.inf)
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(p, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), bw, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gain`` and shift by ``bias``."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match width {d}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        dxhat = g * gd
        dx = inv / d * (
            d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise ValueError("cannot L2-normalize a zero vector")
    y = xd / norm

    def bw(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)

    return Tensor.from_op(y, (x,), bw, "l2_normalize")


# -- convolutions --------------------------------------------------------------

def depthwise_conv3x3(x: Tensor, kernels: Tensor, channels_last: bool = False) -> Tensor:
    """Per-channel 3x3 convolution with zero padding 1.

    ``x`` is (..., C, H, W), or (..., H, W, C) with ``channels_last``;
    ``kernels`` is (C, 3, 3).
    """
    if x.ndim < 3:
        raise ValueError(f"depthwise_conv3x3 expects a (..., C, H, W) input, got {x.shape}")
    if channels_last:
        h, w, c = x.shape[-3:]
        xl = x.data.reshape(-1, h, w, c)
    else:
        c, h, w = x.shape[-3:]
        xl = x.data.reshape(-1, c, h, w).transpose(0, 2, 3, 1)
    if kernels.shape != (c, 3, 3):
        raise ValueError(f"kernel shape {kernels.shape} does not match {c} channels")
    b = xl.shape[0]
    xp = np.zeros((b, h + 2, w + 2, c), dtype=DTYPE)
    xp[:, 1:-1, 1:-1] = xl
    k = kernels.data
    out = np.zeros((b, h, w, c), dtype=DTYPE)
    for i in range(3):
        for j in range(3):
            out += xp[:, i:i + h, j:j + w] * k[:, i, j]

    def to_input_layout(arr):
        if channels_last:
            return arr.reshape(x.shape)
        return np.ascontiguousarray(arr.transpose(0, 3, 1, 2)).reshape(x.shape)

    def bw(g):
        if channels_last:
            g = g.reshape(b, h, w, c)
        else:
            g = g.reshape(b, c, h, w).transpose(0, 2, 3, 1)
        gxp = np.zeros(xp.shape, dtype=DTYPE)
        gk = np.empty(k.shape, dtype=DTYPE)
        for i in range(3):
            for j in range(3):
                gxp[:, i:i + h, j:j + w] += g * k[:, i, j]
                gk[:, i, j] = np.einsum("bhwc,bhwc->c", g, xp[:, i:i + h, j:j + w])
        return to_input_layout(gxp[:, 1:-1, 1:-1]), gk

    return Tensor.from_op(to_input_layout(out), (x, kernels), bw, "depthwise_conv3x3")


def conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Dense 2-D convolution of (N, Cin, H, W) with weight (Cout, Cin, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, weight {weight.shape}")
    _, _, kh, kw = weight.shape
    xp = np.pad(x.data, [(0, 0), (0, 0), (padding, padding), (padding, padding)])
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = windows[:, :, ::stride, ::stride]  # (N, Cin, Ho, Wo, kh, kw)
    ho, wo = cols.shape[2], cols.shape[3]
    wd = weight.data
    out = np.einsum("nchwij,ocij->nohw", cols, wd, optimize=True)

    def bw(g):
        gw = np.einsum("nohw,nchwij->ocij", g, cols, optimize=True)
        gcols = np.einsum("nohw,ocij->nchwij", g, wd, optimize=True)
        gxp = np.zeros(xp.shape, dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[..., i, j]
        hp, wp = xp.shape[2], xp.shape[3]
        return gxp[:, :, padding:hp - padding, padding:wp - padding], gw

    return Tensor.from_op(out, (x, weight), bw, "conv2d")
