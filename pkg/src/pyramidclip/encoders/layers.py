"""Parameter containers and transformer building blocks."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.ops import depthwise_conv3x3, gelu, layer_norm, linear, softmax

INIT_STD = 0.02
CONV_STD = (2.0 / 9.0) ** 0.5  # He scale for a 3x3 single-channel kernel


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by redrawing."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Holds parameters as Tensor attributes and children as Module attributes.

    A dict attribute of modules contributes ``<attr>.<key>`` names.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, dict):
                for key, child in value.items():
                    if isinstance(child, Module):
                        yield from child.named_parameters(f"{name}.{key}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match parameter {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.weight = param(trunc_normal(rng, (d_in, d_out)))
        self.bias = param(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    eps = 1e-5

    def __init__(self, d: int):
        self.gain = param(np.ones(d))
        self.bias = param(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


def split_heads(x: Tensor, heads: int) -> Tensor:
    n, t, d = x.shape
    return ops.transpose(ops.reshape(x, (n, t, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    n, h, t, dh = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (n, t, h * dh))


class MultiHeadAttention(Module):
    """Multi-head scaled dot-product attention.

    The key projection has no bias: a key bias adds the same amount to every
    score of a query row, which the softmax cancels, so its gradient is
    identically zero.
    """

    def __init__(self, rng, d: int, heads: int):
        if d % heads:
            raise ValueError(f"width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(rng, d, d)
        self.k = Linear(rng, d, d, bias=False)
        self.v = Linear(rng, d, d)
        self.out = Linear(rng, d, d)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None, first_query_only: bool = False) -> Tensor:
        """Self-attention over (N, T, d); ``key_mask`` (N, T) marks valid keys.

        With ``first_query_only`` only position 0 queries (attention pooling)
        and the result is (N, 1, d).
        """
        h = self.heads
        q_in = x[:, :1] if first_query_only else x
        q = split_heads(self.q(q_in), h)
        k = split_heads(self.k(x), h)
        v = split_heads(self.v(x), h)
        scale = 1.0 / math.sqrt(q.shape[-1])
        scores = ops.mul(ops.matmul(q, ops.swapaxes(k, -1, -2)), scale)
        mask = None if key_mask is None else key_mask[:, None, None, :]
        attn = softmax(scores, axis=-1, mask=mask)
        return self.out(merge_heads(ops.matmul(attn, v)))


class MLP(Module):
    def __init__(self, rng, d: int, ratio: int = 4):
        self.fc1 = Linear(rng, d, ratio * d)
        self.fc2 = Linear(rng, ratio * d, d)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class LeFF(Module):
    """Feed-forward sublayer whose patch tokens pass through a 3x3 depthwise conv.

    Input is (N, 1 + P, d) with a class token in row 0 and P patch tokens on
    a square grid in row-major order. The class-token row is returned
    unchanged.
    """

    def __init__(self, rng, d: int, ratio: int = 4):
        hidden = ratio * d
        self.fc1 = Linear(rng, d, hidden)
        self.conv = param(trunc_normal(rng, (hidden, 3, 3), std=CONV_STD))
        self.conv_bias = param(np.zeros(hidden))
        self.fc2 = Linear(rng, hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        n, t, _ = x.shape
        p = t - 1
        g = math.isqrt(p)
        if g * g != p:
            raise ValueError(f"LeFF needs a square patch grid, got {p} patch tokens")
        cls = x[:, :1]
        h = gelu(self.fc1(x[:, 1:]))  # (N, P, e*d)
        e = h.shape[-1]
        grid = depthwise_conv3x3(ops.reshape(h, (n, g, g, e)), self.conv, channels_last=True)
        h = ops.reshape(gelu(ops.add(grid, self.conv_bias)), (n, p, e))
        return ops.concat([cls, self.fc2(h)], axis=1)


class Block(Module):
    """Pre-norm transformer layer; ``leff=True`` swaps the FFN for LeFF."""

    def __init__(self, rng, d: int, heads: int, ratio: int = 4, leff: bool = False):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(rng, d, heads)
        self.ln2 = LayerNorm(d)
        if leff:
            self.leff = LeFF(rng, d, ratio)
        else:
            self.mlp = MLP(rng, d, ratio)

    @property
    def ffn(self):
        return self.leff if hasattr(self, "leff") else self.mlp

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x = ops.add(x, self.attn(self.ln1(x), key_mask))
        return ops.add(x, self.ffn(self.ln2(x)))
