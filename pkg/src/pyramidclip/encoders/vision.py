"""Image encoders split into a front part and a rear part shared with the ROI path."""

from __future__ import annotations

import logging

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.ops import conv2d, gelu, l2_normalize
from .config import ImageEncoderConfig
from .layers import Block, LayerNorm, Linear, Module, MultiHeadAttention, param, trunc_normal

logger = logging.getLogger(__name__)


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(N, 3, S, S) -> (N, P, 3 * patch * patch), patches in row-major order."""
    n, c, h, w = images.shape
    g_h, g_w = h // patch, w // patch
    x = images.reshape(n, c, g_h, patch, g_w, patch).transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(n, g_h * g_w, c * patch * patch)


class RoiEmbedding(Module):
    """Linear projection of packed ROI vectors plus a learned leading class token.

    No positional embedding is added: box coordinates are already part of
    every packed vector.
    """

    def __init__(self, rng, in_dim: int, width: int):
        self.proj = Linear(rng, in_dim, width)
        self.class_token = param(trunc_normal(rng, (width,)))

    def __call__(self, roi: np.ndarray, roi_mask: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
        """(N, M, F+4) -> sequence (N, 1+M, d) and key mask (N, 1+M)."""
        n, m, f = roi.shape
        if f != self.proj.weight.shape[0]:
            raise ValueError(f"ROI vectors have dimension {f}, embedding expects {self.proj.weight.shape[0]}")
        d = self.class_token.shape[0]
        cls = ops.broadcast_to(ops.reshape(self.class_token, (1, 1, d)), (n, 1, d))
        parts = [cls]
        if m:
            parts.append(self.proj(Tensor(roi)))
        seq = ops.concat(parts, axis=1) if len(parts) > 1 else cls
        mask = np.ones((n, m), dtype=bool) if roi_mask is None else np.asarray(roi_mask, dtype=bool)
        return seq, np.concatenate([np.ones((n, 1), dtype=bool), mask], axis=1)


class Head(Module):
    """Layer norm, linear projection to the joint space, L2 normalization."""

    def __init__(self, rng, width: int, embed_dim: int):
        self.ln = LayerNorm(width)
        self.proj = Linear(rng, width, embed_dim, bias=False)

    def __call__(self, x: Tensor) -> Tensor:
        return l2_normalize(self.proj(self.ln(x)))


class ViTEncoder(Module):
    def __init__(self, cfg: ImageEncoderConfig, rng):
        self.cfg = cfg
        d = cfg.width
        n_patches = cfg.grid**2
        self.patch_embed = Linear(rng, 3 * cfg.patch**2, d, bias=False)
        self.class_token = param(trunc_normal(rng, (d,)))
        self.pos_embed = param(trunc_normal(rng, (1 + n_patches, d)))
        self.ln_pre = LayerNorm(d)
        self.f1 = {
            f"block{i}": Block(rng, d, cfg.heads, cfg.leff_ratio if cfg.use_leff else cfg.mlp_ratio, leff=cfg.use_leff)
            for i in range(cfg.front_layers)
        }
        self.f2 = {f"block{i}": Block(rng, d, cfg.heads, cfg.mlp_ratio) for i in range(cfg.front_layers, cfg.layers)}
        self.roi = RoiEmbedding(rng, cfg.roi_feature_dim + 4, d)
        self.head = Head(rng, d, cfg.embed_dim)
        if cfg.front_layers == cfg.layers:
            logger.warning("front_layers == layers: ROI sequences skip every transformer layer")

    def front(self, images: np.ndarray) -> Tensor:
        n = images.shape[0]
        d = self.cfg.width
        tokens = self.patch_embed(Tensor(patchify(images, self.cfg.patch)))
        cls = ops.broadcast_to(ops.reshape(self.class_token, (1, 1, d)), (n, 1, d))
        x = ops.add(ops.concat([cls, tokens], axis=1), self.pos_embed)
        x = self.ln_pre(x)
        for block in self.f1.values():
            x = block(x)
        return x

    def rear(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        """Remaining layers, then the class-token readout through the head."""
        for block in self.f2.values():
            x = block(x, key_mask)
        return self.head(x[:, 0])

    def __call__(self, images: np.ndarray) -> Tensor:
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != (3, self.cfg.side, self.cfg.side):
            raise ValueError(f"expected views of shape (3, {self.cfg.side}, {self.cfg.side}), got {images.shape[1:]}")
        return self.rear(self.front(images))

    def encode_roi(self, roi: np.ndarray, roi_mask: np.ndarray | None = None) -> Tensor:
        seq, mask = self.roi(roi, roi_mask)
        return self.rear(seq, mask)


class AttentionPool(Module):
    """Single-query attention over a token sequence whose row 0 is the query token."""

    def __init__(self, rng, width: int, heads: int, n_spatial: int):
        self.pos_embed = param(trunc_normal(rng, (1 + n_spatial, width)))
        self.attn = MultiHeadAttention(rng, width, heads)

    def __call__(self, seq: Tensor, key_mask: np.ndarray | None = None, positional: bool = True) -> Tensor:
        if positional:
            seq = ops.add(seq, self.pos_embed)
        return self.attn(seq, key_mask, first_query_only=True)[:, 0]


class CNNEncoder(Module):
    """Four strided 3x3 conv stages; the rear part is attention pooling."""

    STRIDES = (2, 2, 2, 1)

    def __init__(self, cfg: ImageEncoderConfig, rng):
        self.cfg = cfg
        w = cfg.width
        channels = [3, w // 4, w // 2, w, w, w]
        self.stem = param(trunc_normal(rng, (channels[1], 3, 3, 3), std=(2.0 / 27) ** 0.5))
        self.stem_bias = param(np.zeros(channels[1]))
        self.stages = {}
        for i, stride in enumerate(self.STRIDES):
            cin, cout = channels[i + 1], channels[i + 2]
            stage = Module()
            stage.weight = param(trunc_normal(rng, (cout, cin, 3, 3), std=(2.0 / (9 * cin)) ** 0.5))
            stage.bias = param(np.zeros(cout))
            stage.stride = stride
            self.stages[f"stage{i}"] = stage
        self.pool = AttentionPool(rng, w, cfg.heads, cfg.grid**2)
        self.roi = RoiEmbedding(rng, cfg.roi_feature_dim + 4, w)
        self.head = Head(rng, w, cfg.embed_dim)

    def front(self, images: np.ndarray) -> Tensor:
        x = conv2d(Tensor(images), self.stem, stride=1, padding=1)
        x = gelu(ops.add(x, ops.reshape(self.stem_bias, (-1, 1, 1))))
        for stage in self.stages.values():
            x = conv2d(x, stage.weight, stride=stage.stride, padding=1)
            x = gelu(ops.add(x, ops.reshape(stage.bias, (-1, 1, 1))))
        n, c, h, w = x.shape
        return ops.transpose(ops.reshape(x, (n, c, h * w)), (0, 2, 1))  # (N, HW, C)

    def __call__(self, images: np.ndarray) -> Tensor:
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != (3, self.cfg.side, self.cfg.side):
            raise ValueError(f"expected views of shape (3, {self.cfg.side}, {self.cfg.side}), got {images.shape[1:]}")
        tokens = self.front(images)
        seq = ops.concat([ops.mean(tokens, axis=1, keepdims=True), tokens], axis=1)
        return self.head(self.pool(seq))

    def encode_roi(self, roi: np.ndarray, roi_mask: np.ndarray | None = None) -> Tensor:
        seq, mask = self.roi(roi, roi_mask)
        return self.head(self.pool(seq, mask, positional=False))


def build_image_encoder(cfg: ImageEncoderConfig, rng) -> ViTEncoder | CNNEncoder:
    return ViTEncoder(cfg, rng) if cfg.variant == "vit" else CNNEncoder(cfg, rng)
