from __future__ import annotations

import numpy as np

from ..numerics import Tensor, ops
from ..numerics.ops import embedding
from .config import TextEncoderConfig
from .layers import Block, LayerNorm, Module, param, trunc_normal
from .vision import Head


class TextEncoder(Module):
    """Transformer over token ids, read out at the EOS position.

    Attention is bidirectional but keys past ``true_length`` are masked, so
    PAD content never reaches the real positions.
    """

    def __init__(self, cfg: TextEncoderConfig, rng):
        self.cfg = cfg
        d = cfg.width
        self.token_embed = param(trunc_normal(rng, (cfg.vocab_size, d)))
        self.pos_embed = param(trunc_normal(rng, (cfg.context_length, d)))
        self.blocks = {f"block{i}": Block(rng, d, cfg.heads, cfg.mlp_ratio) for i in range(cfg.layers)}
        self.head = Head(rng, d, cfg.embed_dim)

    def __call__(self, ids: np.ndarray, lengths: np.ndarray, trim: bool = True) -> Tensor:
        """(N, T) ids with per-row true lengths -> (N, embed_dim) unit rows.

        ``trim`` drops columns past the longest sequence, which only removes
        masked positions.
        """
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] > self.cfg.context_length:
            raise ValueError(f"token ids must be (N, <= {self.cfg.context_length}), got {ids.shape}")
        if np.any(lengths < 2) or np.any(lengths > ids.shape[1]):
            raise ValueError("every token sequence needs true_length >= 2 (BOS and EOS)")
        if trim:
            ids = ids[:, : int(lengths.max())]
        n, t = ids.shape
        x = ops.add(embedding(self.token_embed, ids), self.pos_embed[:t])
        key_mask = np.arange(t)[None, :] < lengths[:, None]
        for block in self.blocks.values():
            x = block(x, key_mask)
        eos = x[np.arange(n), lengths - 1]
        return self.head(eos)
