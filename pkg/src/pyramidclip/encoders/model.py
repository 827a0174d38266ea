"""Dual-stream model producing the five pyramid embeddings."""

from __future__ import annotations

import numpy as np

from ..data.batch import PyramidBatch
from ..numerics import Tensor
from ..objective import init_log_inv_tau
from .config import ImageEncoderConfig, TextEncoderConfig
from .layers import Module, param
from .text import TextEncoder
from .vision import build_image_encoder

EMBEDDING_KEYS = ("v_g", "v_l", "v_r", "l_s", "l_t")


class PyramidCLIPModel(Module):
    """One image encoder (views and ROI sequences) and one text encoder (text and summary)."""

    def __init__(self, image_cfg: ImageEncoderConfig, text_cfg: TextEncoderConfig, seed: int = 0):
        if image_cfg.embed_dim != text_cfg.embed_dim:
            raise ValueError("image and text encoders must share embed_dim")
        rng = np.random.default_rng(seed)
        self.image_cfg = image_cfg
        self.text_cfg = text_cfg
        self.image = build_image_encoder(image_cfg, rng)
        self.text = TextEncoder(text_cfg, rng)
        self.log_inv_tau = param(np.array(init_log_inv_tau()))

    def encode_images(self, views: np.ndarray) -> Tensor:
        return self.image(views)

    def encode_rois(self, roi: np.ndarray, roi_mask: np.ndarray | None = None) -> Tensor:
        return self.image.encode_roi(roi, roi_mask)

    def encode_texts(self, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        return self.text(ids, lengths)

    def encode_pyramid(
        self,
        batch: PyramidBatch,
        needed: tuple[str, ...] = EMBEDDING_KEYS,
        inference: bool = False,
    ) -> dict[str, Tensor]:
        """Embeddings for the requested slots of ``batch``.

        With ``inference`` only ``v`` (full image) and ``l_t`` are computed,
        from ``batch.full_views`` and the original text.
        """
        if inference:
            if batch.full_views is None:
                raise ValueError("inference needs a batch built with include_full=True")
            return {
                "v": self.encode_images(batch.full_views),
                "l_t": self.encode_texts(batch.text_ids, batch.text_lengths),
            }
        out: dict[str, Tensor] = {}
        if "v_g" in needed:
            out["v_g"] = self.encode_images(batch.global_views)
        if "v_l" in needed:
            out["v_l"] = self.encode_images(batch.local_views)
        if "v_r" in needed:
            out["v_r"] = self.encode_rois(batch.roi, batch.roi_mask)
        if "l_s" in needed:
            out["l_s"] = self.encode_texts(batch.summary_ids, batch.summary_lengths)
        if "l_t" in needed:
            out["l_t"] = self.encode_texts(batch.text_ids, batch.text_lengths)
        return out
