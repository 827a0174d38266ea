"""Assembly of pyramid batches: two crops, two texts and an ROI sequence per sample."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .image import GLOBAL_CROP, LOCAL_CROP, CropSpec, full_view, sample_crop
from .manifest import PairedSample
from .roi import DEFAULT_FEATURE_DIM, RoiFeatureSet
from .tokenizer import CONTEXT_LENGTH, Vocabulary, tokenize

logger = logging.getLogger(__name__)

SUMMARY_MAX_WORDS = 12


def summarize_fallback(text: str) -> str:
    """First sentence (through its period), cut to at most 12 words."""
    if not text.strip():
        raise ValueError("cannot summarize empty text")
    stop = text.find(".")
    sentence = text if stop < 0 else text[: stop + 1]
    return " ".join(sentence.split()[:SUMMARY_MAX_WORDS])


def sample_rng(seed: int, sample_id: str, epoch: int) -> np.random.Generator:
    """Independent stream keyed by (seed, sample id, epoch)."""
    key = zlib.crc32(sample_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, key, epoch]))


@dataclass
class PyramidBatch:
    ids: list[str]
    global_views: np.ndarray  # (N, 3, S, S)
    local_views: np.ndarray  # (N, 3, S, S)
    roi: np.ndarray  # (N, Mmax, F + 4), zero rows past each sample's count
    roi_mask: np.ndarray  # (N, Mmax) bool
    text_ids: np.ndarray  # (N, 77)
    text_lengths: np.ndarray  # (N,)
    summary_ids: np.ndarray
    summary_lengths: np.ndarray
    full_views: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)


def pack_rois(rois: Sequence[RoiFeatureSet]) -> tuple[np.ndarray, np.ndarray]:
    dims = {r.feature_dim for r in rois}
    if len(dims) != 1:
        raise ValueError(f"ROI feature dimensions differ across samples: {sorted(dims)}")
    (f,) = dims
    m_max = max(r.count for r in rois)
    packed = np.zeros((len(rois), m_max, f + 4))
    mask = np.zeros((len(rois), m_max), dtype=bool)
    for i, r in enumerate(rois):
        packed[i, : r.count] = r.packed()
        mask[i, : r.count] = True
    return packed, mask


def tokenize_batch(texts: Sequence[str], vocab: Vocabulary, context_length: int = CONTEXT_LENGTH):
    seqs = [tokenize(t, vocab, context_length) for t in texts]
    return np.stack([s.ids for s in seqs]), np.array([s.true_length for s in seqs])


def make_batch(
    samples: Sequence[PairedSample],
    vocab: Vocabulary,
    seed: int,
    epoch: int = 0,
    side: int = 32,
    global_area: tuple[float, float] = GLOBAL_CROP,
    local_area: tuple[float, float] = LOCAL_CROP,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    include_full: bool = False,
) -> PyramidBatch:
    """Expand samples into global/local views, tokens of text and summary, and ROIs.

    Missing summaries fall back to :func:`summarize_fallback`; missing ROI
    sets become one whole-image box with a zero feature.
    """
    if len(samples) < 2:
        raise ValueError("a pyramid batch needs at least 2 samples")
    g_spec = CropSpec(global_area, side)
    l_spec = CropSpec(local_area, side)
    globals_, locals_, rois, summaries = [], [], [], []
    for s in samples:
        rng = sample_rng(seed, s.id, epoch)
        globals_.append(sample_crop(s.image, g_spec, rng).chw())
        locals_.append(sample_crop(s.image, l_spec, rng).chw())
        if s.summary is None:
            logger.debug("sample %s: no summary, using first-sentence fallback", s.id)
            summaries.append(summarize_fallback(s.text))
        else:
            summaries.append(s.summary)
        if s.roi is None:
            logger.debug("sample %s: no ROI set, using full-image box", s.id)
            rois.append(RoiFeatureSet.full_image(feature_dim))
        else:
            rois.append(s.roi)
    roi, roi_mask = pack_rois(rois)
    t_ids, t_len = tokenize_batch([s.text for s in samples], vocab)
    s_ids, s_len = tokenize_batch(summaries, vocab)
    full = np.stack([full_view(s.image, side).chw() for s in samples]) if include_full else None
    return PyramidBatch(
        ids=[s.id for s in samples],
        global_views=np.stack(globals_),
        local_views=np.stack(locals_),
        roi=roi,
        roi_mask=roi_mask,
        text_ids=t_ids,
        text_lengths=t_len,
        summary_ids=s_ids,
        summary_lengths=s_len,
        full_views=full,
    )
