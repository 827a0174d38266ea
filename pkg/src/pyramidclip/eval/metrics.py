"""Zero-shot classification and bidirectional retrieval on embedding matrices."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SLOT = "{label}"
DEFAULT_TEMPLATES = ("a {label}", "a photo of a {label}", "an image of a {label}", "a {label} shape")


class PromptTemplateSet(tuple):
    """Nonempty tuple of templates, each holding the ``{label}`` slot exactly once."""

    def __new__(cls, templates: Sequence[str] = DEFAULT_TEMPLATES):
        templates = tuple(templates)
        if not templates:
            raise ValueError("a prompt template set needs at least one template")
        for t in templates:
            if not isinstance(t, str) or t.count(SLOT) != 1:
                raise ValueError(f"template {t!r} must contain {SLOT} exactly once")
        return super().__new__(cls, templates)

    def fill(self, label: str) -> list[str]:
        return [t.replace(SLOT, label) for t in self]


@dataclass(frozen=True)
class RetrievalResult:
    i2t_r1: float
    i2t_r5: float
    t2i_r1: float
    t2i_r5: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ZeroShotResult:
    top1: float
    top5: float
    predictions: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {"top1": self.top1, "top5": self.top5}


def _matrix(x: np.ndarray, what: str) -> np.ndarray:
    """Check for a 2-D float matrix (rows are used as given)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{what} must be a 2-D matrix, got shape {x.shape}")
    return x


def build_class_embeddings(
    labels: Sequence[str],
    templates: Sequence[str],
    encode_text: Callable[[list[str]], np.ndarray],
) -> np.ndarray:
    """(C, d) matrix: per class, the renormalized mean of its unit template embeddings."""
    labels = list(labels)
    if not labels:
        raise ValueError("labels must be nonempty")
    templates = PromptTemplateSet(templates)
    rows = []
    for label in labels:
        emb = np.asarray(encode_text(templates.fill(label)), dtype=np.float64)
        emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
        mean = emb.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise ValueError(f"class {label!r}: template embeddings cancel to a zero mean")
        rows.append(mean / norm)
    return np.stack(rows)


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` best columns per row, ties resolved toward the lower index."""
    # a stable sort of -scores keeps equal scores in index order
    return np.argsort(-scores, axis=1, kind="stable")[:, :k]


def classify_scores(scores: np.ndarray, targets: Sequence[int]) -> ZeroShotResult:
    """Top-1 and top-5 accuracy from an (images, classes) score matrix.

    Only the ordering of each row matters, so any strictly increasing
    transform of the scores gives the same result. With fewer than five
    classes every target is trivially in the top five; top-5 is then reported
    as 1.0 with a warning.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if scores.ndim != 2 or len(targets) != scores.shape[0]:
        raise ValueError(f"{len(targets)} targets for a score matrix of shape {scores.shape}")
    if len(targets) == 0:
        raise ValueError("no images to classify")
    n_classes = scores.shape[1]
    if targets.min() < 0 or targets.max() >= n_classes:
        raise ValueError(f"targets must index the {n_classes} classes")
    ranked = topk_indices(scores, min(5, n_classes))
    top1 = float(np.mean(ranked[:, 0] == targets))
    if n_classes < 5:
        logger.warning("only %d classes; top-5 accuracy reported as 1.0", n_classes)
        top5 = 1.0
    else:
        top5 = float(np.mean(np.any(ranked == targets[:, None], axis=1)))
    return ZeroShotResult(top1, top5, ranked[:, 0])


def zero_shot_classify(image_embs: np.ndarray, class_matrix: np.ndarray, targets: Sequence[int]) -> ZeroShotResult:
    """Predict the class whose row is most similar to each image embedding."""
    image_embs = _matrix(image_embs, "image embeddings")
    class_matrix = _matrix(class_matrix, "class matrix")
    if image_embs.shape[1] != class_matrix.shape[1]:
        raise ValueError(f"embedding widths differ: {image_embs.shape[1]} vs {class_matrix.shape[1]}")
    return classify_scores(image_embs @ class_matrix.T, targets)


def partner_ranks(scores: np.ndarray) -> np.ndarray:
    """0-based rank of column i in row i; equal scores rank lower indices first."""
    k = scores.shape[0]
    true = scores[np.arange(k), np.arange(k)][:, None]
    idx = np.arange(k)
    better = (scores > true) | ((scores == true) & (idx[None, :] < idx[:, None]))
    return better.sum(axis=1)


def retrieve(image_embs: np.ndarray, text_embs: np.ndarray) -> RetrievalResult:
    """Recall@1/5 in both directions; row i of each matrix is the same ground-truth pair."""
    image_embs = _matrix(image_embs, "image embeddings")
    text_embs = _matrix(text_embs, "text embeddings")
    if image_embs.shape != text_embs.shape:
        raise ValueError(f"image {image_embs.shape} and text {text_embs.shape} matrices differ in shape")
    if image_embs.shape[0] < 2:
        raise ValueError("retrieval needs at least 2 pairs")
    scores = image_embs @ text_embs.T
    i2t = partner_ranks(scores)
    t2i = partner_ranks(scores.T)
    return RetrievalResult(
        i2t_r1=float(np.mean(i2t < 1)),
        i2t_r5=float(np.mean(i2t < 5)),
        t2i_r1=float(np.mean(t2i < 1)),
        t2i_r5=float(np.mean(t2i < 5)),
    )


def format_table(results: dict[str, float]) -> str:
    """Aligned two-column text rendering of a metrics dict."""
    width = max(len(k) for k in results)
    return "\n".join(f"{k:<{width}}  {v:.4f}" for k, v in results.items())
