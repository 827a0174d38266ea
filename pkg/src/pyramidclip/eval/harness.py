"""Model-level evaluation on the inference pair: full image and original text.

Only ``encode_images`` and ``encode_texts`` of the model are called here;
summaries and ROI sequences never enter evaluation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..data import PairedSample, Vocabulary, full_view, label_of
from ..data.batch import tokenize_batch
from ..numerics import no_grad
from .metrics import (
    DEFAULT_TEMPLATES,
    RetrievalResult,
    ZeroShotResult,
    build_class_embeddings,
    retrieve,
    zero_shot_classify,
)

EVAL_BATCH = 64


def text_embedder(model, vocab: Vocabulary, batch_size: int = EVAL_BATCH) -> Callable[[list[str]], np.ndarray]:
    def encode(texts: list[str]) -> np.ndarray:
        out = []
        with no_grad():
            for i in range(0, len(texts), batch_size):
                ids, lengths = tokenize_batch(texts[i:i + batch_size], vocab)
                out.append(model.encode_texts(ids, lengths).data)
        return np.concatenate(out)

    return encode


def image_embedder(model, batch_size: int = EVAL_BATCH) -> Callable[[np.ndarray], np.ndarray]:
    def encode(views: np.ndarray) -> np.ndarray:
        with no_grad():
            return np.concatenate(
                [model.encode_images(views[i:i + batch_size]).data for i in range(0, len(views), batch_size)]
            )

    return encode


def full_views(samples: Sequence[PairedSample], side: int) -> np.ndarray:
    return np.stack([full_view(s.image, side).chw() for s in samples])


def embed_pairs(model, vocab: Vocabulary, samples: Sequence[PairedSample]) -> tuple[np.ndarray, np.ndarray]:
    """(image, text) embedding matrices of the samples, row-aligned."""
    side = model.image_cfg.side
    images = image_embedder(model)(full_views(samples, side))
    texts = text_embedder(model, vocab)([s.text for s in samples])
    return images, texts


def evaluate_retrieval(model, vocab: Vocabulary, samples: Sequence[PairedSample]) -> RetrievalResult:
    return retrieve(*embed_pairs(model, vocab, samples))


def evaluate_zeroshot(
    model,
    vocab: Vocabulary,
    samples: Sequence[PairedSample],
    labels: Sequence[str],
    templates: Sequence[str] = DEFAULT_TEMPLATES,
    label_fn: Callable[[PairedSample], str] = label_of,
) -> ZeroShotResult:
    """Prompt-ensembled zero-shot accuracy; ``label_fn`` gives each sample's true label."""
    labels = list(labels)
    index = {label: i for i, label in enumerate(labels)}
    try:
        targets = [index[label_fn(s)] for s in samples]
    except KeyError as exc:
        raise ValueError(f"sample label {exc.args[0]!r} is not among the {len(labels)} classes") from None
    matrix = build_class_embeddings(labels, templates, text_embedder(model, vocab))
    images = image_embedder(model)(full_views(samples, model.image_cfg.side))
    return zero_shot_classify(images, matrix, targets)
