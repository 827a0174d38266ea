"""Input coercion and checks shared by the estimator facade."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ImageBuffer, PairedSample, full_view, load_manifest


def check_samples(X, min_samples: int = 1) -> list[PairedSample]:
    """Accept a manifest path or a sequence of PairedSample."""
    if isinstance(X, (str, Path)):
        X = load_manifest(X)
    samples = list(X)
    bad = [type(s).__name__ for s in samples if not isinstance(s, PairedSample)]
    if bad:
        raise TypeError(f"expected PairedSample items, got {sorted(set(bad))}")
    if len(samples) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(samples)}")
    return samples


def check_images(X, side: int) -> np.ndarray:
    """(N, 3, side, side) float array from samples, ImageBuffers or an array.

    Samples and buffers are resized to the full view; arrays must already
    have the right shape and lie in [0, 1].
    """
    if isinstance(X, (str, Path)):
        X = load_manifest(X)
    if isinstance(X, np.ndarray):
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[1:] != (3, side, side):
            raise ValueError(f"image array must have shape (N, 3, {side}, {side}), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image array values must be finite and lie in [0, 1]")
        return arr
    views = []
    for item in X:
        if isinstance(item, PairedSample):
            item = item.image
        if not isinstance(item, ImageBuffer):
            raise TypeError(f"cannot interpret {type(item).__name__} as an image")
        views.append(full_view(item, side).chw())
    if not views:
        raise ValueError("no images given")
    return np.stack(views)


def check_texts(texts: Sequence[str] | str) -> list[str]:
    if isinstance(texts, str):
        texts = [texts]
    texts = list(texts)
    if not texts:
        raise ValueError("no texts given")
    for t in texts:
        if not isinstance(t, str) or not t.strip():
            raise ValueError(f"texts must be nonempty strings, got {t!r}")
    return texts
