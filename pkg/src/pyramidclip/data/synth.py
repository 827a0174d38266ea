"""Synthetic colored-shape corpus for desk-scale experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import ImageBuffer, write_ppm
from .manifest import PairedSample, manifest_record
from .roi import DEFAULT_FEATURE_DIM, RoiFeatureSet, save_roi_features
from .tokenizer import Vocabulary, split_words

logger = logging.getLogger(__name__)

COLORS = {
    "red": (0.90, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.10, 0.20, 0.90),
    "yellow": (0.95, 0.90, 0.10),
    "cyan": (0.10, 0.85, 0.90),
    "magenta": (0.90, 0.10, 0.85),
    "orange": (0.95, 0.55, 0.05),
    "purple": (0.50, 0.10, 0.65),
}
SHAPES = ("square", "circle", "triangle")
POSITIONS = ("upper left", "upper right", "lower left", "lower right")
N_FEATURE_SLOTS = len(COLORS) + len(SHAPES) + len(POSITIONS)

# template words beyond the caption grammar, so common prompts tokenize in-vocabulary
EXTRA_WORDS = ("a photo of", "an image of", "shape", "object", ".")


@dataclass(frozen=True)
class ShapeSpec:
    color: str
    shape: str
    position: str

    @property
    def label(self) -> str:
        return f"{self.color} {self.shape}"

    @property
    def caption(self) -> str:
        return f"a {self.color} {self.shape} in the {self.position} region"

    @property
    def summary(self) -> str:
        return f"a {self.color} {self.shape}"


def class_labels() -> list[str]:
    """The 24 color x shape labels of the zero-shot task."""
    return [f"{c} {s}" for c in COLORS for s in SHAPES]


def synth_vocabulary() -> Vocabulary:
    words = list(COLORS) + list(SHAPES) + list(POSITIONS) + ["a", "in", "the", "region"] + list(EXTRA_WORDS)
    return Vocabulary.from_words(words)


def _draw_specs(n: int, rng: np.random.Generator) -> list[ShapeSpec]:
    pairs = [(c, s) for c in COLORS for s in SHAPES]
    start_pos = rng.integers(0, len(POSITIONS), size=len(pairs))
    specs = []
    cycle = 0
    while len(specs) < n:
        order = rng.permutation(len(pairs))
        for j in order:
            c, s = pairs[j]
            pos = POSITIONS[(start_pos[j] + cycle) % len(POSITIONS)]
            specs.append(ShapeSpec(c, s, pos))
            if len(specs) == n:
                break
        cycle += 1
    return specs


def shape_mask(kind: str, side: int, cx: float, cy: float, size: float) -> np.ndarray:
    """Boolean mask of a shape centred at (cx, cy), sampled at pixel centres."""
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    half = size / 2
    if kind == "square":
        return (np.abs(xx - cx) <= half) & (np.abs(yy - cy) <= half)
    if kind == "circle":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= half**2
    if kind == "triangle":
        top, bottom = cy - half, cy + half
        inside_y = (yy >= top) & (yy <= bottom)
        frac = np.clip((yy - top) / size, 0.0, 1.0)
        return inside_y & (np.abs(xx - cx) <= frac * half)
    raise ValueError(f"unknown shape {kind!r}")


def render(spec: ShapeSpec, side: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return (uint8 image, normalized bounding box) for one sample."""
    # the whole shape stays inside its named quadrant, so the position word is never ambiguous
    size = rng.uniform(0.30, 0.42) * side
    half = size / 2
    vertical, horizontal = spec.position.split()
    mid = side / 2
    lo_x, hi_x = (half, mid - half) if horizontal == "left" else (mid + half, side - half)
    lo_y, hi_y = (half, mid - half) if vertical == "upper" else (mid + half, side - half)
    cx = rng.uniform(lo_x, hi_x)
    cy = rng.uniform(lo_y, hi_y)
    mask = shape_mask(spec.shape, side, cx, cy, size)
    color = np.array(COLORS[spec.color])
    luminance = color @ np.array([0.299, 0.587, 0.114])
    gray = rng.uniform(0.05, 0.2) if luminance > 0.45 else rng.uniform(0.8, 0.95)
    pixels = np.full((side, side, 3), gray)
    pixels[mask] = color
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    box = np.array([cols[0], rows[0], cols[-1] + 1, rows[-1] + 1], dtype=np.float64) / side
    return np.round(pixels * 255).astype(np.uint8), box


def roi_feature(spec: ShapeSpec, feature_dim: int) -> np.ndarray:
    if feature_dim < N_FEATURE_SLOTS:
        raise ValueError(f"feature_dim must be at least {N_FEATURE_SLOTS}")
    feat = np.zeros(feature_dim)
    feat[list(COLORS).index(spec.color)] = 1.0
    feat[len(COLORS) + SHAPES.index(spec.shape)] = 1.0
    feat[len(COLORS) + len(SHAPES) + POSITIONS.index(spec.position)] = 1.0
    return feat


def synth_generate(
    out_dir,
    n: int,
    seed: int = 0,
    image_side: int = 32,
    vocab: Vocabulary | None = None,
    feature_dim: int = DEFAULT_FEATURE_DIM,
    id_prefix: str = "s",
) -> Path:
    """Write ``n`` samples plus manifest.jsonl and vocab.txt into ``out_dir``.

    (color, shape) pairs are distinct for n <= 24 and full captions are
    distinct for n <= 96. Returns the manifest path.
    """
    if n < 2:
        raise ValueError("synthetic corpus needs n >= 2")
    distinct = len(COLORS) * len(SHAPES) * len(POSITIONS)
    if n > distinct:
        logger.warning("n=%d exceeds %d distinct captions; duplicates will occur", n, distinct)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "rois").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    specs = _draw_specs(n, rng)
    width = len(str(n - 1))
    lines = []
    for i, spec in enumerate(specs):
        sid = f"{id_prefix}{i:0{width}d}"
        pixels, box = render(spec, image_side, rng)
        write_ppm(out / "images" / f"{sid}.ppm", ImageBuffer.from_uint8(pixels))
        roi = RoiFeatureSet(roi_feature(spec, feature_dim)[None, :], box[None, :])
        save_roi_features(out / "rois" / f"{sid}.roif", roi)
        lines.append(manifest_record(sid, f"images/{sid}.ppm", spec.caption, spec.summary, f"rois/{sid}.roif"))
    manifest = out / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    (vocab or synth_vocabulary()).save(out / "vocab.txt")
    return manifest


def label_of(sample: PairedSample) -> str:
    """Zero-shot class label recovered from a synthetic caption."""
    words = split_words(sample.text)
    return f"{words[1]} {words[2]}"

