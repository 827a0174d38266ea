"""Image buffers, binary PPM I/O and random-resized crops."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MIN_SIDE = 8


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x 3 float64 pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"image pixels must be H x W x 3, got {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape[:2]}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> ImageBuffer:
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def chw(self) -> np.ndarray:
        """Channels-first copy, the layout the encoders consume."""
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1))


def _ppm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # single whitespace byte separates header from raster


def decode_ppm(buf: bytes) -> ImageBuffer:
    tokens, pos = _ppm_tokens(buf, 4)
    if tokens[0] != b"P6":
        raise ImageFormatError("not a binary PPM (P6) image")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PPM header") from exc
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM is supported (maxval {maxval})")
    raster = buf[pos:pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise ImageFormatError("PPM raster is truncated")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return ImageBuffer.from_uint8(arr)


def encode_ppm(image: ImageBuffer) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.to_uint8().tobytes()


def read_ppm(path) -> ImageBuffer:
    return decode_ppm(Path(path).read_bytes())


def write_ppm(path, image: ImageBuffer) -> None:
    Path(path).write_bytes(encode_ppm(image))


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    in_h, in_w = pixels.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = pixels[y0][:, x0] * (1 - wx) + pixels[y0][:, x1] * wx
    bot = pixels[y1][:, x0] * (1 - wx) + pixels[y1][:, x1] * wx
    return np.clip(top * (1 - wy) + bot * wy, 0.0, 1.0)


@dataclass(frozen=True)
class CropSpec:
    """Random-resized-crop parameters: area fraction range, aspect range, output side."""

    area: tuple[float, float]
    side: int
    aspect: tuple[float, float] = (3 / 4, 4 / 3)

    def __post_init__(self):
        lo, hi = self.area
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"crop area range must satisfy 0 < lo <= hi <= 1, got {self.area}")
        a, b = self.aspect
        if not 0.0 < a <= b:
            raise ValueError(f"invalid aspect range {self.aspect}")
        if self.side < MIN_SIDE:
            raise ValueError(f"crop output side must be >= {MIN_SIDE}")


GLOBAL_CROP = (0.9, 1.0)
LOCAL_CROP = (0.5, 1.0)


def _feasible(w: int, h: int, width: int, height: int, spec: CropSpec) -> bool:
    if not (1 <= w <= width and 1 <= h <= height):
        return False
    frac = (w * h) / (width * height)
    ratio = w / h
    lo, hi = spec.area
    return lo <= frac <= hi and spec.aspect[0] <= ratio <= spec.aspect[1]


def crop_box(height: int, width: int, spec: CropSpec, rng: np.random.Generator) -> tuple[int, int, int, int] | None:
    """Draw (top, left, h, w) satisfying ``spec``, or None when infeasible."""
    total = width * height
    log_a = (math.log(spec.aspect[0]), math.log(spec.aspect[1]))
    for _ in range(10):
        target = total * rng.uniform(*spec.area)
        ratio = math.exp(rng.uniform(*log_a))
        w = int(round(math.sqrt(target * ratio)))
        h = int(round(math.sqrt(target / ratio)))
        if _feasible(w, h, width, height, spec):
            break
    else:
        options = [
            (w, h)
            for w in range(1, width + 1)
            for h in range(1, height + 1)
            if _feasible(w, h, width, height, spec)
        ]
        if not options:
            return None
        w, h = options[int(rng.integers(len(options)))]
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return top, left, h, w


def sample_crop(image: ImageBuffer, spec: CropSpec, rng: np.random.Generator) -> ImageBuffer:
    """Random crop honoring ``spec``, resized to ``spec.side`` squared."""
    box = crop_box(image.height, image.width, spec, rng)
    if box is None:
        logger.warning("no feasible crop for %dx%d image under %s; using full image", image.height, image.width, spec)
        region = image.pixels
    else:
        top, left, h, w = box
        region = image.pixels[top:top + h, left:left + w]
    return ImageBuffer(resize_bilinear(region, spec.side, spec.side))


def full_view(image: ImageBuffer, side: int) -> ImageBuffer:
    """The whole image resized to ``side`` squared (inference-time input)."""
    if image.height == side and image.width == side:
        return image
    return ImageBuffer(resize_bilinear(image.pixels, side, side))
