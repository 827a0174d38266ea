"""Region-of-interest feature sets and the ROIF binary format.

ROIF layout, little-endian::

    b"ROIF"  u32 M  u32 F  then M records of (F x f32 feature, 4 x f32 box)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ROIF"
MAX_ROIS = 32
DEFAULT_FEATURE_DIM = 2048


class RoiFormatError(ValueError):
    pass


def validate_boxes(boxes: np.ndarray) -> None:
    """Raise RoiFormatError naming the first bad box."""
    for m, (x1, y1, x2, y2) in enumerate(boxes):
        if not all(0.0 <= c <= 1.0 for c in (x1, y1, x2, y2)):
            raise RoiFormatError(f"record {m}: box coordinates outside [0, 1]")
        if x1 >= x2:
            raise RoiFormatError(f"record {m}: x1 ≥ x2")
        if y1 >= y2:
            raise RoiFormatError(f"record {m}: y1 ≥ y2")


@dataclass(frozen=True, eq=False)
class RoiFeatureSet:
    features: np.ndarray  # (M, F)
    boxes: np.ndarray  # (M, 4) normalized [x1, y1, x2, y2]

    def __post_init__(self):
        f, b = self.features, self.boxes
        if f.ndim != 2 or b.ndim != 2 or b.shape[1] != 4 or f.shape[0] != b.shape[0]:
            raise RoiFormatError(f"inconsistent ROI shapes: features {f.shape}, boxes {b.shape}")
        if f.shape[0] > MAX_ROIS:
            raise RoiFormatError(f"{f.shape[0]} ROIs exceed the maximum of {MAX_ROIS}")
        validate_boxes(b)

    @classmethod
    def empty(cls, feature_dim: int = DEFAULT_FEATURE_DIM) -> RoiFeatureSet:
        return cls(np.zeros((0, feature_dim)), np.zeros((0, 4)))

    @classmethod
    def full_image(cls, feature_dim: int = DEFAULT_FEATURE_DIM) -> RoiFeatureSet:
        """One whole-image box with an all-zero feature."""
        return cls(np.zeros((1, feature_dim)), np.array([[0.0, 0.0, 1.0, 1.0]]))

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def packed(self) -> np.ndarray:
        """(M, F + 4) rows of feature followed by box."""
        return np.concatenate([self.features, self.boxes], axis=1)


def encode_roif(roi: RoiFeatureSet) -> bytes:
    head = MAGIC + struct.pack("<II", roi.count, roi.feature_dim)
    body = np.ascontiguousarray(roi.packed(), dtype="<f4").tobytes()
    return head + body


def decode_roif(buf: bytes) -> RoiFeatureSet:
    if buf[:4] != MAGIC:
        raise RoiFormatError("bad magic: not a ROIF file")
    if len(buf) < 12:
        raise RoiFormatError("truncated ROIF header")
    m, f = struct.unpack("<II", buf[4:12])
    if m > MAX_ROIS:
        raise RoiFormatError(f"{m} ROIs exceed the maximum of {MAX_ROIS}")
    if f == 0:
        raise RoiFormatError("feature dimension must be positive")
    expected = 12 + 4 * m * (f + 4)
    if len(buf) != expected:
        raise RoiFormatError(f"ROIF size {len(buf)} does not match header (expected {expected})")
    packed = np.frombuffer(buf[12:], dtype="<f4").astype(np.float64).reshape(m, f + 4)
    return RoiFeatureSet(packed[:, :f].copy(), packed[:, f:].copy())


def load_roi_features(path) -> RoiFeatureSet:
    return decode_roif(Path(path).read_bytes())


def save_roi_features(path, roi: RoiFeatureSet) -> None:
    Path(path).write_bytes(encode_roif(roi))
