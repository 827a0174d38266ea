"""JSONL manifests of paired image/text samples."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .image import ImageBuffer, ImageFormatError, read_ppm
from .roi import RoiFeatureSet, RoiFormatError, load_roi_features


class ManifestError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PairedSample:
    id: str
    image: ImageBuffer
    text: str
    summary: str | None = None
    roi: RoiFeatureSet | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ManifestError(f"sample {self.id!r}: text must be nonempty")


def load_manifest(path) -> list[PairedSample]:
    """Read and validate every sample; paths resolve relative to the manifest."""
    path = Path(path)
    root = path.parent
    samples: list[PairedSample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                sid = rec["id"]
                image_rel = rec["image"]
                text = rec["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed manifest line ({exc})") from exc
            if not isinstance(sid, str) or not isinstance(text, str) or not isinstance(image_rel, str):
                raise ManifestError(f"{path}:{lineno}: id, image and text must be strings")
            if sid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            seen.add(sid)
            try:
                image = read_ppm(root / image_rel)
            except (OSError, ImageFormatError, ValueError) as exc:
                raise ManifestError(f"sample {sid!r}: cannot read image {image_rel!r}: {exc}") from exc
            roi = None
            if rec.get("roi") is not None:
                try:
                    roi = load_roi_features(root / rec["roi"])
                except OSError as exc:
                    raise ManifestError(f"sample {sid!r}: cannot read ROI file: {exc}") from exc
                except RoiFormatError as exc:
                    raise RoiFormatError(f"sample {sid!r}: {exc}") from exc
            summary = rec.get("summary")
            if summary is not None and not isinstance(summary, str):
                raise ManifestError(f"{path}:{lineno}: summary must be a string or null")
            try:
                samples.append(PairedSample(sid, image, text, summary, roi))
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return samples


def manifest_record(sample_id: str, image: str, text: str, summary: str | None, roi: str | None) -> str:
    return json.dumps(
        {"id": sample_id, "image": image, "text": text, "summary": summary, "roi": roi},
        ensure_ascii=False,
    )
