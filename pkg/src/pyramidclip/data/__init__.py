from .batch import PyramidBatch, make_batch, pack_rois, sample_rng, summarize_fallback, tokenize_batch
from .image import (
    GLOBAL_CROP,
    LOCAL_CROP,
    CropSpec,
    ImageBuffer,
    ImageFormatError,
    full_view,
    read_ppm,
    resize_bilinear,
    sample_crop,
    write_ppm,
)
from .manifest import ManifestError, PairedSample, load_manifest
from .roi import RoiFeatureSet, RoiFormatError, load_roi_features, save_roi_features
from .synth import class_labels, label_of, synth_generate, synth_vocabulary
from .tokenizer import BOS, CONTEXT_LENGTH, EOS, PAD, UNK, TokenSequence, Vocabulary, detokenize, tokenize

__all__ = [
    "BOS",
    "CONTEXT_LENGTH",
    "EOS",
    "GLOBAL_CROP",
    "LOCAL_CROP",
    "PAD",
    "UNK",
    "CropSpec",
    "ImageBuffer",
    "ImageFormatError",
    "ManifestError",
    "PairedSample",
    "PyramidBatch",
    "RoiFeatureSet",
    "RoiFormatError",
    "TokenSequence",
    "Vocabulary",
    "class_labels",
    "detokenize",
    "full_view",
    "label_of",
    "load_manifest",
    "load_roi_features",
    "make_batch",
    "pack_rois",
    "read_ppm",
    "resize_bilinear",
    "sample_crop",
    "sample_rng",
    "save_roi_features",
    "summarize_fallback",
    "synth_generate",
    "synth_vocabulary",
    "tokenize",
    "tokenize_batch",
    "write_ppm",
]
