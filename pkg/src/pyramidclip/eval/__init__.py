from .harness import embed_pairs, evaluate_retrieval, evaluate_zeroshot, image_embedder, text_embedder
from .metrics import (
    DEFAULT_TEMPLATES,
    PromptTemplateSet,
    RetrievalResult,
    ZeroShotResult,
    build_class_embeddings,
    classify_scores,
    format_table,
    partner_ranks,
    retrieve,
    topk_indices,
    zero_shot_classify,
)

__all__ = [
    "DEFAULT_TEMPLATES",
    "PromptTemplateSet",
    "RetrievalResult",
    "ZeroShotResult",
    "build_class_embeddings",
    "classify_scores",
    "embed_pairs",
    "evaluate_retrieval",
    "evaluate_zeroshot",
    "format_table",
    "image_embedder",
    "partner_ranks",
    "retrieve",
    "text_embedder",
    "topk_indices",
    "zero_shot_classify",
]
