"""Hierarchical image-text contrastive pretraining on a small numpy autodiff core."""

from .estimator import PyramidCLIP, ZeroShotClassifier
from .objective import LossWeights, contrastive_term, soft_targets, total_loss

__version__ = "0.1.0"

__all__ = [
    "LossWeights",
    "PyramidCLIP",
    "ZeroShotClassifier",
    "contrastive_term",
    "soft_targets",
    "total_loss",
]
