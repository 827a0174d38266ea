"""Scikit-learn style estimators over the training and evaluation modules."""

from __future__ import annotations

import tempfile

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data.roi import DEFAULT_FEATURE_DIM
from .eval import DEFAULT_TEMPLATES, PromptTemplateSet, build_class_embeddings, image_embedder, retrieve, text_embedder
from .training import TrainConfig, train
from .validation import check_images, check_samples, check_texts


class PyramidCLIP(TransformerMixin, BaseEstimator):
    """Pretrain the dual encoder on paired samples; ``transform`` embeds full images.

    ``fit`` accepts a manifest path or a list of PairedSample. After fitting,
    ``model_``, ``vocab_`` and ``metrics_`` hold the trained model, its
    vocabulary and the per-step training log.
    """

    def __init__(
        self,
        variant="vit",
        side=32,
        patch=8,
        width=32,
        layers=4,
        front_layers=3,
        heads=2,
        embed_dim=32,
        use_leff=True,
        roi_feature_dim=DEFAULT_FEATURE_DIM,
        text_width=32,
        text_layers=2,
        text_heads=2,
        batch_size=32,
        epochs=10,
        peak_lr=5e-4,
        warmup_fraction=0.1,
        weight_decay=0.2,
        lt_weight=0.25,
        rs_weight=0.25,
        rt_weight=0.25,
        alpha=0.2,
        smoothing="verbatim",
        clip_baseline=False,
        clamp_temperature=True,
        seed=0,
        out_dir=None,
    ):
        self.variant = variant
        self.side = side
        self.patch = patch
        self.width = width
        self.layers = layers
        self.front_layers = front_layers
        self.heads = heads
        self.embed_dim = embed_dim
        self.use_leff = use_leff
        self.roi_feature_dim = roi_feature_dim
        self.text_width = text_width
        self.text_layers = text_layers
        self.text_heads = text_heads
        self.batch_size = batch_size
        self.epochs = epochs
        self.peak_lr = peak_lr
        self.warmup_fraction = warmup_fraction
        self.weight_decay = weight_decay
        self.lt_weight = lt_weight
        self.rs_weight = rs_weight
        self.rt_weight = rt_weight
        self.alpha = alpha
        self.smoothing = smoothing
        self.clip_baseline = clip_baseline
        self.clamp_temperature = clamp_temperature
        self.seed = seed
        self.out_dir = out_dir

    def train_config(self, data=None) -> TrainConfig:
        image = dict(
            variant=self.variant, side=self.side, patch=self.patch, width=self.width, layers=self.layers,
            front_layers=self.front_layers, heads=self.heads, embed_dim=self.embed_dim,
            use_leff=self.use_leff, roi_feature_dim=self.roi_feature_dim,
        )
        text = dict(width=self.text_width, layers=self.text_layers, heads=self.text_heads)
        return TrainConfig(
            data=data, out_dir=self.out_dir or tempfile.mkdtemp(prefix="pyramidclip-"),
            image=image, text=text, batch_size=self.batch_size, epochs=self.epochs, peak_lr=self.peak_lr,
            warmup_fraction=self.warmup_fraction, weight_decay=self.weight_decay, seed=self.seed,
            lt_weight=self.lt_weight, rs_weight=self.rs_weight, rt_weight=self.rt_weight, alpha=self.alpha,
            smoothing=self.smoothing, clip_baseline=self.clip_baseline, clamp_temperature=self.clamp_temperature,
        )

    def fit(self, X, y=None):
        data = str(X) if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__") else None
        samples = check_samples(X, min_samples=2)
        result = train(self.train_config(data), samples=samples)
        self.model_ = result.model
        self.vocab_ = result.vocab
        self.metrics_ = result.metrics
        self.checkpoint_ = result.checkpoint
        return self

    def transform(self, X) -> np.ndarray:
        """Full-image embeddings, shape (N, embed_dim)."""
        check_is_fitted(self, "model_")
        return image_embedder(self.model_)(check_images(X, self.side))

    def encode_text(self, texts) -> np.ndarray:
        check_is_fitted(self, "model_")
        return text_embedder(self.model_, self.vocab_)(check_texts(texts))

    def score(self, X, y=None) -> float:
        """Mean of image-to-text and text-to-image R@1 on the paired samples."""
        samples = check_samples(X, min_samples=2)
        result = retrieve(self.transform(samples), self.encode_text([s.text for s in samples]))
        return 0.5 * (result.i2t_r1 + result.t2i_r1)


class ZeroShotClassifier(ClassifierMixin, BaseEstimator):
    """Classify images by prompt-ensembled text embeddings of the class labels.

    ``fit`` learns nothing from the images: it records the label set of
    ``y`` and encodes the filled templates with the fitted ``encoder``.
    """

    def __init__(self, encoder=None, templates=DEFAULT_TEMPLATES):
        self.encoder = encoder
        self.templates = templates

    def fit(self, X=None, y=None):
        if self.encoder is None:
            raise ValueError("ZeroShotClassifier needs a fitted PyramidCLIP encoder")
        check_is_fitted(self.encoder, "model_")
        if y is None:
            raise ValueError("y (the class labels) is required")
        self.classes_ = np.unique(np.asarray(y, dtype=object).astype(str))
        templates = PromptTemplateSet(self.templates)
        self.class_embeddings_ = build_class_embeddings(list(self.classes_), templates, self.encoder.encode_text)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "class_embeddings_")
        return self.encoder.transform(X) @ self.class_embeddings_.T

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argsort(-scores, axis=1, kind="stable")[:, 0]]

    def predict_proba(self, X) -> np.ndarray:
        """Softmax of the similarities at the model's learned temperature."""
        scale = float(np.exp(self.encoder.model_.log_inv_tau.data))
        return softmax(scale * self.decision_function(X), axis=1)
