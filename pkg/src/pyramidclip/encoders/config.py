from __future__ import annotations

from dataclasses import asdict, dataclass

from ..data.roi import DEFAULT_FEATURE_DIM
from ..data.tokenizer import CONTEXT_LENGTH

VARIANTS = ("vit", "cnn")


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int
    width: int = 32
    layers: int = 2
    heads: int = 2
    context_length: int = CONTEXT_LENGTH
    embed_dim: int = 32
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError(f"text width {self.width} is not divisible by {self.heads} heads")
        if self.vocab_size < 5:
            raise ValueError("vocabulary must hold the 4 reserved tokens and at least one word")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ImageEncoderConfig:
    """Image encoder shape.

    ``layers`` is the total transformer depth and ``front_layers`` how many of
    them form the front part (with LeFF when ``use_leff``); ROI sequences
    enter after the front part. ``front_layers`` is ignored by the CNN
    variant, whose rear part is the attention-pooling layer.
    """

    variant: str = "vit"
    side: int = 32
    patch: int = 8
    width: int = 32
    layers: int = 4
    front_layers: int = 3
    heads: int = 2
    embed_dim: int = 32
    leff_ratio: int = 4
    mlp_ratio: int = 4
    roi_feature_dim: int = DEFAULT_FEATURE_DIM
    use_leff: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.width % self.heads:
            raise ValueError(f"image width {self.width} is not divisible by {self.heads} heads")
        if self.variant == "vit":
            if self.side % self.patch:
                raise ValueError(f"input side {self.side} is not divisible by patch size {self.patch}")
            if not 0 <= self.front_layers <= self.layers:
                raise ValueError("front_layers must lie in [0, layers]")
        else:
            if self.side % 8:
                raise ValueError("cnn variant needs an input side divisible by 8")
            if self.width % 4:
                raise ValueError("cnn variant needs a width divisible by 4")

    @property
    def grid(self) -> int:
        return self.side // self.patch if self.variant == "vit" else self.side // 8

    def to_dict(self) -> dict:
        return asdict(self)
