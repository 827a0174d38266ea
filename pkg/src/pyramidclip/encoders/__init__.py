from .config import ImageEncoderConfig, TextEncoderConfig
from .layers import Block, LeFF, Linear, LayerNorm, Module, MultiHeadAttention
from .model import EMBEDDING_KEYS, PyramidCLIPModel
from .text import TextEncoder
from .vision import CNNEncoder, RoiEmbedding, ViTEncoder, build_image_encoder, patchify

__all__ = [
    "Block",
    "CNNEncoder",
    "EMBEDDING_KEYS",
    "ImageEncoderConfig",
    "LayerNorm",
    "LeFF",
    "Linear",
    "Module",
    "MultiHeadAttention",
    "PyramidCLIPModel",
    "RoiEmbedding",
    "TextEncoder",
    "TextEncoderConfig",
    "ViTEncoder",
    "build_image_encoder",
    "patchify",
]
