"""Training configuration and the ablation-flag mapping."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from ..encoders.config import ImageEncoderConfig, TextEncoderConfig
from ..objective import SMOOTHING_MODES, LossWeights

ABLATION_FLAGS = ("use_lt", "use_gs", "use_rt", "use_rs", "use_leff", "use_soften", "clip_baseline")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    data: str | None = None
    vocab: str | None = None
    out_dir: str = "run"
    image: ImageEncoderConfig = field(default_factory=ImageEncoderConfig)
    text: dict = field(default_factory=dict)  # TextEncoderConfig fields; vocab_size filled from the vocabulary
    batch_size: int = 32
    epochs: int = 1
    peak_lr: float = 5e-4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.2
    betas: tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-6
    seed: int = 0
    lt_weight: float = 0.25
    rs_weight: float = 0.25
    rt_weight: float = 0.25
    alpha: float = 0.2
    smoothing: str = "verbatim"
    clip_baseline: bool = False
    clamp_temperature: bool = True
    global_area: tuple[float, float] = (0.9, 1.0)
    local_area: tuple[float, float] = (0.5, 1.0)
    checkpoint_every: int = 0  # epochs; 0 = only at the end
    debug: bool = False
    reference_mode: bool = False  # log wall_ms as 0 so identical runs give identical bytes

    def __post_init__(self):
        if isinstance(self.image, dict):
            self.image = ImageEncoderConfig(**self.image)
        self.betas = tuple(self.betas)
        self.global_area = tuple(self.global_area)
        self.local_area = tuple(self.local_area)
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in (0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.smoothing not in SMOOTHING_MODES:
            raise ConfigError(f"smoothing must be one of {SMOOTHING_MODES}")
        try:
            self.loss_weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def loss_weights(self) -> LossWeights:
        if self.clip_baseline:
            return LossWeights(0.0, 0.0, 0.0, self.alpha, self.smoothing)
        return LossWeights(self.lt_weight, self.rs_weight, self.rt_weight, self.alpha, self.smoothing)

    def text_config(self, vocab_size: int) -> TextEncoderConfig:
        fields = dict(self.text)
        fields["vocab_size"] = vocab_size
        fields.setdefault("embed_dim", self.image.embed_dim)
        return TextEncoderConfig(**fields)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["global_area"] = list(self.global_area)
        d["local_area"] = list(self.local_area)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    def hash(self) -> str:
        """Digest of every field that shapes the training trajectory."""
        d = self.to_dict()
        for volatile in ("out_dir", "checkpoint_every", "debug", "reference_mode"):
            d.pop(volatile)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def apply_ablation(cfg: dict, flags: dict) -> dict:
    """Translate ablation flags into TrainConfig fields.

    Enabled alignment terms share the loss weight equally (all four on gives
    0.25 each). ``use_leff=False`` keeps the front/rear split but uses plain
    feed-forward layers in the front part; ``use_soften=False`` sets alpha to
    0; ``clip_baseline`` trains the single (global view, original text) term
    and excludes every other loss flag. ``L_s`` sets the front depth.
    """
    unknown = sorted(set(flags) - set(ABLATION_FLAGS) - {"smoothing_mode", "L_s"})
    if unknown:
        raise ConfigError(f"unknown ablation flags: {unknown}")
    out = dict(cfg)
    image = dict(out.get("image") or {})
    loss_flags = {"use_lt", "use_gs", "use_rt", "use_rs", "clip_baseline"}
    if not loss_flags & set(flags):
        return _apply_model_flags(out, image, flags)
    clip = bool(flags.get("clip_baseline", False))
    terms = {k: bool(flags.get(f"use_{k}", not clip)) for k in ("lt", "gs", "rt", "rs")}
    if clip and any(terms.values()):
        on = [f"use_{k}" for k, v in terms.items() if v]
        raise ConfigError(f"clip_baseline excludes the other loss flags, but {on} are set")
    if not clip and not any(terms.values()):
        raise ConfigError("no loss term enabled; set at least one use_* flag or clip_baseline")
    out["clip_baseline"] = clip
    if not clip:
        share = 1.0 / sum(terms.values())
        out["lt_weight"] = share if terms["lt"] else 0.0
        out["rs_weight"] = share if terms["rs"] else 0.0
        out["rt_weight"] = share if terms["rt"] else 0.0
    return _apply_model_flags(out, image, flags)


def _apply_model_flags(out: dict, image: dict, flags: dict) -> dict:
    if "use_soften" in flags and not flags["use_soften"]:
        out["alpha"] = 0.0
    if "smoothing_mode" in flags:
        out["smoothing"] = flags["smoothing_mode"]
    if "use_leff" in flags:
        image["use_leff"] = bool(flags["use_leff"])
    if "L_s" in flags:
        image["front_layers"] = int(flags["L_s"])
    out["image"] = image
    return out


def ablation_rows() -> dict[str, dict]:
    """Flag combinations of every ablation row, keyed by a short row name."""
    vit = {
        "clip": {"clip_baseline": True, "use_leff": False, "use_soften": False},
        "lt": {"use_lt": True, "use_gs": False, "use_rt": False, "use_rs": False, "use_leff": False, "use_soften": False},
        "lt+gs": {"use_lt": True, "use_gs": True, "use_rt": False, "use_rs": False, "use_leff": False, "use_soften": False},
        "lt+gs+leff": {"use_lt": True, "use_gs": True, "use_rt": False, "use_rs": False, "use_leff": True, "use_soften": False},
        "lt+gs+leff+rt": {"use_lt": True, "use_gs": True, "use_rt": True, "use_rs": False, "use_leff": True, "use_soften": False},
        "lt+gs+leff+rt+rs": {"use_lt": True, "use_gs": True, "use_rt": True, "use_rs": True, "use_leff": True, "use_soften": False},
        "full": {"use_lt": True, "use_gs": True, "use_rt": True, "use_rs": True, "use_leff": True, "use_soften": True},
    }
    rows = {f"vit/{k}": v for k, v in vit.items()}
    for k, v in vit.items():
        if "leff" in k and k != "full":
            continue
        cnn = {key: val for key, val in v.items() if key != "use_leff"}
        rows[f"cnn/{k}"] = cnn
    return rows
