from .checkpoint import Checkpoint, CheckpointError, ConfigMismatchError, load_checkpoint, save_checkpoint
from .config import ABLATION_FLAGS, ConfigError, TrainConfig, ablation_rows, apply_ablation
from .loop import (
    FINAL_CHECKPOINT,
    METRIC_KEYS,
    METRICS_FILE,
    NonFiniteLossError,
    TrainResult,
    batch_indices,
    build_model,
    epoch_order,
    load_trained,
    pyramid_loss,
    train,
)
from .optim import AdamW, OptimizerState, adamw_update, decays
from .schedule import lr_at, warmup_steps

__all__ = [
    "ABLATION_FLAGS",
    "AdamW",
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "ConfigMismatchError",
    "FINAL_CHECKPOINT",
    "METRICS_FILE",
    "METRIC_KEYS",
    "NonFiniteLossError",
    "OptimizerState",
    "TrainConfig",
    "TrainResult",
    "ablation_rows",
    "adamw_update",
    "apply_ablation",
    "batch_indices",
    "build_model",
    "decays",
    "epoch_order",
    "load_checkpoint",
    "load_trained",
    "lr_at",
    "pyramid_loss",
    "save_checkpoint",
    "train",
    "warmup_steps",
]
