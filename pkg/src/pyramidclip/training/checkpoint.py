"""Checkpoints: a PCT1 array file plus a JSON sidecar.

The array file holds ``param.<name>`` for every model parameter and
``opt.m.<name>`` / ``opt.v.<name>`` for the AdamW moments. The sidecar holds
the step counter, the data-order RNG position, the full config, its hash
and the vocabulary.
Both files are written with sorted keys, so save -> load -> save reproduces
the same bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numerics import ArrayFormatError, dumps_arrays, loads_arrays

PARAM_PREFIX = "param."
OPT_PREFIX = "opt."
SIDECAR_SUFFIX = ".json"


class CheckpointError(ValueError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray]
    step: int
    config: dict
    config_hash: str
    rng: dict = field(default_factory=dict)  # {"seed", "epoch", "batch"}: data order is a pure function of these
    vocab: list[str] | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {PARAM_PREFIX + k: v for k, v in self.params.items()}
        out.update(self.optimizer)
        return dict(sorted(out.items()))

    def sidecar(self) -> dict:
        meta = {"step": self.step, "rng": self.rng, "config": self.config, "config_hash": self.config_hash}
        if self.vocab is not None:
            meta["vocab"] = self.vocab
        return meta


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_arrays(ckpt.arrays()))
    sidecar_path(path).write_text(json.dumps(ckpt.sidecar(), sort_keys=True, indent=1) + "\n")


def load_checkpoint(path, expected_hash: str | None = None, force: bool = False) -> Checkpoint:
    """Read a checkpoint; refuse a config-hash mismatch unless ``force``."""
    path = Path(path)
    side = sidecar_path(path)
    if not path.exists() or not side.exists():
        raise CheckpointError(f"checkpoint {path} or its sidecar {side.name} is missing")
    try:
        arrays = loads_arrays(path.read_bytes())
    except ArrayFormatError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    try:
        meta = json.loads(side.read_text())
        step, config, config_hash = int(meta["step"]), meta["config"], str(meta["config_hash"])
        rng = dict(meta.get("rng", {}))
        vocab = meta.get("vocab")
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{side}: malformed sidecar ({exc})") from exc
    if step < 0:
        raise CheckpointError(f"{side}: negative step {step}")
    if expected_hash is not None and config_hash != expected_hash and not force:
        raise ConfigMismatchError(
            f"checkpoint config hash {config_hash} differs from the current config {expected_hash}; "
            "pass force to resume anyway"
        )
    params = {k[len(PARAM_PREFIX):]: v for k, v in arrays.items() if k.startswith(PARAM_PREFIX)}
    optimizer = {k: v for k, v in arrays.items() if k.startswith(OPT_PREFIX)}
    stray = sorted(set(arrays) - {PARAM_PREFIX + k for k in params} - set(optimizer))
    if stray:
        raise CheckpointError(f"{path}: unexpected arrays {stray[:5]}")
    return Checkpoint(params, optimizer, step, config, config_hash, rng, vocab)
