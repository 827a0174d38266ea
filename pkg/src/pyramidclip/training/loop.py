"""The training loop: pyramid batch -> five embeddings -> weighted loss -> AdamW."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import PairedSample, Vocabulary, load_manifest, make_batch
from ..encoders import PyramidCLIPModel
from ..numerics import backward, debug_mode
from ..objective import clamp_log_inv_tau, total_loss
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig
from .optim import AdamW
from .schedule import lr_at

logger = logging.getLogger(__name__)

METRIC_KEYS = ("step", "lr", "tau", "l_gs", "l_lt", "l_rs", "l_rt", "total", "wall_ms")
METRICS_FILE = "metrics.jsonl"
FINAL_CHECKPOINT = "last.pct"

_TERM_INPUTS = {"gs": ("v_g", "l_s"), "lt": ("v_l", "l_t"), "rs": ("v_r", "l_s"), "rt": ("v_r", "l_t")}


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, batch_ids: list[str], values: dict):
        self.step = step
        self.batch_ids = batch_ids
        self.values = values
        super().__init__(f"non-finite loss at step {step}: {values}; batch ids: {batch_ids}")


@dataclass
class TrainResult:
    model: PyramidCLIPModel
    optimizer: AdamW
    vocab: Vocabulary
    step: int
    total_steps: int
    checkpoint: Path
    metrics_path: Path
    metrics: list[dict] = field(default_factory=list)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffled sample order of one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, 1])).permutation(n)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Full batches of one epoch; the remainder is dropped."""
    order = epoch_order(n, seed, epoch)
    return [order[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def needed_embeddings(cfg: TrainConfig) -> tuple[str, ...]:
    if cfg.clip_baseline:
        return ("v_g", "l_t")
    keys: list[str] = []
    for term, w in cfg.loss_weights().as_dict().items():
        if w > 0:
            keys.extend(k for k in _TERM_INPUTS[term] if k not in keys)
    return tuple(keys)


def pyramid_loss(model: PyramidCLIPModel, batch, cfg: TrainConfig):
    """Loss breakdown for one batch under the configured terms.

    The baseline contrasts the global view with the original text, so the
    original-text embedding is slotted where the global term expects one.
    """
    emb = model.encode_pyramid(batch, needed_embeddings(cfg))
    if cfg.clip_baseline:
        emb = {"v_g": emb["v_g"], "l_s": emb["l_t"]}
    return total_loss(emb, cfg.loss_weights(), model.log_inv_tau)


def resolve_data(cfg: TrainConfig, samples, vocab) -> tuple[list[PairedSample], Vocabulary]:
    if samples is None:
        if cfg.data is None:
            raise ConfigError("no training data: set 'data' to a manifest path")
        samples = load_manifest(cfg.data)
    if vocab is None:
        if cfg.vocab is not None:
            vocab = Vocabulary.load(cfg.vocab)
        elif cfg.data is not None and (Path(cfg.data).parent / "vocab.txt").exists():
            vocab = Vocabulary.load(Path(cfg.data).parent / "vocab.txt")
        else:
            texts = [s.text for s in samples] + [s.summary for s in samples if s.summary]
            vocab = Vocabulary.from_words(texts)
    return list(samples), vocab


def build_model(cfg: TrainConfig, vocab: Vocabulary) -> PyramidCLIPModel:
    return PyramidCLIPModel(cfg.image, cfg.text_config(len(vocab)), seed=cfg.seed)


def _json_value(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def _truncate_metrics(path: Path, keep: int) -> list[dict]:
    if not path.exists():
        if keep:
            logger.warning("metrics log %s missing; resumed log starts at step %d", path, keep + 1)
        return []
    lines = path.read_text().splitlines()[:keep]
    if len(lines) < keep:
        logger.warning("metrics log has %d records, fewer than the %d resumed steps", len(lines), keep)
    path.write_text("".join(line + "\n" for line in lines))
    return [json.loads(line) for line in lines]


def train(
    cfg: TrainConfig,
    samples: Sequence[PairedSample] | None = None,
    vocab: Vocabulary | None = None,
    resume=None,
    stop_after: int | None = None,
    force: bool = False,
) -> TrainResult:
    """Train from scratch or from ``resume``; stop early after global step ``stop_after``.

    Writes ``metrics.jsonl`` and checkpoints into ``cfg.out_dir``. The data
    order and every crop depend only on (seed, epoch, sample id), so a run
    resumed from a checkpoint continues exactly as if it had not stopped.
    """
    samples, vocab = resolve_data(cfg, samples, vocab)
    steps_per_epoch = len(samples) // cfg.batch_size
    if steps_per_epoch == 0:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds the {len(samples)} available samples")
    total_steps = cfg.epochs * steps_per_epoch
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / METRICS_FILE

    model = build_model(cfg, vocab)
    opt = AdamW(model.named_parameters(), cfg.betas, cfg.eps, cfg.weight_decay)
    config_dict, config_hash = cfg.to_dict(), cfg.hash()
    start = 0
    if resume is not None:
        ckpt = load_checkpoint(resume, expected_hash=config_hash, force=force)
        model.load_state_dict(ckpt.params)
        opt.load_state_arrays(ckpt.optimizer, ckpt.step)
        start = ckpt.step
        if start > total_steps:
            raise ConfigError(f"checkpoint step {start} is beyond the {total_steps} configured steps")
        metrics = _truncate_metrics(metrics_path, start)
        logger.info("resumed from %s at step %d", resume, start)
    else:
        metrics = []
        metrics_path.write_text("")

    def checkpoint(step: int, name: str) -> Path:
        epoch = step // steps_per_epoch
        path = out / name
        save_checkpoint(
            path,
            Checkpoint(
                params=model.state_dict(),
                optimizer=opt.state_arrays(),
                step=step,
                config=config_dict,
                config_hash=config_hash,
                rng={"seed": cfg.seed, "epoch": epoch, "batch": step - epoch * steps_per_epoch},
                vocab=list(vocab.tokens),
            ),
        )
        return path

    end = total_steps if stop_after is None else max(start, min(total_steps, stop_after))
    weights = cfg.loss_weights()
    logger.info(
        "training %d steps (%d per epoch), weights %s, alpha %.3g",
        total_steps, steps_per_epoch, weights.as_dict(), weights.alpha,
    )
    orders: dict[int, list[np.ndarray]] = {}
    last = None
    with debug_mode(cfg.debug), metrics_path.open("a") as log:
        for step in range(start, end):
            t0 = time.perf_counter()
            epoch, b = divmod(step, steps_per_epoch)
            if epoch not in orders:
                orders = {epoch: batch_indices(len(samples), cfg.batch_size, cfg.seed, epoch)}
            chosen = [samples[i] for i in orders[epoch][b]]
            batch = make_batch(
                chosen, vocab, cfg.seed, epoch, cfg.image.side,
                cfg.global_area, cfg.local_area, cfg.image.roi_feature_dim,
            )
            tau = float(np.exp(-model.log_inv_tau.data))
            opt.zero_grad()
            losses = pyramid_loss(model, batch, cfg)
            values = losses.values()
            active = [losses.l_gs, losses.l_lt, losses.l_rs, losses.l_rt, losses.total]
            if not all(np.isfinite(t.data) for t in active if t is not None):
                err = NonFiniteLossError(step + 1, batch.ids, values)
                (out / "nonfinite_batch.json").write_text(
                    json.dumps({"step": step + 1, "batch_ids": batch.ids, "losses": {k: repr(v) for k, v in values.items()}})
                )
                logger.error("%s", err)
                raise err
            backward(losses.total)
            lr = lr_at(step + 1, total_steps, cfg.peak_lr, cfg.warmup_fraction)
            opt.step(lr)
            if cfg.clamp_temperature:
                model.log_inv_tau.data = np.array(clamp_log_inv_tau(float(model.log_inv_tau.data)))
            wall_ms = 0.0 if cfg.reference_mode else round((time.perf_counter() - t0) * 1e3, 3)
            record = {"step": step + 1, "lr": lr, "tau": tau, **{k: _json_value(v) for k, v in values.items()}, "wall_ms": wall_ms}
            log.write(json.dumps(record) + "\n")
            log.flush()
            metrics.append(record)
            done = step + 1
            if cfg.checkpoint_every and done % (cfg.checkpoint_every * steps_per_epoch) == 0 and done < total_steps:
                checkpoint(done, f"epoch{done // steps_per_epoch:04d}.pct")
            if done % max(1, steps_per_epoch) == 0:
                logger.info("step %d/%d total %.4f tau %.4f lr %.3g", done, total_steps, values["total"], tau, lr)
        last = checkpoint(end, FINAL_CHECKPOINT)
    return TrainResult(model, opt, vocab, end, total_steps, last, metrics_path, metrics)


def load_trained(path) -> tuple[PyramidCLIPModel, Vocabulary, TrainConfig]:
    """Rebuild the model, vocabulary and config stored in a checkpoint."""
    ckpt = load_checkpoint(path)
    cfg = TrainConfig.from_dict(ckpt.config)
    if ckpt.vocab is not None:
        vocab = Vocabulary(ckpt.vocab)
    else:
        _, vocab = resolve_data(cfg, [], None)
    model = build_model(cfg, vocab)
    model.load_state_dict(ckpt.params)
    return model, vocab, cfg
