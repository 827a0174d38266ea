"""Property suites behind ``pyramidclip verify``.

Each check reports the measured quantity next to its bound. Oracles here are
written directly in numpy and share no code with the objective beyond the
public entry points under test.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .data import RoiFeatureSet, make_batch
from .data.batch import tokenize_batch
from .data.image import ImageBuffer
from .data.manifest import PairedSample
from .data.tokenizer import Vocabulary
from .encoders import LeFF, PyramidCLIPModel
from .numerics import Tensor, grad_check, no_grad, ops
from .objective import contrastive_term, soft_targets
from .training import TrainConfig, adamw_update, lr_at, pyramid_loss


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    bound: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} measured={self.measured:.3e}  bound={self.bound:.1e}"


def _check(name: str, measured: float, bound: float) -> CheckResult:
    return CheckResult(name, float(measured), bound, bool(np.isfinite(measured) and measured <= bound))


# -- tiny fixtures ---------------------------------------------------------

TINY_WORDS = ("a red blue square circle in the upper lower left right region .").split()


def tiny_vocab() -> Vocabulary:
    return Vocabulary.from_words(TINY_WORDS)


def tiny_samples(n: int = 3, side: int = 8, feature_dim: int = 6, seed: int = 0) -> list[PairedSample]:
    """``n`` random images with short captions and 1-3 ROIs each."""
    rng = np.random.default_rng(seed)
    words = ["red square", "blue circle", "red circle", "blue square"]
    out = []
    for i in range(n):
        m = 1 + i % 3
        x1 = rng.uniform(0, 0.4, m)
        y1 = rng.uniform(0, 0.4, m)
        boxes = np.stack([x1, y1, x1 + 0.5, y1 + 0.5], axis=1)
        roi = RoiFeatureSet(rng.normal(size=(m, feature_dim)), boxes)
        text = f"a {words[i % 4]} in the upper left region"
        out.append(PairedSample(f"t{i}", ImageBuffer(rng.uniform(size=(side, side, 3))), text, f"a {words[i % 4]}", roi))
    return out


def tiny_config(variant: str = "vit", **image) -> TrainConfig:
    fields = dict(variant=variant, side=8, patch=4, width=8, layers=2, front_layers=1, heads=2,
                  embed_dim=8, leff_ratio=2, mlp_ratio=2, roi_feature_dim=6)
    fields.update(image)
    return TrainConfig(image=fields, text=dict(width=8, layers=1, heads=2, mlp_ratio=2), batch_size=3)


def tiny_model(cfg: TrainConfig, vocab: Vocabulary, seed: int = 0) -> PyramidCLIPModel:
    return PyramidCLIPModel(cfg.image, cfg.text_config(len(vocab)), seed=seed)


# -- oracles ---------------------------------------------------------------

def infonce_oracle(u: np.ndarray, v: np.ndarray, tau: float) -> float:
    """Symmetric cross-entropy with one-hot targets, written out per row."""
    s = (u @ v.T) / tau
    n = s.shape[0]
    total = 0.0
    for i in range(n):
        row, col = s[i], s[:, i]
        total += -(row[i] - (row.max() + math.log(np.exp(row - row.max()).sum())))
        total += -(col[i] - (col.max() + math.log(np.exp(col - col.max()).sum())))
    return total / (2 * n)


def soft_target_table(n: int, alpha: float) -> np.ndarray:
    """Hand-built verbatim table: (1-alpha) on the diagonal plus alpha/(n-1) everywhere."""
    y = np.full((n, n), alpha / (n - 1))
    for i in range(n):
        y[i, i] += 1.0 - alpha
    return y


def identical_embedding_loss(n: int, alpha: float) -> float:
    """All rows equal: both softmaxes are uniform, so the loss is sum(targets) * ln(n) / n."""
    return soft_target_table(n, alpha).sum() * math.log(n) / n


# -- checks ----------------------------------------------------------------

def generic_point(model: PyramidCLIPModel, rng: np.random.Generator) -> None:
    """Move every parameter to a random point with unit-scale activations.

    At the 0.02-scale initialization many gradients are near 1e-9, where a
    central difference cannot resolve a relative error of 1e-4; checking at a
    generic point exercises the same backward rules with measurable values.
    """
    for name, p in model.named_parameters():
        shape = p.data.shape
        if p.data.ndim == 0:
            continue
        if p.data.ndim == 1:
            p.data = (1.0 if name.endswith("gain") else 0.0) + 0.1 * rng.normal(size=shape)
            continue
        if "embed" in name and "patch" not in name:
            fan_in = 1
        elif p.data.ndim >= 3:
            fan_in = int(np.prod(shape[1:]))
        else:
            fan_in = shape[0]
        p.data = rng.normal(size=shape) / math.sqrt(fan_in)


def check_gradients(variant: str, n_coords: int = 150, seed: int = 2) -> CheckResult:
    """Full pyramid loss of a tiny model against fourth-order central differences.

    Some whole-model gradients are near 1e-8 even at a generic point; the
    two-point formula's roundoff is then a visible fraction of the value.
    """
    vocab = tiny_vocab()
    cfg = tiny_config(variant)
    model = tiny_model(cfg, vocab)
    generic_point(model, np.random.default_rng(seed))
    batch = make_batch(tiny_samples(3), vocab, seed=0, side=8, feature_dim=6)
    err = grad_check(lambda *_: pyramid_loss(model, batch, cfg).total, model.parameters(),
                     n_coords=n_coords, rng=np.random.default_rng(seed), h=5e-4, stencil=4)
    return _check(f"gradient check ({variant})", err, 1e-4)


def check_soft_targets() -> CheckResult:
    err = max(
        np.abs(soft_targets(2, 0.2) - np.array([[1.0, 0.2], [0.2, 1.0]])).max(),
        np.abs(soft_targets(4, 0.2) - soft_target_table(4, 0.2)).max(),
        abs(soft_targets(4, 0.2)[0, 0] - 0.8 - 0.2 / 3),
    )
    return _check("soft-target tables", err, 1e-12)


def check_closed_form() -> CheckResult:
    """Identical rows at N=2 and N=4; the quoted 6-decimal values must also round-match."""
    err = 0.0
    for n, expected in ((2, 0.831777), (4, 1.478714)):
        u = np.tile(np.eye(1, 8), (n, 1))
        got = float(contrastive_term(u, u, math.log(1 / 0.07), 0.2).data)
        err = max(err, abs(got - identical_embedding_loss(n, 0.2)))
        if round(got, 6) != expected:
            err = math.inf
    return _check("closed-form losses", err, 1e-9)


def check_infonce(batches: int = 100) -> CheckResult:
    rng = np.random.default_rng(0)
    err = 0.0
    for _ in range(batches):
        u = rng.normal(size=(8, 16))
        v = rng.normal(size=(8, 16))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        tau = float(rng.uniform(0.02, 1.0))
        got = float(contrastive_term(u, v, math.log(1 / tau), 0.0).data)
        err = max(err, abs(got - infonce_oracle(u, v, tau)))
    return _check("InfoNCE oracle equivalence", err, 1e-10)


def check_roi_permutation(variant: str = "vit") -> CheckResult:
    vocab = tiny_vocab()
    model = tiny_model(tiny_config(variant), vocab)
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(2, 5, 6))
    x1 = rng.uniform(0, 0.5, (2, 5, 2))
    roi = np.concatenate([feats, x1, x1 + 0.3], axis=2)
    mask = np.array([[True] * 5, [True] * 3 + [False] * 2])
    perm = np.array([[4, 2, 0, 3, 1], [2, 0, 1, 3, 4]])
    with no_grad():
        a = model.encode_rois(roi, mask).data
        b = model.encode_rois(np.take_along_axis(roi, perm[:, :, None], 1), np.take_along_axis(mask, perm, 1)).data
    return _check(f"ROI permutation invariance ({variant})", np.abs(a - b).max(), 1e-9)


def check_leff_passthrough() -> CheckResult:
    rng = np.random.default_rng(3)
    leff = LeFF(rng, 8, 2)
    x = Tensor(rng.normal(size=(2, 5, 8)))
    out = leff(x).data
    return _check("LeFF class-token passthrough", np.abs(out[:, 0] - x.data[:, 0]).max(), 0.0)


def check_pad_invariance() -> CheckResult:
    vocab = tiny_vocab()
    model = tiny_model(tiny_config(), vocab)
    ids, lengths = tokenize_batch(["a red square", "a blue circle in the upper left region"], vocab)
    noisy = ids.copy()
    rng = np.random.default_rng(4)
    for i, n in enumerate(lengths):
        noisy[i, n:] = rng.integers(4, len(vocab), ids.shape[1] - n)
    with no_grad():
        ref = model.encode_texts(ids, lengths).data
        alt = model.text(noisy, lengths, trim=False).data
        full = model.text(ids, lengths, trim=False).data
    return _check("text PAD invariance", max(np.abs(ref - alt).max(), np.abs(ref - full).max()), 1e-9)


def check_unit_norm() -> CheckResult:
    vocab = tiny_vocab()
    cfg = tiny_config()
    model = tiny_model(cfg, vocab)
    batch = make_batch(tiny_samples(3), vocab, seed=0, side=8, feature_dim=6)
    with no_grad():
        emb = model.encode_pyramid(batch)
    err = max(np.abs(np.linalg.norm(e.data, axis=1) - 1.0).max() for e in emb.values())
    return _check("embeddings unit-norm", err, 1e-8)


def check_schedule() -> CheckResult:
    total, w = 1000, 100
    err = max(abs(lr_at(w, total) - 5e-4), abs(lr_at(total, total)), abs(lr_at(550, total) - 2.5e-4))
    return _check("schedule endpoints", err, 1e-15)


def check_adamw() -> CheckResult:
    w, _, _ = adamw_update(np.array([1.0]), np.array([0.5]), np.zeros(1), np.zeros(1), 1, 0.1)
    return _check("AdamW hand example", abs(w[0] - 0.88), 1e-5)


SUITES: dict[str, Callable[[], CheckResult]] = {
    "grad_vit": lambda: check_gradients("vit"),
    "grad_cnn": lambda: check_gradients("cnn"),
    "soft_targets": check_soft_targets,
    "closed_form": check_closed_form,
    "infonce": check_infonce,
    "roi_perm_vit": lambda: check_roi_permutation("vit"),
    "roi_perm_cnn": lambda: check_roi_permutation("cnn"),
    "leff": check_leff_passthrough,
    "pad": check_pad_invariance,
    "unit_norm": check_unit_norm,
    "schedule": check_schedule,
    "adamw": check_adamw,
}


@contextlib.contextmanager
def injected_fault() -> Iterator[None]:
    """Corrupt the GELU derivative by 10% so gradient checks must fail."""
    original = ops.gelu_grad
    ops.gelu_grad = lambda x, cdf=None: 1.1 * original(x, cdf)
    try:
        yield
    finally:
        ops.gelu_grad = original


def run_all(inject_fault: bool = False, only: list[str] | None = None) -> list[CheckResult]:
    names = only or list(SUITES)
    unknown = sorted(set(names) - set(SUITES))
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {sorted(SUITES)}")
    ctx = injected_fault() if inject_fault else contextlib.nullcontext()
    with ctx:
        return [SUITES[name]() for name in names]
