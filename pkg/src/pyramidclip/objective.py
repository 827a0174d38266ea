"""Softened bidirectional contrastive objective over the embedding pyramid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, as_tensor, log_softmax, ops, softmax

TAU_INIT = 0.07
INV_TAU_MIN = 1.0
INV_TAU_MAX = 100.0
SMOOTHING_MODES = ("verbatim", "exclusive")


def init_log_inv_tau(tau: float = TAU_INIT) -> float:
    return math.log(1.0 / tau)


def clamp_log_inv_tau(value: float) -> float:
    """Keep 1/tau inside [1, 100]."""
    return min(max(value, math.log(INV_TAU_MIN)), math.log(INV_TAU_MAX))


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights of the four alignment terms.

    ``lt``, ``rs`` and ``rt`` weight the local/text, ROI/summary and
    ROI/text terms; the global/summary term takes the remainder.
    """

    lt: float = 0.25
    rs: float = 0.25
    rt: float = 0.25
    alpha: float = 0.2
    smoothing: str = "verbatim"

    def __post_init__(self):
        for name in ("lt", "rs", "rt"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")
        if self.lt + self.rs + self.rt > 1.0 + 1e-12:
            raise ValueError("loss weights lt + rs + rt must not exceed 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("smoothing alpha must lie in [0, 1)")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}")

    @property
    def gs(self) -> float:
        rest = 1.0 - self.lt - self.rs - self.rt
        return 0.0 if rest < 1e-12 else rest

    def as_dict(self) -> dict[str, float]:
        return {"gs": self.gs, "lt": self.lt, "rs": self.rs, "rt": self.rt}


@dataclass
class LossBreakdown:
    l_gs: Tensor | None
    l_lt: Tensor | None
    l_rs: Tensor | None
    l_rt: Tensor | None
    total: Tensor

    def values(self) -> dict[str, float]:
        def f(t):
            return float("nan") if t is None else float(t.data)

        return {
            "l_gs": f(self.l_gs),
            "l_lt": f(self.l_lt),
            "l_rs": f(self.l_rs),
            "l_rt": f(self.l_rt),
            "total": f(self.total),
        }


def _scale(log_inv_tau) -> Tensor:
    t = as_tensor(log_inv_tau)
    return ops.exp(t)


def _logits(u: Tensor, v: Tensor, log_inv_tau) -> Tensor:
    if u.ndim != 2 or u.shape != v.shape:
        raise ValueError(f"embedding matrices must share shape (N, d), got {u.shape} and {v.shape}")
    if u.shape[0] < 2:
        raise ValueError("contrastive terms need at least 2 pairs")
    return ops.mul(ops.matmul(u, ops.transpose(v)), _scale(log_inv_tau))


def similarity_probs(u, v, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized image-to-text and text-to-image similarity distributions."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    u, v = as_tensor(u), as_tensor(v)
    logits = _logits(u, v, math.log(1.0 / tau))
    p_a = softmax(logits, axis=1)
    p_b = softmax(ops.transpose(logits), axis=1)
    return p_a.data, p_b.data


def soft_targets(n: int, alpha: float, smoothing: str = "verbatim") -> np.ndarray:
    """Label-smoothed contrastive targets.

    ``verbatim`` adds ``alpha/(n-1)`` to every entry of ``(1-alpha)*I``, so the
    diagonal carries both shares and rows sum to ``1 + alpha/(n-1)``.
    ``exclusive`` puts ``1-alpha`` on the diagonal and ``alpha/(n-1)`` on the
    rest, so rows sum to 1.
    """
    if n < 2:
        raise ValueError("soft targets need n >= 2")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    off = alpha / (n - 1)
    if smoothing == "verbatim":
        return (1.0 - alpha) * np.eye(n) + off
    if smoothing == "exclusive":
        return (1.0 - alpha - off) * np.eye(n) + off
    raise ValueError(f"unknown smoothing mode {smoothing!r}")


def contrastive_term(u, v, log_inv_tau, alpha: float = 0.0, smoothing: str = "verbatim") -> Tensor:
    """Symmetric softened InfoNCE between paired rows of ``u`` and ``v``.

    ``log_inv_tau`` is log(1/tau) as a float or a 0-d tensor (learnable).
    """
    u, v = as_tensor(u), as_tensor(v)
    logits = _logits(u, v, log_inv_tau)
    n = u.shape[0]
    y = soft_targets(n, alpha, smoothing)
    log_pa = log_softmax(logits, axis=1)
    log_pb = log_softmax(ops.transpose(logits), axis=1)
    total = ops.add(ops.sum(ops.mul(log_pa, y)), ops.sum(ops.mul(log_pb, y)))
    return ops.mul(total, -1.0 / (2 * n))


def total_loss(embeddings: dict[str, Tensor], weights: LossWeights, log_inv_tau) -> LossBreakdown:
    """Weighted sum of the four alignment terms.

    ``embeddings`` maps ``v_g``, ``v_l``, ``v_r``, ``l_s`` and ``l_t`` to (N, d)
    tensors. Terms with zero weight are skipped and their embeddings may be
    absent.
    """
    pairs = {
        "gs": ("v_g", "l_s"),
        "lt": ("v_l", "l_t"),
        "rs": ("v_r", "l_s"),
        "rt": ("v_r", "l_t"),
    }
    terms: dict[str, Tensor | None] = {}
    total: Tensor | None = None
    for key, w in weights.as_dict().items():
        if w == 0.0:
            terms[key] = None
            continue
        a, b = pairs[key]
        if a not in embeddings or b not in embeddings:
            raise KeyError(f"term {key} has weight {w} but embeddings {a}/{b} are missing")
        term = contrastive_term(embeddings[a], embeddings[b], log_inv_tau, weights.alpha, weights.smoothing)
        terms[key] = term
        weighted = ops.mul(term, w)
        total = weighted if total is None else ops.add(total, weighted)
    if total is None:
        raise ValueError("every loss weight is zero")
    return LossBreakdown(terms["gs"], terms["lt"], terms["rs"], terms["rt"], total)
