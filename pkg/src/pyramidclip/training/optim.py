"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Tensor

NO_DECAY_SUFFIXES = ("class_token", "log_inv_tau")


def decays(name: str, p: Tensor | np.ndarray) -> bool:
    """Weight decay applies to matrices only: gains, biases, the temperature and class tokens are exempt."""
    data = p.data if isinstance(p, Tensor) else p
    return data.ndim >= 2 and not name.endswith(NO_DECAY_SUFFIXES)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_update(w, g, m, v, t, lr, betas=(0.9, 0.98), eps=1e-6, weight_decay=0.2, decay=True):
    """One bias-corrected AdamW update on arrays; returns new (w, m, v)."""
    if not (w.shape == g.shape == m.shape == v.shape):
        raise ValueError(f"shape mismatch in AdamW update: w{w.shape} g{g.shape} m{m.shape} v{v.shape}")
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    b1, b2 = betas
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    update = m_hat / (np.sqrt(v_hat) + eps)
    if decay:
        update = update + weight_decay * w
    return w - lr * update, m, v


class AdamW:
    def __init__(self, named_params, betas=(0.9, 0.98), eps: float = 1e-6, weight_decay: float = 0.2):
        self.params: dict[str, Tensor] = dict(named_params)
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = OptimizerState(
            m={k: np.zeros_like(p.data) for k, p in self.params.items()},
            v={k: np.zeros_like(p.data) for k, p in self.params.items()},
        )

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        """Update every parameter that received a gradient."""
        self.state.step += 1
        t = self.state.step
        for name, p in self.params.items():
            if p.grad is None:
                continue
            p.data, self.state.m[name], self.state.v[name] = adamw_update(
                p.data, p.grad, self.state.m[name], self.state.v[name], t, lr,
                self.betas, self.eps, self.weight_decay, decays(name, p),
            )

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.state.m[name]
            out[f"opt.v.{name}"] = self.state.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step: int) -> None:
        for name, p in self.params.items():
            for key, store in (("m", self.state.m), ("v", self.state.v)):
                arr = arrays[f"opt.{key}.{name}"]
                if arr.shape != p.shape:
                    raise ValueError(f"optimizer buffer {key} for {name} has shape {arr.shape}, expected {p.shape}")
                store[name] = arr.copy()
        self.state.step = step
