from __future__ import annotations

import math


def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    return int(round(warmup_fraction * total_steps))


def lr_at(step: int, total_steps: int, peak_lr: float = 5e-4, warmup_fraction: float = 0.1) -> float:
    """Linear warmup from 0 to ``peak_lr``, then cosine decay to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    w = warmup_steps(total_steps, warmup_fraction)
    if step <= w and w > 0:
        return peak_lr * step / w
    if total_steps == w:
        return peak_lr
    progress = (step - w) / (total_steps - w)
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
