"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def grad_check(
    fn: Callable[..., Tensor],
    point: Tensor | Sequence[Tensor],
    coords: Sequence | None = None,
    h: float = 1e-4,
    n_coords: int = 100,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
    stencil: int = 2,
) -> float:
    """Worst relative error between backprop and central differences.

    ``fn(*points)`` must return a scalar tensor. ``point`` is one tensor or a
    sequence of tensors; their data is perturbed in place and restored.
    ``coords`` holds flat indices (single tensor) or ``(tensor_index,
    flat_index)`` pairs; when omitted, ``n_coords`` coordinates are drawn
    uniformly over all entries.

    The relative error of one coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    Central-difference roundoff is about ``1e-16 * |f| / h``; where the true
    gradient is zero that noise is measured against ``floor``, so ``h`` must
    be large enough to keep it below the tolerance.

    ``stencil=4`` uses the fourth-order central difference
    ``(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h``. Its truncation error
    is O(h^4), so a larger ``h`` can be used and roundoff stays small even on
    coordinates whose gradient is around 1e-8, as in whole-model checks.
    """
    if stencil not in (2, 4):
        raise ValueError(f"stencil must be 2 or 4, got {stencil}")
    points = [point] if isinstance(point, Tensor) else list(point)
    saved = [p.requires_grad for p in points]
    for p in points:
        p.requires_grad = True
        p.grad = None

    out = fn(*points)
    if out.data.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in points]

    if coords is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = np.array([p.size for p in points])
        total = int(sizes.sum())
        flat = rng.choice(total, size=min(n_coords, total), replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        coords = []
        for f in sorted(int(v) for v in flat):
            t = int(np.searchsorted(offsets, f, side="right") - 1)
            coords.append((t, f - int(offsets[t])))
    elif isinstance(point, Tensor):
        coords = [(0, int(c)) for c in coords]

    worst = 0.0
    with no_grad():
        for t, idx in coords:
            view = points[t].data.reshape(-1)
            orig = view[idx]
            values = {}
            for k in ((2, 1, -1, -2) if stencil == 4 else (1, -1)):
                view[idx] = orig + k * h
                values[k] = float(fn(*points).data)
            view[idx] = orig
            if stencil == 4:
                numeric = (8.0 * (values[1] - values[-1]) - (values[2] - values[-2])) / (12.0 * h)
            else:
                numeric = (values[1] - values[-1]) / (2.0 * h)
            a = float(analytic[t].reshape(-1)[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)

    for p, rg in zip(points, saved):
        p.requires_grad = rg
        p.grad = None
    return worst
