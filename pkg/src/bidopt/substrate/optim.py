from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(FloatingPointError):
    pass


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads], norm
    return list(grads), norm


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    lr: float,
    clip: float | None = None,
) -> float:
    """In-place ``p <- p - lr * g``; returns the pre-clip gradient norm."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {list(g.shape)} != parameter shape {list(p.shape)} for {p!r}")
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[:5].tolist()
            raise NonFiniteGradient(f"non-finite gradient for {p!r} at {bad}")
    if clip is not None:
        grads, norm = clip_by_global_norm(grads, clip)
    else:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    for p, g in zip(params, grads):
        p.value = p.value - lr * g
    return norm
