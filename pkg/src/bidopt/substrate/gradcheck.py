from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    nonfinite: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    n_checked: int = 0

    def __float__(self) -> float:
        return self.max_rel_error


def grad_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-6,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(params)`` with central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    Coordinates whose comparison is not finite are listed in ``nonfinite``
    rather than folded into the maximum.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    names = list(params)
    tensors = [params[n] for n in names]
    with Tape() as tape, np.errstate(all="ignore"):
        loss = f(params)
    analytic = tape.gradient(loss, tensors, check_finite=False)

    report = GradCheckReport(max_rel_error=0.0, worst=None)
    for name, p, grad in zip(names, tensors, analytic):
        p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with np.errstate(all="ignore"):
                up = float(f(params).value)
                flat[i] = orig - eps
                down = float(f(params).value)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = float(grad.reshape(-1)[i])
            idx = np.unravel_index(i, p.shape)
            report.n_checked += 1
            if not (np.isfinite(numeric) and np.isfinite(a)):
                report.nonfinite.append((name, tuple(int(j) for j in idx)))
                continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst = (name, tuple(int(j) for j in idx))
    return report
