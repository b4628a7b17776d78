"""Entropy-maximising cost partitions and the isotonic embedding over them.

Boundaries ``b_0 < ... < b_N`` split the cost axis into N intervals
``[b_{j-1}, b_j)`` (the last one closed).  A partition is scored by the sum,
over campaigns, of the base-N entropy of that campaign's sample histogram.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionSpec:
    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64)
        if b.ndim != 1 or b.size < 3:
            raise ValueError("a partition needs at least 2 segments")
        if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
            raise ValueError(f"boundaries must be finite and strictly increasing: {list(b)}")
        object.__setattr__(self, "boundaries", tuple(float(v) for v in b))

    @property
    def n(self) -> int:
        return len(self.boundaries) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.boundaries)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.array)

    @classmethod
    def equal_width(cls, lo: float, hi: float, n: int) -> "PartitionSpec":
        if n < 2:
            raise ValueError("need at least 2 segments")
        if not hi > lo:
            raise ValueError(f"degenerate cost range [{lo}, {hi}]")
        return cls(tuple(np.linspace(lo, hi, n + 1)))

    def assign(self, costs) -> np.ndarray:
        """Interval index of each cost; out-of-range costs go to the end intervals."""
        inner = self.array[1:-1]
        return np.searchsorted(inner, np.asarray(costs, dtype=np.float64), side="right")


def _entropy_terms(counts: np.ndarray, totals: np.ndarray, n: int) -> np.ndarray:
    """-p log_N p per (campaign, interval) with 0 log 0 = 0."""
    p = counts / totals[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, -p * np.log(p), 0.0)
    return t / np.log(n)


def campaign_entropies(samples: Sequence[Sequence[float]], spec: PartitionSpec) -> np.ndarray:
    """Per-campaign entropy in [0, 1]; empty campaigns are skipped."""
    rows = []
    for k, costs in enumerate(samples):
        costs = np.asarray(costs, dtype=np.float64)
        if costs.size == 0:
            log.warning("campaign %d has no cost samples; skipped", k)
            continue
        rows.append(np.bincount(spec.assign(costs), minlength=spec.n))
    if not rows:
        return np.zeros(0)
    counts = np.asarray(rows, dtype=np.float64)
    return _entropy_terms(counts, counts.sum(axis=1), spec.n).sum(axis=1)


def entropy_of_partition(samples: Sequence[Sequence[float]], spec: PartitionSpec) -> float:
    return float(campaign_entropies(samples, spec).sum())


class _CutScorer:
    """Entropy of intervals expressed as ranges of the sorted distinct values."""

    def __init__(self, samples: Sequence[np.ndarray], n: int):
        pooled = np.concatenate(samples)
        self.values = np.unique(pooled)
        k = self.values.size
        counts = np.zeros((len(samples), k))
        for i, s in enumerate(samples):
            counts[i] = np.bincount(np.searchsorted(self.values, s), minlength=k)
        self.prefix = np.concatenate([np.zeros((len(samples), 1)), np.cumsum(counts, axis=1)], axis=1)
        self.totals = self.prefix[:, -1]
        self.n = n

    def interval(self, lo, hi) -> np.ndarray:
        """Entropy contribution of value ranges [lo, hi); broadcasts over arrays of cuts."""
        lo, hi = np.broadcast_arrays(lo, hi)
        z = self.prefix[:, hi] - self.prefix[:, lo]
        p = z / (self.totals[:, None] if z.ndim == 2 else self.totals)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(p > 0, -p * np.log(p), 0.0)
        return t.sum(axis=0) / np.log(self.n)

    def total(self, cuts: Sequence[int]) -> float:
        return float(sum(self.interval(a, b) for a, b in zip(cuts[:-1], cuts[1:])))

    def matrix(self) -> np.ndarray:
        """``E[lo, hi]`` for every range of distinct values, -inf where hi <= lo."""
        k = self.values.size
        out = np.full((k + 1, k + 1), -np.inf)
        for lo in range(k):
            out[lo, lo + 1:] = self.interval(lo, np.arange(lo + 1, k + 1))
        return out

    def cut_value(self, c: int) -> float:
        """Boundary value for a cut between distinct values c-1 and c."""
        return 0.5 * (self.values[c - 1] + self.values[c])


def _split_to_n(cuts: list[int], n: int) -> list[int]:
    """Split the widest ranges (by distinct-value count) until there are n of them.

    Splitting never lowers entropy, so the result scores at least as well.
    """
    cuts = sorted(set(cuts))
    while len(cuts) - 1 < n:
        widths = np.diff(cuts)
        j = int(np.argmax(widths))
        cuts.insert(j + 1, cuts[j] + int(widths[j]) // 2)
    return cuts


def _joint_update(scorer: _CutScorer, n: int) -> list[int]:
    """Best cuts for all boundaries at once.

    Total entropy is a sum of per-interval terms, so the best placement of
    every boundary on the sorted-value axis follows from a chain recursion.
    Ties resolve to the lowest cut.
    """
    k = scorer.values.size
    E = scorer.matrix()
    best = E[0].copy()  # best[h]: one interval covering [0, h)
    back = []
    for _ in range(1, n):
        cand = best[:, None] + E
        arg = np.argmax(cand, axis=0)
        best = cand[arg, np.arange(k + 1)]
        back.append(arg)
    cuts = [k]
    for arg in reversed(back):
        cuts.append(int(arg[cuts[-1]]))
    cuts.append(0)
    return cuts[::-1]


def fit_partition_gla(
    samples: Sequence[Sequence[float]],
    n: int = 10,
    max_iters: int = 100,
    tol: float = 1e-12,
    max_joint_values: int = 4000,
) -> PartitionSpec:
    """Entropy-maximising boundaries by Lloyd-style alternating updates.

    Starting from the equal-width partition over the pooled cost range, each
    pass assigns samples to intervals, then moves every interior boundary in
    turn to the split position between adjacent distinct values that maximises
    total entropy given its neighbours (lowest position on ties).  Passes stop
    when the gain falls below ``tol``.

    Coordinate moves can stall in a local optimum, so once they converge all
    boundaries are re-placed jointly; the joint placement is kept only if it
    is strictly better.
    """
    if n < 2:
        raise ValueError("need at least 2 segments")
    arrays = [np.asarray(s, dtype=np.float64) for s in samples]
    for k, s in enumerate(arrays):
        if s.size == 0:
            log.warning("campaign %d has no cost samples; skipped", k)
    arrays = [s for s in arrays if s.size]
    total = sum(s.size for s in arrays)
    if total < n:
        raise ValueError(f"{total} samples cannot fill {n} segments")
    scorer = _CutScorer(arrays, n)
    k = scorer.values.size
    if k < 2:
        raise ValueError("need at least two distinct cost values")
    if k < n:
        log.warning("only %d distinct costs; reducing segments from %d to %d", k, n, k)
        n = k
        scorer.n = n

    lo, hi = float(scorer.values[0]), float(scorer.values[-1])
    init = PartitionSpec.equal_width(lo, hi, n)
    init_cuts = [0] + [int(np.searchsorted(scorer.values, b, side="left")) for b in init.array[1:-1]] + [k]
    if all(b > a for a, b in zip(init_cuts[:-1], init_cuts[1:])):
        cuts = init_cuts
        bounds = list(init.array)
    else:
        cuts = _split_to_n([c for c in init_cuts], n)
        bounds = [lo] + [scorer.cut_value(c) for c in cuts[1:-1]] + [hi]

    current = scorer.total(cuts)
    for _ in range(max_iters):
        start = current
        for j in range(1, n):
            left, right = cuts[j - 1], cuts[j + 1]
            cand = np.arange(left + 1, right)
            scores = scorer.interval(left, cand) + scorer.interval(cand, right)
            best = int(np.argmax(scores))
            here = scorer.interval(left, cuts[j]) + scorer.interval(cuts[j], right)
            if scores[best] > here + tol:
                cuts[j] = int(cand[best])
                bounds[j] = scorer.cut_value(cuts[j])
        current = scorer.total(cuts)
        if current - start < tol:
            break
    if n > 2 and scorer.values.size <= max_joint_values:
        joint = _joint_update(scorer, n)
        if scorer.total(joint) > current + tol:
            cuts = joint
            bounds = [lo] + [scorer.cut_value(c) for c in cuts[1:-1]] + [hi]
    return PartitionSpec(tuple(bounds))


def isotonic_embed(cost, spec: PartitionSpec) -> np.ndarray:
    """Cumulative coverage ``P_j = clip((cost - b_{j-1}) / step_j, 0, 1)``.

    Accepts a scalar or an array of costs; the last axis of the result has
    length N.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if np.any(cost < 0):
        raise ValueError("cost must be non-negative")
    b = spec.array
    return np.clip((cost[..., None] - b[:-1]) / spec.steps, 0.0, 1.0)
