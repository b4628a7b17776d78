from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

PERF_THRESHOLD = 0.10


@dataclass(frozen=True)
class RegressionMetrics:
    wmape: float
    mape: float
    perf10: float
    excluded: int = 0


def regression_metrics(predictions, targets, costs) -> RegressionMetrics:
    """Cost-weighted MAPE, MAPE and the share of predictions within 10% relative error.

    Samples with a zero target are excluded and counted.
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    c = np.asarray(costs, dtype=np.float64)
    if not p.shape == t.shape == c.shape:
        raise ValueError(f"length mismatch: {p.shape}, {t.shape}, {c.shape}")
    keep = t != 0
    excluded = int((~keep).sum())
    if excluded:
        log.warning("%d samples with zero target excluded", excluded)
    p, t, c = p[keep], t[keep], c[keep]
    if p.size == 0:
        return RegressionMetrics(float("nan"), float("nan"), float("nan"), excluded)
    err = np.abs(p - t) / np.abs(t)
    wsum = c.sum()
    wmape = float((c * err).sum() / wsum) if wsum > 0 else float("nan")
    # tiny slack so that a 10% miss computed in floating point still counts
    within = err <= PERF_THRESHOLD * (1 + 1e-12)
    return RegressionMetrics(wmape, float(err.mean()), float(within.mean()), excluded)


@dataclass(frozen=True)
class DayOutcome:
    """What the constraint check needs to know about one campaign-day."""

    cost: float
    budget: float
    conversions: float
    cpa_cap: float

    @property
    def cpa(self) -> float | None:
        return self.cost / self.conversions if self.conversions > 0 else None

    @property
    def satisfied(self) -> bool:
        if self.cost > self.budget:
            return False
        cpa = self.cpa
        if cpa is None:
            return self.cost == 0
        return cpa <= self.cpa_cap


def constraint_satisfaction(days: Iterable[DayOutcome]) -> float:
    """Share of campaign-days within budget and within the CPA cap."""
    days = list(days)
    if not days:
        return float("nan")
    return sum(d.satisfied for d in days) / len(days)
