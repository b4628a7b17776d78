"""Hindsight-optimal value of a day: best subset of impressions under budget and CPA caps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..auction import Impressions

EXACT_MAX = 20
_CHUNK_BITS = 16

ValueKind = Literal["gmv", "clicks"]


@dataclass(frozen=True)
class OracleResult:
    value: float
    selected: np.ndarray  # bool mask over impressions
    approximate: bool


def impression_values(imps: Impressions, kind: ValueKind = "gmv") -> np.ndarray:
    if kind == "gmv":
        return imps.value
    if kind == "clicks":
        return imps.pctr.copy()
    raise ValueError(f"unknown value kind {kind!r}")


def feasible(cost: float, conversions: float, budget: float, cpa_cap: float) -> bool:
    # empty selections are feasible; otherwise spend within budget and cost per conversion within the cap
    return cost <= budget and cost <= cpa_cap * conversions if cost > 0 else True


def _exact(v, wp, conv, budget, cap) -> tuple[float, np.ndarray]:
    m = len(v)
    best_val, best_idx = 0.0, 0
    low_bits = min(m, _CHUNK_BITS)
    low = ((np.arange(1 << low_bits)[:, None] >> np.arange(low_bits)) & 1).astype(np.float64)
    lv, lc, lk = low @ v[:low_bits], low @ wp[:low_bits], low @ conv[:low_bits]
    for high in range(1 << (m - low_bits)):
        hbits = ((high >> np.arange(m - low_bits)) & 1).astype(np.float64)
        val = lv + hbits @ v[low_bits:]
        cost = lc + hbits @ wp[low_bits:]
        cv = lk + hbits @ conv[low_bits:]
        ok = (cost <= budget) & ((cost <= cap * cv) | (cost == 0))
        if not ok.any():
            continue
        cand = np.where(ok, val, -np.inf)
        j = int(np.argmax(cand))
        if cand[j] > best_val:
            best_val, best_idx = float(cand[j]), (high << low_bits) | j
    selected = ((best_idx >> np.arange(m)) & 1).astype(bool)
    return best_val, selected


def _greedy(v, wp, conv, budget, cap) -> tuple[float, np.ndarray]:
    order = np.lexsort((np.arange(len(v)), -(v / wp)))
    selected = np.zeros(len(v), dtype=bool)
    cost = cv = val = 0.0
    for i in order:
        c, k = cost + wp[i], cv + conv[i]
        if c <= budget and c <= cap * k:
            selected[i] = True
            cost, cv, val = c, k, val + v[i]
    return val, selected


def oracle_value(
    imps: Impressions, budget: float, cpa_cap: float, kind: ValueKind = "gmv",
    exact_max: int = EXACT_MAX, force_greedy: bool = False,
) -> OracleResult:
    """Maximum total value over subsets with spend <= budget and spend <= cap * conversions.

    Instances up to ``exact_max`` impressions are enumerated exhaustively.
    Larger ones use greedy selection by value per unit price; that result is
    a lower bound and is flagged approximate.
    """
    if exact_max > 24:
        raise ValueError("exhaustive search above 24 impressions is not supported")
    v = impression_values(imps, kind)
    wp, conv = imps.wp, imps.conv
    if len(v) == 0 or budget <= 0:
        return OracleResult(0.0, np.zeros(len(v), dtype=bool), False)
    if force_greedy or len(v) > exact_max:
        val, sel = _greedy(v, wp, conv, budget, cpa_cap)
        return OracleResult(val, sel, True)
    val, sel = _exact(v, wp, conv, budget, cpa_cap)
    return OracleResult(val, sel, False)


def achieved_value(
    imps: Impressions, won_ids, budget: float, cpa_cap: float, kind: ValueKind = "gmv",
) -> float:
    """Value a policy is credited with: the longest feasible prefix of its wins.

    ``won_ids`` lists won impression ids in the order they were bought.  A day
    that ends within both caps is credited in full.
    """
    row = {int(i): k for k, i in enumerate(imps.id)}
    rows = np.array([row[int(i)] for i in won_ids], dtype=np.int64)
    if rows.size == 0:
        return 0.0
    v = impression_values(imps, kind)[rows]
    cost = np.cumsum(imps.wp[rows])
    conv = np.cumsum(imps.conv[rows])
    ok = (cost <= budget) & (cost <= cpa_cap * conv)
    if not ok.any():
        return 0.0
    k = int(np.flatnonzero(ok)[-1])
    return float(v[: k + 1].sum())
