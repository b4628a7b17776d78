"""Second-price auction day simulator with the platform's tCPA auto-bidding rule.

The platform bids ``v/(p+q) + q*pCTR*pCVR*C/(p+q)`` for every impression,
where ``p`` and ``q`` are budget and CPA dual variables it tunes hourly.  The
advertiser only controls ``C``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

HOURS = 24
STRATEGIES = ("tCPA", "tROI", "tCPC")
DUAL_FLOOR = 1e-9
IMPRESSION_COLUMNS = ("id", "hour", "pCTR", "pCVR", "ppay", "wp")


@dataclass(frozen=True)
class Impression:
    id: int
    hour: int
    pctr: float
    pcvr: float
    ppay: float
    wp: float

    def __post_init__(self):
        if not 0 <= self.hour < HOURS:
            raise ValueError(f"impression {self.id}: hour {self.hour} outside 0..23")
        if not (0 < self.pctr < 1 and 0 < self.pcvr < 1):
            raise ValueError(f"impression {self.id}: rates must lie in (0, 1)")
        if not (self.ppay > 0 and self.wp > 0):
            raise ValueError(f"impression {self.id}: ppay and wp must be positive")

    @property
    def value(self) -> float:
        return self.pctr * self.pcvr * self.ppay


@dataclass
class Impressions:
    """Column store for an impression stream; row order is arrival order."""

    id: np.ndarray
    hour: np.ndarray
    pctr: np.ndarray
    pcvr: np.ndarray
    ppay: np.ndarray
    wp: np.ndarray

    def __post_init__(self):
        self.id = np.asarray(self.id, dtype=np.int64)
        self.hour = np.asarray(self.hour, dtype=np.int64)
        for name in ("pctr", "pcvr", "ppay", "wp"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = len(self.id)
        if any(len(getattr(self, c)) != n for c in ("hour", "pctr", "pcvr", "ppay", "wp")):
            raise ValueError("impression columns have different lengths")

    @classmethod
    def empty(cls) -> "Impressions":
        return cls(*(np.empty(0) for _ in range(6)))

    @classmethod
    def from_list(cls, imps: Sequence[Impression]) -> "Impressions":
        return cls(
            [i.id for i in imps], [i.hour for i in imps], [i.pctr for i in imps],
            [i.pcvr for i in imps], [i.ppay for i in imps], [i.wp for i in imps],
        )

    def __len__(self) -> int:
        return len(self.id)

    def __iter__(self) -> Iterator[Impression]:
        for k in range(len(self)):
            yield self.row(k)

    def row(self, k: int) -> Impression:
        return Impression(
            int(self.id[k]), int(self.hour[k]), float(self.pctr[k]),
            float(self.pcvr[k]), float(self.ppay[k]), float(self.wp[k]),
        )

    def take(self, index) -> "Impressions":
        return Impressions(
            self.id[index], self.hour[index], self.pctr[index],
            self.pcvr[index], self.ppay[index], self.wp[index],
        )

    def for_hour(self, hour: int) -> "Impressions":
        return self.take(self.hour == hour)

    @property
    def conv(self) -> np.ndarray:
        """Expected conversions per impression (pCTR * pCVR)."""
        return self.pctr * self.pcvr

    @property
    def value(self) -> np.ndarray:
        return self.pctr * self.pcvr * self.ppay

    def validate(self) -> None:
        if len(self) == 0:
            return
        if np.any((self.hour < 0) | (self.hour >= HOURS)):
            raise ValueError("hour outside 0..23")
        if np.any((self.pctr <= 0) | (self.pctr >= 1) | (self.pcvr <= 0) | (self.pcvr >= 1)):
            raise ValueError("pCTR and pCVR must lie in (0, 1)")
        if np.any(self.ppay <= 0) or np.any(self.wp <= 0):
            raise ValueError("ppay and wp must be positive")


def write_impressions(path: str | Path, imps: Impressions) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMPRESSION_COLUMNS)
        for k in range(len(imps)):
            w.writerow([
                int(imps.id[k]), int(imps.hour[k]), repr(float(imps.pctr[k])),
                repr(float(imps.pcvr[k])), repr(float(imps.ppay[k])), repr(float(imps.wp[k])),
            ])


def read_impressions(path: str | Path) -> Impressions:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != IMPRESSION_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(IMPRESSION_COLUMNS)}, got {header}")
        rows = [r for r in reader if r]
    cols = list(zip(*rows)) if rows else [()] * 6
    imps = Impressions(
        [int(v) for v in cols[0]], [int(v) for v in cols[1]],
        *([float(v) for v in c] for c in cols[2:]),
    )
    imps.validate()
    return imps


@dataclass(frozen=True)
class PlatformDuals:
    p: float = 1.0
    q: float = 1.0
    eta_p: float = 0.2
    eta_q: float = 0.2

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError(f"duals must be non-negative, got p={self.p}, q={self.q}")
        if self.eta_p <= 0 or self.eta_q <= 0:
            raise ValueError("dual step sizes must be positive")

    @property
    def floored(self) -> bool:
        return self.p + self.q < DUAL_FLOOR


def platform_bid(imp: Impression | Impressions, duals: PlatformDuals, C: float):
    """Platform bid ``lambda0 + lambda1 * C``; scalar for one impression, array for a batch."""
    if not C > 0:
        raise ValueError(f"tCPA target must be positive, got {C}")
    denom = max(duals.p + duals.q, DUAL_FLOOR)
    conv = imp.pctr * imp.pcvr
    lam0 = conv * imp.ppay / denom
    lam1 = duals.q * conv / denom
    return lam0 + lam1 * C


def run_auction(bid, wp):
    """Win iff ``bid > wp`` (strict); the charge on a win is ``wp``."""
    bid = np.asarray(bid, dtype=np.float64)
    if np.any(bid < 0):
        raise ValueError("bids must be non-negative")
    won = bid > wp
    paid = np.where(won, wp, 0.0)
    if won.ndim == 0:
        return bool(won), float(paid)
    return won, paid


@dataclass
class HourLog:
    hour: int
    offered: int
    won: int
    cost: float
    gmv: float
    conversions: float
    c_applied: float
    p: float
    q: float
    skipped_budget: int = 0
    dual_floor: bool = False

    def to_record(self) -> dict:
        return asdict(self)


def ideal_pace(volume_curve: Sequence[float] | None = None) -> np.ndarray:
    """Cumulative ideal spend fraction at the end of each hour."""
    w = np.full(HOURS, 1.0 / HOURS) if volume_curve is None else np.asarray(volume_curve, dtype=np.float64)
    if w.shape != (HOURS,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
        raise ValueError("volume curve must be 24 non-negative weights summing to 1")
    pace = np.cumsum(w)
    pace[-1] = 1.0
    return pace


@dataclass
class CampaignState:
    budget: float
    target: float
    strategy: str = "tCPA"
    duals: PlatformDuals = field(default_factory=PlatformDuals)
    pace: np.ndarray = field(default_factory=ideal_pace)
    cost: float = 0.0
    gmv: float = 0.0
    conversions: float = 0.0
    logs: list[HourLog] = field(default_factory=list)
    won_ids: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def hour(self) -> int:
        """Index of the next hour to roll."""
        return len(self.logs)

    @property
    def exhausted(self) -> bool:
        return self.cost >= self.budget

    def cost_history(self) -> np.ndarray:
        return np.cumsum([h.cost for h in self.logs])


def realized_cpa(state: CampaignState) -> float | None:
    """Cumulative cost per expected conversion; ``None`` when no conversions yet."""
    if state.conversions <= 0:
        return None
    return state.cost / state.conversions


@dataclass(frozen=True)
class HourOutcome:
    won: np.ndarray
    cost: float
    gmv: float
    conversions: float
    skipped_budget: int


def replay_hour(
    imps: Impressions, duals: PlatformDuals, C: float, spent: float, budget: float
) -> HourOutcome:
    """Outcome of one hour's auctions without touching any campaign state.

    Impressions whose charge would push spend past ``budget`` are skipped.
    """
    if len(imps) == 0:
        return HourOutcome(np.zeros(0, dtype=bool), 0.0, 0.0, 0.0, 0)
    bids = platform_bid(imps, duals, C)
    won, _ = run_auction(bids, imps.wp)
    idx = np.flatnonzero(won)
    charges = imps.wp[idx]
    running = spent + np.cumsum(charges)
    skipped = 0
    if running.size and running[-1] > budget:
        # accept the affordable prefix, then walk the rest one by one
        k = int(np.argmax(running > budget))
        total = spent + float(charges[:k].sum())
        keep = list(idx[:k])
        for j, c in zip(idx[k:], charges[k:]):
            if total + c <= budget:
                total += c
                keep.append(j)
            else:
                skipped += 1
        won = np.zeros(len(imps), dtype=bool)
        won[np.asarray(keep, dtype=np.int64)] = True
    cost = float(imps.wp[won].sum())
    gmv = float(imps.value[won].sum())
    conversions = float(imps.conv[won].sum())
    return HourOutcome(won, cost, gmv, conversions, skipped)


def update_duals(duals: PlatformDuals, state: CampaignState, hour: int, C: float | None = None) -> PlatformDuals:
    """Clamped dual ascent on pacing error (p) and CPA error (q)."""
    if not 0 <= hour < HOURS:
        raise ValueError(f"hour {hour} outside 0..23")
    C = state.target if C is None else C
    if state.budget > 0:
        pace_err = float(np.clip(state.cost / state.budget - state.pace[hour], -1.0, 1.0))
    else:
        pace_err = 0.0
    cpa = realized_cpa(state)
    cpa_err = 0.0 if cpa is None else float(np.clip(cpa / C - 1.0, -1.0, 1.0))
    return replace(
        duals,
        p=max(0.0, duals.p + duals.eta_p * pace_err),
        q=max(0.0, duals.q + duals.eta_q * cpa_err),
    )


def roll_hour(state: CampaignState, imps: Impressions, C_effective: float) -> HourLog:
    """Run one hour of auctions at ``C_effective`` and advance the campaign."""
    hour = state.hour
    if hour >= HOURS:
        raise ValueError("campaign day already complete")
    if len(imps) and np.any(imps.hour != hour):
        raise ValueError(f"impressions for hour {hour} include other hours")
    duals = state.duals
    if duals.floored:
        log.warning("hour %d: p+q below floor, using %g", hour, DUAL_FLOOR)
    out = replay_hour(imps, duals, C_effective, state.cost, state.budget)
    if out.skipped_budget:
        log.info("hour %d: %d winning impressions skipped, budget exhausted", hour, out.skipped_budget)
    state.cost += out.cost
    state.gmv += out.gmv
    state.conversions += out.conversions
    entry = HourLog(
        hour=hour, offered=len(imps), won=int(out.won.sum()), cost=out.cost, gmv=out.gmv,
        conversions=out.conversions, c_applied=float(C_effective), p=duals.p, q=duals.q,
        skipped_budget=out.skipped_budget, dual_floor=duals.floored,
    )
    state.logs.append(entry)
    state.won_ids.append(imps.id[out.won])
    state.duals = update_duals(duals, state, hour, C_effective)
    return entry


def split_hours(imps: Impressions) -> list[Impressions]:
    return [imps.for_hour(h) for h in range(HOURS)]


def run_day(state: CampaignState, imps: Impressions, targets: Iterable[float]) -> list[HourLog]:
    """Roll all 24 hours with a fixed sequence of effective targets."""
    hours = split_hours(imps)
    return [roll_hour(state, hours[h], c) for h, c in zip(range(HOURS), targets)]


def write_hour_logs(path: str | Path, logs: Iterable[HourLog]) -> None:
    with open(path, "w") as fh:
        for entry in logs:
            fh.write(json.dumps(entry.to_record(), sort_keys=True) + "\n")


def read_hour_logs(path: str | Path) -> list[HourLog]:
    with open(path) as fh:
        return [HourLog(**json.loads(line)) for line in fh if line.strip()]
