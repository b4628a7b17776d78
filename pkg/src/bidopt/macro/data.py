"""Day-level campaign records and the training samples built from them."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..auction import STRATEGIES

RECORD_COLUMNS = ("campaign_id", "day", "strategy", "target_value", "cost", "gmv", "avg_pcvr", "listed_price")
AUGMENTED_WEIGHT = 0.1
MAX_HISTORY = 28


@dataclass(frozen=True)
class DayRecord:
    campaign_id: str
    day: int
    strategy: str
    target_value: float
    cost: float
    gmv: float = 0.0
    avg_pcvr: float = 0.0
    listed_price: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.cost < 0:
            raise ValueError(f"{self.campaign_id} day {self.day}: negative cost")


def convert_to_tcpa(record: DayRecord) -> tuple[float, float]:
    """Equivalent tCPA and sample weight for a record of any strategy.

    tROI records use the listed price as the payment (tCPA = price / tROI);
    tCPC records use the campaign's average conversion rate
    (tCPA = tCPC / pCVR).  Converted samples carry weight 0.1.
    """
    if record.strategy == "tCPA":
        if record.target_value <= 0:
            raise ValueError(f"{record.campaign_id} day {record.day}: tCPA must be positive")
        return record.target_value, 1.0
    if record.strategy == "tROI":
        if record.target_value <= 0:
            raise ValueError(f"{record.campaign_id} day {record.day}: tROI must be positive")
        if record.listed_price <= 0:
            raise ValueError(f"{record.campaign_id} day {record.day}: listed price must be positive")
        return record.listed_price / record.target_value, AUGMENTED_WEIGHT
    if record.avg_pcvr <= 0:
        raise ValueError(f"{record.campaign_id} day {record.day}: average pCVR must be positive")
    if record.target_value <= 0:
        raise ValueError(f"{record.campaign_id} day {record.day}: tCPC must be positive")
    return record.target_value / record.avg_pcvr, AUGMENTED_WEIGHT


def write_records(path: str | Path, records: Iterable[DayRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([
                r.campaign_id, r.day, r.strategy, repr(float(r.target_value)), repr(float(r.cost)),
                repr(float(r.gmv)), repr(float(r.avg_pcvr)), repr(float(r.listed_price)),
            ])


def read_records(path: str | Path) -> list[DayRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(RECORD_COLUMNS)}, got {reader.fieldnames}")
        return [
            DayRecord(
                row["campaign_id"], int(row["day"]), row["strategy"], float(row["target_value"]),
                float(row["cost"]), float(row["gmv"]), float(row["avg_pcvr"]), float(row["listed_price"]),
            )
            for row in reader
        ]


@dataclass
class TrainingSample:
    """One (cost -> tCPA) target with the campaign's preceding day records.

    ``history`` rows are ``(cost, tcpa, strategy index)``, oldest first.
    """

    campaign_id: str
    day: int
    cost: float
    tcpa: float
    weight: float
    history: np.ndarray = field(repr=False)
    strategy: str = "tCPA"


def build_samples(
    records: Sequence[DayRecord],
    history: int = MAX_HISTORY,
    augmented: bool = True,
) -> list[TrainingSample]:
    """Turn day records into samples; ``augmented=False`` drops non-tCPA days entirely."""
    if not 0 <= history <= MAX_HISTORY:
        raise ValueError(f"history length must be in 0..{MAX_HISTORY}")
    by_campaign: dict[str, list[DayRecord]] = defaultdict(list)
    for r in records:
        if augmented or r.strategy == "tCPA":
            by_campaign[r.campaign_id].append(r)
    samples = []
    for cid in sorted(by_campaign):
        rows = sorted(by_campaign[cid], key=lambda r: r.day)
        converted = [convert_to_tcpa(r) for r in rows]
        past = np.array(
            [(r.cost, t, STRATEGIES.index(r.strategy)) for r, (t, _) in zip(rows, converted)],
            dtype=np.float64,
        ).reshape(-1, 3)
        for i, (r, (tcpa, weight)) in enumerate(zip(rows, converted)):
            samples.append(TrainingSample(
                campaign_id=cid, day=r.day, cost=r.cost, tcpa=tcpa, weight=weight,
                history=past[max(0, i - history):i].copy(), strategy=r.strategy,
            ))
    return samples


def history_matrix(records: Sequence[DayRecord], campaign_id: str, history: int = MAX_HISTORY) -> np.ndarray:
    """The most recent ``history`` rows ``(cost, tcpa, strategy index)`` of one campaign, oldest first."""
    rows = sorted((r for r in records if r.campaign_id == campaign_id), key=lambda r: r.day)
    if history == 0 or not rows:
        return np.zeros((0, 3))
    rows = rows[-history:]
    return np.array(
        [(r.cost, convert_to_tcpa(r)[0], STRATEGIES.index(r.strategy)) for r in rows], dtype=np.float64,
    ).reshape(-1, 3)


def split_last_day(samples: Sequence[TrainingSample]) -> tuple[list[TrainingSample], list[TrainingSample]]:
    """Hold out each campaign's final day."""
    last: dict[str, int] = {}
    for s in samples:
        last[s.campaign_id] = max(last.get(s.campaign_id, s.day), s.day)
    train = [s for s in samples if s.day != last[s.campaign_id]]
    test = [s for s in samples if s.day == last[s.campaign_id]]
    return train, test


def campaign_costs(samples: Sequence[TrainingSample]) -> list[np.ndarray]:
    by: dict[str, list[float]] = defaultdict(list)
    for s in samples:
        by[s.campaign_id].append(s.cost)
    return [np.asarray(by[k]) for k in sorted(by)]
