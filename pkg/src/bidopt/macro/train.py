from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..bench.metrics import regression_metrics
from ..substrate import checkpoint
from ..substrate.optim import NonFiniteGradient, sgd_step
from ..substrate.tensor import Tape
from .data import DayRecord, TrainingSample, build_samples, campaign_costs, split_last_day
from .model import MacroConfig, PriceVolumeModel, Scales, loss_total
from .partition import PartitionSpec, entropy_of_partition, fit_partition_gla

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good: dict[str, np.ndarray], report: "MacroReport"):
        super().__init__(message)
        self.last_good = last_good
        self.report = report


@dataclass
class MacroReport:
    epoch_loss: list[float] = field(default_factory=list)
    wmape: float = float("nan")
    mape: float = float("nan")
    perf10: float = float("nan")
    excluded: int = 0
    partition_entropy: float = float("nan")
    n_train: int = 0
    n_test: int = 0

    def to_dict(self) -> dict:
        return {
            "epoch_loss": list(self.epoch_loss),
            "wmape": self.wmape,
            "mape": self.mape,
            "perf10": self.perf10,
            "excluded": self.excluded,
            "partition_entropy": self.partition_entropy,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def fit_scales(samples: Sequence[TrainingSample]) -> Scales:
    costs = np.array([s.cost for s in samples])
    tcpas = np.array([s.tcpa for s in samples])
    return Scales(cost=float(np.median(costs[costs > 0])), tcpa=float(np.median(tcpas)))


def fit_partition(samples: Sequence[TrainingSample], config: MacroConfig) -> PartitionSpec:
    costs = campaign_costs(samples)
    pooled = np.concatenate(costs)
    n = min(config.segments, len(np.unique(pooled)))
    if n < 2:
        raise ValueError("need at least two distinct training costs to build a partition")
    if n < config.segments:
        log.warning("only %d distinct training costs; using %d segments instead of %d", n, n, config.segments)
    if config.use_gla:
        return fit_partition_gla(costs, n)
    return PartitionSpec.equal_width(float(pooled.min()), float(pooled.max()), n)


def evaluate(model: PriceVolumeModel, samples: Sequence[TrainingSample]):
    pred = model.predict([s.history for s in samples], [s.cost for s in samples])
    return regression_metrics(pred, [s.tcpa for s in samples], [s.cost for s in samples])


def train_macro(
    records: Sequence[DayRecord],
    config: MacroConfig = MacroConfig(),
) -> tuple[PriceVolumeModel, MacroReport]:
    """Fit the partition once on training costs, then run minibatch SGD on the total loss.

    The final day of every campaign is held out and scored at the end.
    """
    samples = build_samples(records, history=config.history, augmented=config.use_augmented)
    if not samples:
        raise ValueError("no training samples")
    train, test = split_last_day(samples)
    if not train:
        raise ValueError("every campaign has a single day; nothing left to train on")
    rng = np.random.default_rng(config.seed)
    partition = fit_partition(train, config)
    if partition.n != config.segments:
        config = replace(config, segments=partition.n)
    model = PriceVolumeModel.init(partition, fit_scales(train), config, rng)
    report = MacroReport(
        partition_entropy=entropy_of_partition(campaign_costs(train), partition),
        n_train=len(train), n_test=len(test),
    )
    plist = model.param_list
    last_good = {k: v.value.copy() for k, v in model.params.items()}
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start:start + config.batch_size]]
            try:
                with Tape() as tape:
                    loss = loss_total(model, batch)
                if not np.isfinite(loss.value):
                    raise NonFiniteGradient(f"loss is {float(loss.value)}")
                grads = tape.gradient(loss, plist)
                sgd_step(plist, grads, config.lr, clip=config.clip)
            except FloatingPointError as exc:
                for k, v in last_good.items():
                    model.params[k].value = v.copy()
                raise TrainingDiverged(f"epoch {epoch}: {exc}", last_good, report) from exc
            total += float(loss.value) * len(batch)
            count += len(batch)
        report.epoch_loss.append(total / count)
        last_good = {k: v.value.copy() for k, v in model.params.items()}
    if test:
        m = evaluate(model, test)
        report.wmape, report.mape, report.perf10, report.excluded = m.wmape, m.mape, m.perf10, m.excluded
    return model, report


def save_model(path, model: PriceVolumeModel, report: MacroReport | None = None) -> None:
    meta = model.to_meta()
    if report is not None:
        meta["report"] = report.to_dict()
    checkpoint.save(path, model.params, meta)


def load_model(path) -> PriceVolumeModel:
    arrays, meta = checkpoint.load(path)
    return PriceVolumeModel.from_arrays(arrays, meta)
