"""Daily base-target stage: entropy partition, isotonic price-volume model, training."""

from .data import DayRecord, TrainingSample, build_samples, convert_to_tcpa, read_records, write_records
from .model import MacroConfig, PriceVolumeModel, base_target, loss_margin, loss_smooth, loss_total, predict_tcpa
from .partition import PartitionSpec, entropy_of_partition, fit_partition_gla, isotonic_embed

__all__ = [
    "DayRecord",
    "MacroConfig",
    "PartitionSpec",
    "PriceVolumeModel",
    "TrainingSample",
    "base_target",
    "build_samples",
    "convert_to_tcpa",
    "entropy_of_partition",
    "fit_partition_gla",
    "isotonic_embed",
    "loss_margin",
    "loss_smooth",
    "loss_total",
    "predict_tcpa",
    "read_records",
    "write_records",
]
