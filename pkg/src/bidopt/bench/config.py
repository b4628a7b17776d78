"""Experiment configuration.

One YAML file holds every knob; each key has a default and unknown keys are
rejected.  ``BenchConfig().model_dump()`` is the documented default file.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _diurnal_curve() -> list[float]:
    # quiet overnight, evening peak
    h = np.arange(24)
    w = 1.0 + 0.6 * np.sin((h - 9) / 24 * 2 * np.pi) + 0.3 * np.exp(-((h - 20) ** 2) / 8)
    w = w / w.sum()
    return [float(v) for v in w]


class BetaParams(_Strict):
    a: float = Field(gt=0)
    b: float = Field(gt=0)


class LogNormalParams(_Strict):
    mu: float
    sigma: float = Field(ge=0)


class WinPriceModel(_Strict):
    """wp = value_ratio * v * exp(sigma * z), z standard normal."""

    value_ratio: float = Field(default=0.7, gt=0)
    sigma: float = Field(default=0.6, ge=0)


class ShiftSchedule(_Strict):
    """Every ``period``-th day (starting at ``offset``) is a promotion day."""

    period: int = Field(default=7, ge=1)
    offset: int = Field(default=9, ge=0)
    wp_multiplier: float = Field(default=3.0, gt=0)
    volume_multiplier: float = Field(default=2.0, gt=0)
    enabled: bool = True

    def is_shift_day(self, day: int) -> bool:
        return self.enabled and day >= self.offset and (day - self.offset) % self.period == 0


class ScenarioConfig(_Strict):
    """Impression-level world used by the auction simulator."""

    seed: int = 0
    campaigns: int = Field(default=8, ge=1)
    days: int = Field(default=14, ge=1)
    impressions_per_day: int = Field(default=1200, ge=1)
    volume_curve: list[float] = Field(default_factory=_diurnal_curve)
    pctr: BetaParams = BetaParams(a=2.0, b=38.0)
    pcvr: BetaParams = BetaParams(a=2.0, b=28.0)
    ppay: LogNormalParams = LogNormalParams(mu=4.0, sigma=0.5)
    wp: WinPriceModel = WinPriceModel()
    shift: ShiftSchedule = ShiftSchedule()
    budget_fraction: float = Field(default=0.35, gt=0)
    # declared CPA cap relative to the campaign's typical listed price
    cap_factor: float = Field(default=0.8, gt=0)
    # day-to-day variation of the logged targets and budgets on training days
    target_spread: float = Field(default=0.3, ge=0)
    budget_spread: float = Field(default=0.3, ge=0)
    value: Literal["gmv", "clicks"] = "gmv"

    @field_validator("volume_curve")
    @classmethod
    def _curve(cls, v):
        if len(v) != 24 or any(x < 0 for x in v) or not np.isclose(sum(v), 1.0):
            raise ValueError("volume_curve needs 24 non-negative weights summing to 1")
        return v


class MacroDataConfig(_Strict):
    """Noisy concave price-volume world: tCPA = a * (cost / s) ** gamma per campaign."""

    seed: int = 0
    campaigns: int = Field(default=40, ge=1)
    days: int = Field(default=21, ge=2)
    cost_scale: LogNormalParams = LogNormalParams(mu=7.0, sigma=0.8)
    tcpa_scale: LogNormalParams = LogNormalParams(mu=3.4, sigma=0.3)
    gamma_low: float = Field(default=0.3, gt=0)
    gamma_high: float = Field(default=0.8, gt=0)
    day_spread: float = Field(default=0.5, ge=0)
    final_day_spread: float = Field(default=0.5, ge=0)
    noise: float = Field(default=0.08, ge=0)
    conversion_noise: float = Field(default=0.05, ge=0)
    strategy_mix: tuple[float, float, float] = (0.4, 0.35, 0.25)

    @model_validator(mode="after")
    def _check(self):
        if self.gamma_low > self.gamma_high:
            raise ValueError("gamma_low must not exceed gamma_high")
        if not np.isclose(sum(self.strategy_mix), 1.0) or min(self.strategy_mix) < 0:
            raise ValueError("strategy_mix must be three non-negative shares summing to 1")
        return self


class MacroTraining(_Strict):
    segments: int = Field(default=10, ge=2, le=32)
    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=0.003, gt=0)
    history: int = Field(default=28, ge=0, le=28)
    # squared-error unit: 1.0 means errors are measured in multiples of the median tCPA
    mse_scale: float = Field(default=100.0, gt=0)
    head_gain: float = Field(default=4.0, gt=0)


class MicroTraining(_Strict):
    beta: float = Field(default=0.1, ge=0)
    kp: float = 0.7
    ki: float = 0.1
    epochs: int = Field(default=20, ge=1)
    batch_size: int = Field(default=16, ge=1)
    lr: float = Field(default=0.2, gt=0)
    train_days: int = Field(default=7, ge=1)
    noisy_copies: int = Field(default=2, ge=0)
    action_noise: float = Field(default=0.1, ge=0)


class BenchSettings(_Strict):
    seeds: int = Field(default=3, ge=1)
    variants: list[str] = Field(default_factory=lambda: [
        "KBD", "KBD w/o DT", "KBD w/o PID", "w/o IE", "w/o GLA", "w/o L_margin", "w/o augmented data",
    ])
    oracle_exact_max: int = Field(default=20, ge=1, le=24)


class BenchConfig(_Strict):
    seed: int = 0
    scenario: ScenarioConfig = ScenarioConfig()
    macro_data: MacroDataConfig = MacroDataConfig()
    macro: MacroTraining = MacroTraining()
    micro: MicroTraining = MicroTraining()
    bench: BenchSettings = BenchSettings()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path: str | Path | None = None, seed: int | None = None) -> BenchConfig:
    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    if seed is not None:
        data["seed"] = seed
    return BenchConfig.model_validate(data)


def dump_default(path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(BenchConfig().model_dump(mode="json"), sort_keys=False))
