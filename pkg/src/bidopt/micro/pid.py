"""Proportional-integral pacing rule on budget-normalised spend error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..auction import HOURS, ideal_pace

ACTION_LOW = 0.8
ACTION_HIGH = 1.2
KP = 0.7
KI = 0.1


def clamp_action(a):
    return np.clip(a, ACTION_LOW, ACTION_HIGH)


@dataclass(frozen=True)
class PidGains:
    """Gains plus the cumulative ideal spend ``budget_curve[t]`` at the end of hour t."""

    kp: float
    ki: float
    budget_curve: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.budget_curve, dtype=np.float64)
        if b.shape != (HOURS,):
            raise ValueError(f"budget curve needs {HOURS} entries")
        if np.any(np.diff(b) < 0) or b[0] < 0:
            raise ValueError("budget curve must be non-negative and non-decreasing")

    @property
    def budget(self) -> float:
        return float(self.budget_curve[-1])

    @classmethod
    def for_budget(cls, budget: float, volume_curve=None, kp: float = KP, ki: float = KI) -> "PidGains":
        if budget < 0:
            raise ValueError("budget must be non-negative")
        curve = ideal_pace(volume_curve) * budget
        curve[-1] = budget
        return cls(kp, ki, tuple(float(x) for x in curve))


def pacing_errors(gains: PidGains, cost_history) -> np.ndarray:
    """``e_h = (cost_h - budget_h) / B`` for each completed hour (cumulative costs)."""
    c = np.asarray(cost_history, dtype=np.float64)
    if c.size > HOURS:
        raise ValueError("more than 24 hours of cost history")
    B = gains.budget
    if B <= 0:
        return np.zeros(c.size)
    return (c - np.asarray(gains.budget_curve[: c.size])) / B


def pid_action(gains: PidGains, cost_history, t: int) -> float:
    """Coefficient after ``t`` completed hours; overspend lowers it, underspend raises it.

    ``cost_history[h]`` is the cumulative spend at the end of hour h.  With no
    completed hour the rule is neutral.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 1.0
    c = np.asarray(cost_history, dtype=np.float64)
    if c.size < t:
        raise ValueError(f"need {t} hours of cost history, got {c.size}")
    e = pacing_errors(gains, c[:t])
    raw = gains.kp * e[-1] + gains.ki * e.sum()
    return float(clamp_action(1.0 - raw))
