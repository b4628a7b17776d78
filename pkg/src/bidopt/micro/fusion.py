"""Uncertainty-weighted blend of the learned policy and the pacing rule."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..auction import Impressions, PlatformDuals, replay_hour
from .pid import ACTION_HIGH, ACTION_LOW

WINDOW = 3
GRID_POINTS = 41


@dataclass
class FusionState:
    """Relative errors of the learned policy over the most recent hours."""

    errors: deque = field(default_factory=lambda: deque(maxlen=WINDOW))

    @property
    def mape(self) -> float:
        return float(np.mean(np.abs(self.errors))) if self.errors else 0.0


def update_uncertainty(fusion: FusionState, a_dt: float, reference: float) -> FusionState:
    if not reference > 0:
        raise ValueError(f"reference action must be positive, got {reference}")
    errors = deque(fusion.errors, maxlen=WINDOW)
    errors.append(abs(a_dt - reference) / reference)
    return FusionState(errors)


def fuse(a_dt: float, a_pid: float, mape: float) -> float:
    """``max(1 - mape, 0) * a_dt + min(mape, 1) * a_pid``."""
    if mape < 0:
        raise ValueError("mape must be non-negative")
    return max(1.0 - mape, 0.0) * a_dt + min(mape, 1.0) * a_pid


def hindsight_reference(
    imps: Impressions, duals: PlatformDuals, c_ma: float, spent: float, budget: float, pace_budget: float,
) -> float:
    """Best coefficient for an hour that has already happened.

    Replays the hour over 41 coefficients in [0.8, 1.2] and keeps the one with
    the highest GMV whose cumulative spend stays within ``pace_budget``.  Ties
    go to the coefficient closest to 1.  If nothing is feasible the lowest
    coefficient is returned.
    """
    grid = np.linspace(ACTION_LOW, ACTION_HIGH, GRID_POINTS)
    best, best_gmv = ACTION_LOW, -np.inf
    for a in sorted(grid, key=lambda x: (abs(x - 1.0), x)):
        out = replay_hour(imps, duals, c_ma * a, spent, budget)
        if spent + out.cost <= pace_budget and out.gmv > best_gmv:
            best, best_gmv = float(a), out.gmv
    return best
