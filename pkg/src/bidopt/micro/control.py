"""Hour-by-hour control of one campaign-day: C = C_ma * C_mi."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..auction import HOURS, CampaignState, HourLog, Impressions, ideal_pace, realized_cpa, roll_hour, split_hours
from ..bench.metrics import DayOutcome
from .dt import DecisionTransformer, dt_predict
from .fusion import FusionState, fuse, hindsight_reference, update_uncertainty
from .mdp import Trajectory, quantize_reward, state_features, step_reward
from .pid import KI, KP, PidGains, clamp_action, pid_action

MODES = ("PID", "DT", "FUSED")

# (hour, a_pid, a_dt or None, fusion mape) -> coefficient
Chooser = Callable[[int, float, "float | None", float], float]


@dataclass
class DayResult:
    campaign: int
    day: int
    mode: str
    budget: float
    c_ma: float
    trajectory: Trajectory
    logs: list[HourLog]
    a_pid: np.ndarray
    a_dt: np.ndarray = field(default=None)
    mape: np.ndarray = field(default=None)
    won_ids: np.ndarray = field(default=None)  # won impression ids in purchase order

    @property
    def c_mi(self) -> np.ndarray:
        return self.trajectory.actions

    @property
    def cost(self) -> float:
        return float(sum(h.cost for h in self.logs))

    @property
    def gmv(self) -> float:
        return float(sum(h.gmv for h in self.logs))

    @property
    def conversions(self) -> float:
        return float(sum(h.conversions for h in self.logs))

    def outcome(self) -> DayOutcome:
        return DayOutcome(self.cost, self.budget, self.conversions, self.c_ma)


def run_controlled_day(
    imps: Impressions,
    budget: float,
    c_ma: float,
    gmv_ref: float,
    choose: Chooser,
    *,
    model: DecisionTransformer | None = None,
    track_uncertainty: bool = False,
    strategy: str = "tCPA",
    volume_curve=None,
    kp: float = KP,
    ki: float = KI,
    campaign: int = 0,
    day: int = 0,
    mode: str = "custom",
) -> DayResult:
    """Roll 24 hours, asking ``choose`` for the coefficient each hour.

    With a ``model`` the learned action is computed every hour and passed to
    ``choose``; ``track_uncertainty`` also scores it against the hindsight
    reference after each hour.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if c_ma <= 0:
        raise ValueError("base target must be positive")
    pace = ideal_pace(volume_curve)
    gains = PidGains.for_budget(budget, volume_curve, kp, ki)
    state = CampaignState(budget=budget, target=c_ma, strategy=strategy, pace=pace)
    hours = split_hours(imps)
    R = model.target_return if model is not None else 0.0
    returns, states, actions, rewards, pids, costs, dts, mapes = [], [], [], [], [], [], [], []
    fusion = FusionState()
    prev = 1.0
    for t in range(HOURS):
        s = state_features(
            t, budget, state.cost, state.gmv, gmv_ref, realized_cpa(state), c_ma, strategy, prev,
            pace[t - 1] if t else 0.0,
        )
        returns.append(R)
        states.append(s)
        a_pid = pid_action(gains, state.cost_history(), t)
        a_dt = dt_predict(model, returns, np.array(states), actions) if model is not None else None
        mape = fusion.mape
        c_mi = float(clamp_action(choose(t, a_pid, a_dt, mape)))
        duals, spent = state.duals, state.cost
        roll_hour(state, hours[t], c_ma * c_mi)
        r = step_reward(state.gmv, state.cost, gmv_ref, budget)
        if model is not None and track_uncertainty:
            ref = hindsight_reference(hours[t], duals, c_ma, spent, budget, gains.budget_curve[t])
            fusion = update_uncertainty(fusion, a_dt, ref)
        actions.append(c_mi)
        rewards.append(r)
        pids.append(a_pid)
        costs.append(state.cost)
        dts.append(np.nan if a_dt is None else a_dt)
        mapes.append(mape)
        R = quantize_reward(R - r)
        prev = c_mi
    traj = Trajectory(campaign, day, budget, gmv_ref, c_ma, np.array(states), actions, rewards, pids, costs)
    return DayResult(
        campaign, day, mode, budget, c_ma, traj, state.logs, np.array(pids), np.array(dts), np.array(mapes),
        np.concatenate(state.won_ids) if state.won_ids else np.zeros(0, dtype=np.int64),
    )


def control_day(
    imps: Impressions,
    budget: float,
    c_ma: float,
    mode: str,
    gmv_ref: float,
    model: DecisionTransformer | None = None,
    *,
    pinned_mape: float | None = None,
    **kw,
) -> DayResult:
    """Run a day under the pacing rule, the learned policy, or their fusion.

    ``pinned_mape`` fixes the fusion weight instead of tracking it.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "PID" and model is None:
        raise ValueError(f"mode {mode} needs a trained sequence policy")

    def choose(t, a_pid, a_dt, mape):
        if mode == "PID":
            return a_pid
        if mode == "DT":
            return a_dt
        return fuse(a_dt, a_pid, mape if pinned_mape is None else pinned_mape)

    return run_controlled_day(
        imps, budget, c_ma, gmv_ref, choose,
        model=model if mode != "PID" else None,
        track_uncertainty=(mode == "FUSED" and pinned_mape is None),
        mode=mode, **kw,
    )


def behavior_day(
    imps: Impressions, budget: float, c_ma: float, gmv_ref: float, rng: np.random.Generator | None,
    noise: float = 0.0, constant: float | None = None, **kw,
) -> DayResult:
    """Logged-policy day for offline data: pacing rule plus uniform noise, or a constant action."""
    if constant is not None:
        choose = lambda t, a_pid, a_dt, mape: constant  # noqa: E731
    else:
        def choose(t, a_pid, a_dt, mape):
            return a_pid + (rng.uniform(-noise, noise) if noise else 0.0)
    return run_controlled_day(imps, budget, c_ma, gmv_ref, choose, mode="behavior", **kw)
