"""Hourly decision process: rewards, state features and trajectories."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..auction import HOURS, STRATEGIES
from .pid import ACTION_HIGH, ACTION_LOW

log = logging.getLogger(__name__)

GMV_REF_FLOOR = 1.0
FEATURE_CAP = 5.0
# rewards live on a 2**-32 grid so return-to-go sums and differences are exact in float64
REWARD_QUANTUM = 2.0 ** -32
STATE_FEATURES = (
    "hour", "remaining_budget", "cost_ratio", "gmv_ratio", "cpa_ratio", "pace_gap",
    "is_tCPA", "is_tROI", "is_tCPC", "prev_action",
)
STATE_DIM = len(STATE_FEATURES)


def quantize_reward(r: float) -> float:
    return float(np.round(r / REWARD_QUANTUM) * REWARD_QUANTUM)


def safe_gmv_ref(gmv_ref: float) -> float:
    if gmv_ref <= 0:
        log.warning("GMV reference %g is not positive, using %g", gmv_ref, GMV_REF_FLOOR)
        return GMV_REF_FLOOR
    return gmv_ref


def step_reward(gmv: float, cost: float, gmv_ref: float, budget: float) -> float:
    """Cumulative GMV over its reference, minus the overspend fraction past the budget."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    gmv_ref = safe_gmv_ref(gmv_ref)
    return quantize_reward(gmv / gmv_ref + min(0.0, 1.0 - cost / budget))


def state_features(
    hour: int, budget: float, cost: float, gmv: float, gmv_ref: float,
    cpa: float | None, c_ma: float, strategy: str, prev_action: float, pace: float,
) -> np.ndarray:
    """Feature vector seen before acting in ``hour``; ratios are clamped to [0, 5]."""
    if not 0 <= hour < HOURS:
        raise ValueError(f"hour {hour} outside 0..23")
    cap = FEATURE_CAP
    cost_ratio = cost / budget if budget > 0 else 0.0
    onehot = [1.0 if strategy == s else 0.0 for s in STRATEGIES]
    f = np.array([
        hour / (HOURS - 1),
        np.clip(1.0 - cost_ratio, 0.0, cap),
        np.clip(cost_ratio, 0.0, cap),
        np.clip(gmv / safe_gmv_ref(gmv_ref), 0.0, cap),
        0.0 if cpa is None or c_ma <= 0 else np.clip(cpa / c_ma, 0.0, cap),
        np.clip(cost_ratio - pace, -cap, cap),
        *onehot,
        (prev_action - 1.0) / (ACTION_HIGH - 1.0),
    ])
    return f


@dataclass
class Trajectory:
    """One campaign-day of hourly steps.

    ``states[t]`` is observed before acting in hour t, ``actions[t]`` is the
    coefficient applied, ``rewards[t]`` is earned after the hour and
    ``pid_actions[t]`` is what the pacing rule would have chosen.
    """

    campaign: int
    day: int
    budget: float
    gmv_ref: float
    c_ma: float
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    pid_actions: np.ndarray
    costs: np.ndarray = field(default=None)  # cumulative spend at the end of each hour

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64).reshape(-1, STATE_DIM)
        for name in ("actions", "rewards", "pid_actions"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.costs is None:
            self.costs = np.zeros(len(self.actions))
        self.costs = np.asarray(self.costs, dtype=np.float64)
        n = len(self.states)
        if not (len(self.actions) == len(self.rewards) == len(self.pid_actions) == len(self.costs) == n):
            raise ValueError("trajectory columns have different lengths")
        if n > HOURS:
            raise ValueError("trajectory longer than 24 steps")
        if np.any(self.actions < ACTION_LOW - 1e-12) or np.any(self.actions > ACTION_HIGH + 1e-12):
            raise ValueError("actions must lie in [0.8, 1.2]")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def returns_to_go(self) -> np.ndarray:
        # reverse running sum; exact because rewards sit on a coarse binary grid
        out = np.zeros(len(self.rewards))
        acc = 0.0
        for t in range(len(self.rewards) - 1, -1, -1):
            acc += self.rewards[t]
            out[t] = acc
        return out

    @property
    def total_return(self) -> float:
        return float(self.returns_to_go[0]) if len(self) else 0.0

    def check(self) -> None:
        """Raise if the recorded returns-to-go do not difference to the rewards."""
        R = self.returns_to_go
        nxt = np.append(R[1:], 0.0)
        if not np.array_equal(R - nxt, self.rewards):
            raise ValueError(f"campaign {self.campaign} day {self.day}: return-to-go identity broken")

    def step_records(self) -> list[dict]:
        R = self.returns_to_go
        return [
            {
                "campaign": self.campaign, "day": self.day, "t": t, "budget": self.budget,
                "gmv_ref": self.gmv_ref, "c_ma": self.c_ma, "rtg": float(R[t]),
                "state": [float(x) for x in self.states[t]], "action": float(self.actions[t]),
                "reward": float(self.rewards[t]), "pid_action": float(self.pid_actions[t]),
                "cost": float(self.costs[t]),
            }
            for t in range(len(self))
        ]


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    """One JSON object per step; ``episode`` numbers the trajectories in order.

    Several episodes may share a campaign-day (noisy copies of a logged day).
    """
    with open(path, "w") as fh:
        for episode, traj in enumerate(trajectories):
            for rec in traj.step_records():
                fh.write(json.dumps({"episode": episode, **rec}, sort_keys=True) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    groups: dict[int, list[dict]] = defaultdict(list)
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                groups[int(rec["episode"])].append(rec)
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{n}: malformed step record ({exc})") from exc
    out = []
    for episode, recs in sorted(groups.items()):
        recs.sort(key=lambda r: r["t"])
        campaign, day = int(recs[0]["campaign"]), int(recs[0]["day"])
        if [r["t"] for r in recs] != list(range(len(recs))):
            raise ValueError(f"episode {episode}: steps are not contiguous from 0")
        first = recs[0]
        traj = Trajectory(
            campaign, day, first["budget"], first["gmv_ref"], first["c_ma"],
            np.array([r["state"] for r in recs]), [r["action"] for r in recs],
            [r["reward"] for r in recs], [r["pid_action"] for r in recs], [r["cost"] for r in recs],
        )
        stored = np.array([r["rtg"] for r in recs])
        if not np.array_equal(stored, traj.returns_to_go):
            raise ValueError(f"episode {episode}: stored returns-to-go disagree with rewards")
        traj.check()
        out.append(traj)
    return out


def stack_trajectories(trajs: Sequence[Trajectory]) -> dict[str, np.ndarray]:
    """Pad to 24 steps; ``mask`` marks real steps."""
    n = len(trajs)
    out = {
        "returns": np.zeros((n, HOURS)),
        "states": np.zeros((n, HOURS, STATE_DIM)),
        "actions": np.ones((n, HOURS)),
        "pid_actions": np.ones((n, HOURS)),
        "mask": np.zeros((n, HOURS), dtype=bool),
    }
    for i, tr in enumerate(trajs):
        k = len(tr)
        out["returns"][i, :k] = tr.returns_to_go
        out["states"][i, :k] = tr.states
        out["actions"][i, :k] = tr.actions
        out["pid_actions"][i, :k] = tr.pid_actions
        out["mask"][i, :k] = True
    return out
