"""Hourly stage: pacing rule, return-conditioned sequence policy and their fusion."""

from .control import MODES, DayResult, behavior_day, control_day, run_controlled_day
from .dt import DecisionTransformer, MicroConfig, divergence_from_pid, dt_predict, mdl_loss, train_micro
from .fusion import FusionState, fuse, hindsight_reference, update_uncertainty
from .mdp import Trajectory, read_trajectories, state_features, step_reward, write_trajectories
from .pid import PidGains, pid_action

__all__ = [
    "MODES", "DayResult", "DecisionTransformer", "FusionState", "MicroConfig", "PidGains", "Trajectory",
    "behavior_day", "control_day", "divergence_from_pid", "dt_predict", "fuse", "hindsight_reference",
    "mdl_loss", "pid_action", "read_trajectories", "run_controlled_day", "state_features", "step_reward",
    "train_micro", "update_uncertainty", "write_trajectories",
]
