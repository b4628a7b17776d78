"""Return-conditioned sequence policy for hourly bid coefficients.

Each hour contributes three tokens (return-to-go, state, action).  A small
causal transformer reads the interleaved sequence and predicts the action of
hour t from the state token of hour t, so it never sees the action it is
predicting or anything later.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..auction import HOURS
from ..substrate import checkpoint, nn
from ..substrate import tensor as T
from ..substrate.nn import AttentionConfig, Params
from ..substrate.optim import NonFiniteGradient, sgd_step
from ..substrate.tensor import Tape, Tensor
from .mdp import STATE_DIM, Trajectory, stack_trajectories
from .pid import ACTION_HIGH

log = logging.getLogger(__name__)

ACTION_SPAN = ACTION_HIGH - 1.0
BETA = 0.1
TARGET_RETURN_QUANTILE = 90


@dataclass(frozen=True)
class MicroConfig:
    embed: int = 32
    layers: int = 2
    heads: int = 2
    hidden: int = 64
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.2
    clip: float = 5.0
    beta: float = BETA
    rtg_scale: float = 10.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class DecisionTransformer:
    def __init__(self, params: Params, config: MicroConfig, target_return: float = 0.0):
        self.params = params
        self.config = config
        self.target_return = float(target_return)
        self.attn = AttentionConfig(config.embed, config.heads, 3 * HOURS, causal=True)

    @classmethod
    def init(cls, config: MicroConfig, rng: np.random.Generator) -> "DecisionTransformer":
        d = config.embed
        p: Params = {}
        p.update(nn.dense_params(rng, "emb_return", 1, d))
        p.update(nn.dense_params(rng, "emb_state", STATE_DIM, d))
        p.update(nn.dense_params(rng, "emb_action", 1, d))
        p["emb_time"] = nn.param(rng, "emb_time", (HOURS, d), fan_in=d)
        for layer in range(config.layers):
            p.update(nn.attention_params(rng, f"blk{layer}.attn", d))
            p.update(nn.dense_params(rng, f"blk{layer}.ff1", d, config.hidden))
            p.update(nn.dense_params(rng, f"blk{layer}.ff2", config.hidden, d))
        p.update(nn.dense_params(rng, "action_head", d, 1))
        return cls(p, config)

    @property
    def param_list(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def forward(self, returns, states, actions) -> Tensor:
        """Predicted actions [B, T] for inputs [B, T], [B, T, S], [B, T]."""
        returns = np.asarray(returns, dtype=np.float64)
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        if returns.ndim != 2 or states.shape != (*returns.shape, STATE_DIM) or actions.shape != returns.shape:
            raise ValueError(
                f"expected returns [B,T], states [B,T,{STATE_DIM}], actions [B,T]; "
                f"got {returns.shape}, {states.shape}, {actions.shape}"
            )
        b, t = returns.shape
        if not 1 <= t <= HOURS:
            raise ValueError(f"sequence length {t} outside 1..{HOURS}")
        if not (np.all(np.isfinite(returns)) and np.all(np.isfinite(states)) and np.all(np.isfinite(actions))):
            raise ValueError("non-finite input to the sequence policy")
        p = self.params
        d = self.config.embed
        time = p["emb_time"][:t]
        r_tok = nn.dense(p, "emb_return", (returns / self.config.rtg_scale)[..., None]) + time
        s_tok = nn.dense(p, "emb_state", states) + time
        a_tok = nn.dense(p, "emb_action", ((actions - 1.0) / ACTION_SPAN)[..., None]) + time
        x = T.reshape(T.stack([r_tok, s_tok, a_tok], axis=2), (b, 3 * t, d))
        for layer in range(self.config.layers):
            x = x + nn.causal_self_attention(x, p, f"blk{layer}.attn", self.attn)
            x = x + nn.dense(p, f"blk{layer}.ff2", T.relu(nn.dense(p, f"blk{layer}.ff1", x)))
        h = T.reshape(x, (b, t, 3, d))[:, :, 1, :]
        logit = T.reshape(nn.dense(p, "action_head", h), (b, t))
        return 1.0 + T.mul(T.tanh(logit), ACTION_SPAN)

    def predict(self, returns, states, actions) -> np.ndarray:
        return self.forward(returns, states, actions).value

    def to_meta(self) -> dict:
        return {"kind": "sequence-policy", "config": self.config.to_dict(), "target_return": self.target_return}

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], meta: dict) -> "DecisionTransformer":
        if meta.get("kind") != "sequence-policy":
            raise ValueError("checkpoint is not a sequence policy")
        params = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(params, MicroConfig(**meta["config"]), meta["target_return"])


def dt_predict(model: DecisionTransformer, returns, states, actions) -> float:
    """Action for the last step of a prefix.

    ``returns`` and ``states`` cover steps 0..t; ``actions`` covers 0..t-1
    (the action being chosen is unknown).
    """
    returns = np.asarray(returns, dtype=np.float64).reshape(-1)
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64).reshape(-1)
    t = len(returns)
    if states.shape != (t, STATE_DIM):
        raise ValueError(f"expected {t} states of width {STATE_DIM}, got {states.shape}")
    if len(actions) != t - 1:
        raise ValueError(f"expected {t - 1} past actions, got {len(actions)}")
    full = np.append(actions, 1.0)
    return float(model.predict(returns[None], states[None], full[None])[0, -1])


# training


def masked_mse(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    m = mask.astype(np.float64)
    return T.sum(T.square(pred - target) * m) * (1.0 / m.sum())


def mdl_loss(pred: Tensor, a_gt: np.ndarray, a_pid: np.ndarray, mask: np.ndarray, beta: float = BETA):
    """Imitation error plus ``beta`` times the divergence from the pacing rule; returns (total, parts)."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    imitation = masked_mse(pred, a_gt, mask)
    anchor = masked_mse(pred, a_pid, mask)
    total = imitation + beta * anchor if beta else imitation
    return total, (imitation, anchor)


class MicroTrainingDiverged(RuntimeError):
    def __init__(self, message: str, last_good: dict[str, np.ndarray]):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class MicroReport:
    imitation: list[float] = field(default_factory=list)
    anchor: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    target_return: float = 0.0
    n_trajectories: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def target_return(trajs: Sequence[Trajectory]) -> float:
    return float(np.percentile([t.total_return for t in trajs], TARGET_RETURN_QUANTILE))


def train_micro(trajs: Sequence[Trajectory], config: MicroConfig = MicroConfig()) -> tuple[DecisionTransformer, MicroReport]:
    """Minibatch SGD on the imitation loss regularised toward the pacing rule."""
    if not trajs:
        raise ValueError("no trajectories")
    if config.beta < 0:
        raise ValueError("beta must be non-negative")
    for tr in trajs:
        tr.check()
    rng = np.random.default_rng(config.seed)
    model = DecisionTransformer.init(config, rng)
    model.target_return = target_return(trajs)
    data = stack_trajectories(trajs)
    report = MicroReport(target_return=model.target_return, n_trajectories=len(trajs))
    plist = model.param_list
    last_good = {k: v.value.copy() for k, v in model.params.items()}
    n = len(trajs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                with Tape() as tape:
                    pred = model.forward(data["returns"][idx], data["states"][idx], data["actions"][idx])
                    loss, (imit, anchor) = mdl_loss(
                        pred, data["actions"][idx], data["pid_actions"][idx], data["mask"][idx], config.beta,
                    )
                if not np.isfinite(loss.value):
                    raise NonFiniteGradient(f"loss is {float(loss.value)}")
                sgd_step(plist, tape.gradient(loss, plist), config.lr, clip=config.clip)
            except FloatingPointError as exc:
                for k, v in last_good.items():
                    model.params[k].value = v.copy()
                raise MicroTrainingDiverged(f"epoch {epoch}, batch at {start}: {exc}", last_good) from exc
            sums += np.array([float(loss.value), float(imit.value), float(anchor.value)]) * len(idx)
        report.total.append(sums[0] / n)
        report.imitation.append(sums[1] / n)
        report.anchor.append(sums[2] / n)
        last_good = {k: v.value.copy() for k, v in model.params.items()}
    return model, report


def divergence_from_pid(model: DecisionTransformer, trajs: Sequence[Trajectory]) -> float:
    """Mean |a_DT - a_PID| over every step of the given trajectories (teacher forced)."""
    data = stack_trajectories(trajs)
    pred = model.predict(data["returns"], data["states"], data["actions"])
    m = data["mask"]
    return float(np.abs(pred - data["pid_actions"])[m].mean())


def save_policy(path, model: DecisionTransformer, report: MicroReport | None = None) -> None:
    meta = model.to_meta()
    if report is not None:
        meta["report"] = report.to_dict()
    checkpoint.save(path, model.params, meta)


def load_policy(path) -> DecisionTransformer:
    arrays, meta = checkpoint.load(path)
    return DecisionTransformer.from_arrays(arrays, meta)
