"""Price-volume model: attention encoder over campaign history + monotone piecewise-linear head.

The encoder turns a campaign's recent day records into an embedding; a
dense layer followed by softplus maps it to an intercept ``w0`` and positive
marginal weights ``W``.  The predicted tCPA at a cost is ``w0 + P(cost) . W``
where ``P`` is the isotonic embedding of the cost over the partition, so the
prediction is non-decreasing in cost by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..auction import STRATEGIES
from ..substrate import nn
from ..substrate import tensor as T
from ..substrate.nn import AttentionConfig, Params
from ..substrate.tensor import Tensor
from .data import MAX_HISTORY, TrainingSample
from .partition import PartitionSpec, isotonic_embed

TOKEN_FEATURES = 2 + len(STRATEGIES)
DENOM_GUARD = 1e-12
ALPHA_SMOOTH = 0.5
ALPHA_MARGIN = 0.1


@dataclass(frozen=True)
class MacroConfig:
    segments: int = 10
    dim: int = 16
    heads: int = 2
    hidden: int = 32
    history: int = MAX_HISTORY
    epochs: int = 60
    batch_size: int = 32
    lr: float = 0.003
    clip: float = 5.0
    alpha_smooth: float = ALPHA_SMOOTH
    alpha_margin: float = ALPHA_MARGIN
    # squared errors are measured in median-tCPA units and multiplied by this
    mse_scale: float = 100.0
    # softplus slope of the isotonic head; larger values let the weights move faster
    head_gain: float = 4.0
    use_ie: bool = True
    use_gla: bool = True
    use_augmented: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# regularisers on the marginal weights

def loss_smooth(W) -> Tensor:
    """Sum over adjacent pairs of (w_j - w_{j+1})^2 / (w_j w_{j+1}); last axis holds W."""
    W = T.as_tensor(W)
    a, b = W[..., :-1], W[..., 1:]
    return T.sum(T.div(T.square(a - b), a * b + DENOM_GUARD), axis=-1)


def loss_margin(W, steps) -> Tensor:
    """Sum over adjacent pairs of ReLU(w_{j+1}/step_{j+1} - w_j/step_j)."""
    W = T.as_tensor(W)
    steps = np.asarray(steps, dtype=np.float64)
    if np.any(steps <= 0):
        raise ValueError("segment widths must be positive")
    slopes = W * (1.0 / steps)
    return T.sum(T.relu(slopes[..., 1:] - slopes[..., :-1]), axis=-1)


@dataclass
class Scales:
    cost: float
    tcpa: float


class PriceVolumeModel:
    """Parameters, partition and normalisation constants of one trained model."""

    def __init__(self, params: Params, partition: PartitionSpec, scales: Scales, config: MacroConfig):
        self.params = params
        self.partition = partition
        self.scales = scales
        self.config = config
        self.attn = AttentionConfig(config.dim, config.heads, config.history + 1, causal=False)

    @classmethod
    def init(cls, partition: PartitionSpec, scales: Scales, config: MacroConfig, rng: np.random.Generator):
        d = config.dim
        params: Params = {}
        params.update(nn.dense_params(rng, "embed", TOKEN_FEATURES, d))
        params["default_token"] = nn.param(rng, "default_token", (d,), fan_in=d)
        params.update(nn.attention_params(rng, "attn", d))
        params.update(nn.dense_params(rng, "ff1", d, config.hidden))
        params.update(nn.dense_params(rng, "ff2", config.hidden, d))
        if config.use_ie:
            params.update(nn.dense_params(rng, "head1", d, config.hidden))
            params.update(nn.dense_params(rng, "head", config.hidden, partition.n + 1))
            # start near a flat curve of unit height: w0 = 0.5, the rest shared across segments
            start = np.full(partition.n + 1, 0.5 / partition.n)
            start[0] = 0.5
            params["head.b"].value[:] = np.log(np.expm1(start)) / config.head_gain
        else:
            params.update(nn.dense_params(rng, "cost1", d + 1, config.hidden))
            params.update(nn.dense_params(rng, "cost2", config.hidden, 1))
        return cls(params, partition, scales, config)

    @property
    def param_list(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def normalized_steps(self) -> np.ndarray:
        steps = self.partition.steps
        return steps / steps.mean()

    # encoding

    def _tokens(self, histories: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        length = max((len(h) for h in histories), default=0)
        feats = np.zeros((len(histories), length, TOKEN_FEATURES))
        mask = np.zeros((len(histories), length + 1), dtype=bool)
        mask[:, 0] = True
        for i, h in enumerate(histories):
            h = np.asarray(h, dtype=np.float64).reshape(-1, 3)[-self.config.history:] if len(h) else np.zeros((0, 3))
            n = len(h)
            if n == 0:
                continue
            feats[i, :n, 0] = np.log(np.maximum(h[:, 0], 1e-9) / self.scales.cost)
            feats[i, :n, 1] = np.log(h[:, 1] / self.scales.tcpa)
            feats[i, np.arange(n), 2 + h[:, 2].astype(int)] = 1.0
            mask[i, 1:n + 1] = True
        return feats, mask

    def embed(self, histories: Sequence[np.ndarray]) -> Tensor:
        """Pooled history embedding, one row per history; empty histories see only the default token."""
        p = self.params
        feats, mask = self._tokens(histories)
        b = len(histories)
        default = T.mul(np.ones((b, 1, 1)), p["default_token"])
        if feats.shape[1]:
            x = T.concat([default, nn.dense(p, "embed", feats)], axis=1)
        else:
            x = default
        x = x + nn.causal_self_attention(x, p, "attn", self.attn, key_mask=mask)
        x = x + nn.dense(p, "ff2", T.relu(nn.dense(p, "ff1", x)))
        m = mask[..., None].astype(np.float64)
        return T.mul(T.sum(x * m, axis=1), 1.0 / m.sum(axis=1))

    def weights(self, histories: Sequence[np.ndarray]) -> Tensor:
        """Softplus head output ``[w0, w_1..w_N]`` per history (normalised tCPA units)."""
        if not self.config.use_ie:
            raise ValueError("model was trained without the isotonic head")
        h = T.relu(nn.dense(self.params, "head1", self.embed(histories)))
        return T.softplus(T.mul(nn.dense(self.params, "head", h), self.config.head_gain))

    def forward(self, histories: Sequence[np.ndarray], costs) -> tuple[Tensor, Tensor | None]:
        """Normalised tCPA predictions and (for the isotonic head) the weight rows."""
        costs = np.asarray(costs, dtype=np.float64)
        if self.config.use_ie:
            W = self.weights(histories)
            P = isotonic_embed(costs, self.partition)
            pred = W[:, 0] + T.sum(W[:, 1:] * P, axis=-1)
            return pred, W
        emb = self.embed(histories)
        # raw cost on the same normalised currency scale the isotonic head sees
        c = (costs / self.scales.cost)[:, None]
        h = T.relu(nn.dense(self.params, "cost1", T.concat([emb, c], axis=-1)))
        return T.reshape(T.softplus(nn.dense(self.params, "cost2", h)), (-1,)), None

    def predict(self, histories: Sequence[np.ndarray], costs) -> np.ndarray:
        pred, _ = self.forward(histories, costs)
        return pred.value * self.scales.tcpa

    def predict_one(self, history: np.ndarray, cost: float) -> float:
        return float(self.predict([history], [cost])[0])

    def marginal_weights(self, history: np.ndarray) -> tuple[float, np.ndarray]:
        """Intercept and marginal tCPA weights in currency units."""
        w = self.weights([history]).value[0] * self.scales.tcpa
        return float(w[0]), w[1:]

    # persistence

    def to_meta(self) -> dict:
        return {
            "kind": "price-volume",
            "config": self.config.to_dict(),
            "partition": list(self.partition.boundaries),
            "scales": {"cost": self.scales.cost, "tcpa": self.scales.tcpa},
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], meta: dict) -> "PriceVolumeModel":
        if meta.get("kind") != "price-volume":
            raise ValueError("checkpoint is not a price-volume model")
        params = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in arrays.items()}
        return cls(
            params, PartitionSpec(tuple(meta["partition"])), Scales(**meta["scales"]),
            MacroConfig(**meta["config"]),
        )


def predict_tcpa(history: np.ndarray, cost: float, model: PriceVolumeModel) -> float:
    return model.predict_one(history, cost)


def base_target(history: np.ndarray, budget: float, model: PriceVolumeModel) -> float:
    """Day-level base tCPA: the predicted tCPA at which the whole budget is spent."""
    return model.predict_one(history, budget)


def loss_total(model: PriceVolumeModel, batch: Sequence[TrainingSample]) -> Tensor:
    """Weighted MSE (normalised units) plus the smoothness and diminishing-returns penalties."""
    if not batch:
        raise ValueError("empty batch")
    cfg = model.config
    pred, W = model.forward([s.history for s in batch], [s.cost for s in batch])
    target = np.array([s.tcpa for s in batch]) / model.scales.tcpa
    weights = np.array([s.weight for s in batch])
    loss = cfg.mse_scale * T.weighted_mse(pred, target, weights)
    if W is not None:
        marginal = W[:, 1:]
        if cfg.alpha_smooth:
            loss = loss + cfg.alpha_smooth * T.mean(loss_smooth(marginal))
        if cfg.alpha_margin:
            loss = loss + cfg.alpha_margin * T.mean(loss_margin(marginal, model.normalized_steps()))
    return loss
