"""Parameter containers, initialisation and the attention block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

Params = dict[str, Tensor]


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def param(rng: np.random.Generator, name: str, shape, fan_in: int | None = None) -> Tensor:
    shape = tuple(shape)
    fan_in = fan_in if fan_in is not None else shape[0]
    return Tensor(uniform_init(rng, fan_in, shape), requires_grad=True, name=name)


def dense_params(rng: np.random.Generator, prefix: str, n_in: int, n_out: int) -> Params:
    return {
        f"{prefix}.W": param(rng, f"{prefix}.W", (n_in, n_out), fan_in=n_in),
        f"{prefix}.b": param(rng, f"{prefix}.b", (n_out,), fan_in=n_in),
    }


def dense(params: Params, prefix: str, x) -> Tensor:
    return T.linear(x, params[f"{prefix}.W"], params[f"{prefix}.b"])


@dataclass(frozen=True)
class AttentionConfig:
    dim: int
    heads: int
    context: int
    causal: bool = True

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")


def attention_params(rng: np.random.Generator, prefix: str, dim: int) -> Params:
    out = {}
    for k in ("q", "k", "v", "o"):
        name = f"{prefix}.W{k}"
        out[name] = param(rng, name, (dim, dim), fan_in=dim)
    return out


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))


def causal_self_attention(
    x, params: Params, prefix: str, cfg: AttentionConfig, key_mask: np.ndarray | None = None
) -> Tensor:
    """Multi-head scaled dot-product self-attention over x of shape [..., T, D].

    With ``cfg.causal`` position t attends only to positions <= t.
    ``key_mask`` ([..., T] bool) hides padding positions from every query.
    The result passes through the output projection ``Wo``.
    """
    x = T.as_tensor(x)
    *batch, length, dim = x.shape
    if dim != cfg.dim:
        raise ValueError(f"attention expects width {cfg.dim}, got {dim}")
    if length > cfg.context:
        raise ValueError(f"sequence length {length} exceeds context {cfg.context}")
    h = cfg.heads
    hd = dim // h

    def split(t: Tensor) -> Tensor:
        # [..., T, D] -> [..., H, T, hd]
        t = T.reshape(t, (*batch, length, h, hd))
        nb = len(batch)
        return T.transpose(t, (*range(nb), nb + 1, nb, nb + 2))

    q = split(T.matmul(x, params[f"{prefix}.Wq"]))
    k = split(T.matmul(x, params[f"{prefix}.Wk"]))
    v = split(T.matmul(x, params[f"{prefix}.Wv"]))
    scores = T.mul(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(hd))
    mask = causal_mask(length) if cfg.causal else None
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)[..., None, None, :]
        mask = km if mask is None else (mask & km)
    weights = T.softmax(scores, mask=mask)
    ctx = T.matmul(weights, v)
    nb = len(batch)
    ctx = T.transpose(ctx, (*range(nb), nb + 1, nb, nb + 2))
    ctx = T.reshape(ctx, (*batch, length, dim))
    return T.matmul(ctx, params[f"{prefix}.Wo"])


def n_parameters(params: Params) -> int:
    return int(sum(p.value.size for p in params.values()))
