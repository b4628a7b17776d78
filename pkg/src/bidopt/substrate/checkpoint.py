"""JSON checkpoints: ``{"tensors": {name: {"shape": [...], "values": [...]}}, "meta": {...}}``.

Floats are written with Python's shortest round-trip repr, so reloading
reproduces every value bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .tensor import Tensor

FORMAT = "bidopt-checkpoint/1"


def to_document(params: Mapping[str, Tensor | np.ndarray], meta: Mapping[str, Any] | None = None) -> dict:
    tensors = {}
    for name in sorted(params):
        value = params[name]
        arr = value.value if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        tensors[name] = {"shape": list(arr.shape), "values": [float(v) for v in arr.reshape(-1)]}
    return {"format": FORMAT, "tensors": tensors, "meta": dict(meta or {})}


def from_document(doc: Mapping[str, Any]) -> tuple[dict[str, np.ndarray], dict]:
    if doc.get("format") != FORMAT:
        raise ValueError(f"unrecognised checkpoint format {doc.get('format')!r}")
    out = {}
    for name, entry in doc["tensors"].items():
        shape = tuple(entry["shape"])
        values = np.asarray(entry["values"], dtype=np.float64)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"tensor {name!r}: {values.size} values for shape {list(shape)}")
        out[name] = values.reshape(shape)
    return out, dict(doc.get("meta", {}))


def dumps(params, meta=None) -> str:
    return json.dumps(to_document(params, meta), indent=1, sort_keys=True) + "\n"


def save(path: str | Path, params, meta=None) -> None:
    Path(path).write_text(dumps(params, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return from_document(json.loads(Path(path).read_text()))


def as_params(arrays: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in arrays.items()}
