"""Versioned JSON checkpoints.

Floats are written with ``repr`` precision by :mod:`json`, so a save/load
round trip is bit-exact in float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

FORMAT = "windcast-checkpoint"
VERSION = 1


def save(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "meta": meta or {},
        "params": {k: {"shape": list(np.shape(v)), "values": np.asarray(v, dtype=np.float64).ravel().tolist()}
                   for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    return params, doc.get("meta", {})
