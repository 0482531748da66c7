"""Versioned JSON checkpoint container for trained models.

Layout (format "ulcast-checkpoint", version 1):

    {
      "format": "ulcast-checkpoint",
      "version": 1,
      "spec": {model spec fields, enums as strings},
      "normalizer": {"feature_mean": [...], "feature_std": [...],
                      "feature_names": [...], "target_mean": x, "target_std": y},
      "params": {"name": {"shape": [...], "data": [row-major floats]}},
      "history": [per-epoch mean training loss],
      "train_config": {echo of the resolved training configuration}
    }

Floats are serialized with ``repr`` (shortest round-trip), so save/load is
exact and repeated saves of the same model are byte-identical.
"""

import json
from pathlib import Path

import numpy as np

from .models import ModelSpec, TrainedModel, build
from .tracedata import Normalizer

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError", "FORMAT_NAME", "FORMAT_VERSION"]

FORMAT_NAME = "ulcast-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(trained: TrainedModel, path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": trained.spec.to_dict(),
        "normalizer": {
            "feature_mean": trained.normalizer.feature_mean.tolist(),
            "feature_std": trained.normalizer.feature_std.tolist(),
            "feature_names": list(trained.normalizer.feature_names),
            "target_mean": trained.normalizer.target_mean,
            "target_std": trained.normalizer.target_std,
        },
        "params": {
            name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in trained.model.params.items()
        },
        "history": list(trained.history),
        "train_config": trained.train_config,
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {doc.get('version')}")

    spec = ModelSpec.from_dict(doc["spec"])
    model = build(spec)
    stored = doc["params"]
    if set(stored) != set(model.params):
        raise CheckpointError(f"{path}: parameter names do not match spec {spec.kind.value}")
    for name, p in model.params.items():
        entry = stored[name]
        shape = tuple(entry["shape"])
        if shape != p.data.shape:
            raise CheckpointError(
                f"{path}: param '{name}' has shape {shape}, expected {p.data.shape}")
        p.data[...] = np.array(entry["data"], dtype=np.float64).reshape(shape)

    nz = doc["normalizer"]
    normalizer = Normalizer(
        feature_mean=np.array(nz["feature_mean"], dtype=np.float64),
        feature_std=np.array(nz["feature_std"], dtype=np.float64),
        target_mean=float(nz["target_mean"]),
        target_std=float(nz["target_std"]),
        feature_names=tuple(nz.get("feature_names", ())),
    )
    trained = TrainedModel(model=model, normalizer=normalizer,
                           history=list(doc.get("history", [])),
                           train_config=dict(doc.get("train_config", {})))
    trained.freeze()
    return trained
