"""Self-describing JSON serialization for fitted models."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .gbt import Tree, TreeEnsemble
from .mlp import MlpModel

FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    if isinstance(model, TreeEnsemble):
        return {
            "kind": "gbt",
            "version": FORMAT_VERSION,
            "params": model.params,
            "feature_names": list(model.feature_names),
            "base_score": model.base_score,
            "learning_rate": model.learning_rate,
            "trees": [t.to_nested() for t in model.trees],
        }
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "version": FORMAT_VERSION,
            "params": model.params,
            "feature_names": list(model.feature_names),
            "activation": model.activation,
            "standardize": {"mean": model.mean.tolist(), "scale": model.scale.tolist()},
            "W1": model.W1.tolist(),  # row-major, (n_features, hidden)
            "b1": model.b1.tolist(),
            "W2": model.W2.tolist(),
            "b2": model.b2,
            "history": model.history,
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    if d["kind"] == "gbt":
        return TreeEnsemble(
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            trees=[Tree.from_nested(t) for t in d["trees"]],
            feature_names=list(d["feature_names"]),
            params=dict(d.get("params", {})),
        )
    if d["kind"] == "mlp":
        return MlpModel(
            W1=np.asarray(d["W1"], dtype=float).reshape(len(d["feature_names"]), -1),
            b1=np.asarray(d["b1"], dtype=float),
            W2=np.asarray(d["W2"], dtype=float),
            b2=float(d["b2"]),
            mean=np.asarray(d["standardize"]["mean"], dtype=float),
            scale=np.asarray(d["standardize"]["scale"], dtype=float),
            feature_names=list(d["feature_names"]),
            activation=d.get("activation", "relu"),
            params=dict(d.get("params", {})),
            history=list(d.get("history", [])),
        )
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
