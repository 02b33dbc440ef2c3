"""Classifiers: gradient boosted trees and a one-hidden-layer perceptron."""
from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Input arrays are malformed (shape, non-finite values)."""


class TrainingError(ValueError):
    """The training data cannot support a fit (e.g. a single class)."""


class StateError(RuntimeError):
    """A model was used before it was trained."""


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or len(y) != len(X):
        raise ValidationError(f"y must be 1-D with {len(X)} entries, got shape {y.shape}")
    if len(X) < 2:
        raise ValidationError("need at least 2 rows")
    if not np.isfinite(X).all():
        raise ValidationError("X contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    y = y.astype(float)
    if y.min() == y.max():
        raise TrainingError("both classes must be present")
    return X, y


from .gbt import Tree, TreeEnsemble, gbt_predict_proba, gbt_train  # noqa: E402
from .mlp import MlpModel, mlp_train  # noqa: E402
from .io import load_model, save_model  # noqa: E402

__all__ = [
    "MlpModel",
    "StateError",
    "TrainingError",
    "Tree",
    "TreeEnsemble",
    "ValidationError",
    "gbt_predict_proba",
    "gbt_train",
    "load_model",
    "mlp_train",
    "save_model",
    "sigmoid",
]
