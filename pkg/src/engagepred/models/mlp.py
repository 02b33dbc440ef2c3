"""Single-hidden-layer perceptron trained on binary log-loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ValidationError, check_training_data, sigmoid

DEFAULT_PARAMS = {
    "hidden": 150,
    "max_epochs": 10,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "early_stopping": True,
    "patience": 2,
    "validation_fraction": 0.1,
    "seed": 0,
}


@dataclass
class MlpModel:
    W1: np.ndarray      # (d, hidden)
    b1: np.ndarray      # (hidden,)
    W2: np.ndarray      # (hidden,)
    b2: float
    mean: np.ndarray    # standardization, training statistics
    scale: np.ndarray
    feature_names: list[str]
    activation: str = "relu"
    params: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValidationError(f"expected {self.n_features} features, got {X.shape[1]}")
        Z = (X - self.mean) / self.scale
        return forward(self.weights(), Z)[0]

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def weights(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": np.asarray(self.b2, dtype=float)}


def forward(w: dict, Z: np.ndarray):
    pre = Z @ w["W1"] + w["b1"]
    hid = np.maximum(pre, 0.0)
    return hid @ w["W2"] + w["b2"], pre, hid


def loss_and_grads(w: dict, Z: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Mean log-loss of a batch and its exact gradient w.r.t. every weight."""
    logits, pre, hid = forward(w, Z)
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    dz = (sigmoid(logits) - y) / len(y)
    dhid = np.outer(dz, w["W2"]) * (pre > 0)
    grads = {
        "W2": hid.T @ dz,
        "b2": np.asarray(dz.sum()),
        "W1": Z.T @ dhid,
        "b1": dhid.sum(axis=0),
    }
    return loss, grads


def init_weights(d: int, hidden: int, rng: np.random.Generator) -> dict:
    # Glorot-uniform, as most MLP libraries default to
    b_in = np.sqrt(6.0 / (d + hidden))
    b_out = np.sqrt(6.0 / (hidden + 1))
    return {
        "W1": rng.uniform(-b_in, b_in, size=(d, hidden)),
        "b1": rng.uniform(-b_in, b_in, size=hidden),
        "W2": rng.uniform(-b_out, b_out, size=hidden),
        "b2": np.asarray(rng.uniform(-b_out, b_out)),
    }


class _Adam:
    def __init__(self, w: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in w.items()}
        self.v = {k: np.zeros_like(v) for k, v in w.items()}
        self.t = 0

    def step(self, w: dict, g: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k in w:
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g[k]
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g[k] ** 2
            w[k] = w[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _validation_split(y: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of a stratified hold-out; empty when a class is too small."""
    mask = np.zeros(len(y), dtype=bool)
    for cls in (0.0, 1.0):
        members = np.flatnonzero(y == cls)
        take = int(round(fraction * len(members)))
        if take < 1 or take >= len(members):
            return np.zeros(len(y), dtype=bool)
        mask[rng.permutation(members)[:take]] = True
    return mask


def mlp_train(X, y, params: dict | None = None, feature_names=None) -> MlpModel:
    """Mini-batch Adam on standardized features with validation early stopping."""
    p = {**DEFAULT_PARAMS, **(params or {})}
    if int(p["max_epochs"]) < 1:
        raise ValidationError("max_epochs must be at least 1")
    X, y = check_training_data(X, y)
    n, d = X.shape
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(d)]
    rng = np.random.default_rng(p["seed"])

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale

    val = _validation_split(y, p["validation_fraction"], rng) if p["early_stopping"] else np.zeros(n, bool)
    Zt, yt = Z[~val], y[~val]
    Zv, yv = Z[val], y[val]

    w = init_weights(d, int(p["hidden"]), rng)
    opt = _Adam(w, float(p["learning_rate"]))
    bs = int(p["batch_size"])
    history = []
    best_loss, best_w, stale = np.inf, None, 0
    for epoch in range(int(p["max_epochs"])):
        perm = rng.permutation(len(yt))
        losses = []
        for start in range(0, len(perm), bs):
            b = perm[start:start + bs]
            loss, g = loss_and_grads(w, Zt[b], yt[b])
            opt.step(w, g)
            losses.append(loss * len(b))
        rec = {"epoch": epoch + 1, "train_loss": float(np.sum(losses) / len(yt))}
        if len(yv):
            v_loss, _ = loss_and_grads(w, Zv, yv)
            rec["val_loss"] = v_loss
            if v_loss < best_loss - 1e-12:
                best_loss, best_w, stale = v_loss, {k: v.copy() for k, v in w.items()}, 0
            else:
                stale += 1
        history.append(rec)
        if len(yv) and stale >= int(p["patience"]):
            break
    if best_w is not None:
        w = best_w
    return MlpModel(w["W1"], w["b1"], w["W2"], float(w["b2"]), mean, scale, names,
                    params=p, history=history)
