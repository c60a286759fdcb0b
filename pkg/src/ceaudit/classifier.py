"""Logistic regression trained by full-batch gradient descent.

Features are z-scored inside the model; callers always pass raw values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "TrainConfig",
    "LogisticModel",
    "DegenerateLabelsError",
    "fit",
    "fit_arrays",
    "loss_and_grad",
    "predict_proba",
    "predict_class",
    "save_model",
    "load_model",
]


class DegenerateLabelsError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    max_epochs: int = 5000
    convergence_tol: float = 1e-8
    l2_penalty: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_order: tuple[str, ...]
    means: np.ndarray
    scales: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)
    dataset_digest: str | None = None
    epochs: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.feature_order):
            raise ValueError("one weight per feature required")
        if np.any(self.scales <= 0):
            raise ValueError("standardization scales must be positive")

    def logit(self, X: np.ndarray) -> np.ndarray:
        """Raw feature rows (..., F) -> decision values (...)."""
        return self.bias + ((X - self.means) / self.scales) @ self.weights

    def proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logit(X))

    @property
    def raw_weights(self) -> np.ndarray:
        """d logit / d raw feature."""
        return self.weights / self.scales

    def vector(self, features: Mapping[str, float]) -> np.ndarray:
        try:
            return np.array([float(features[f]) for f in self.feature_order])
        except KeyError as exc:
            raise KeyError(f"missing feature {exc.args[0]!r}") from None


def _sigmoid(z):
    # numerically stable both ways
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def loss_and_grad(params: np.ndarray, Z: np.ndarray, t: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Mean log-loss plus ``0.5 * l2 * |w|^2`` on standardized inputs.

    ``params`` packs ``[w_1..w_F, bias]``; the bias is not penalized.
    """
    w, b = params[:-1], params[-1]
    z = Z @ w + b
    # log(1 + e^z) - t z, written stably
    loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * float(w @ w)
    r = (_sigmoid(z) - t) / len(t)
    grad = np.empty_like(params)
    grad[:-1] = Z.T @ r + l2 * w
    grad[-1] = r.sum()
    return float(loss), grad


def fit_arrays(
    X: np.ndarray,
    t: np.ndarray,
    feature_order: Sequence[str],
    cfg: TrainConfig = TrainConfig(),
    init: np.ndarray | None = None,
    history: list | None = None,
) -> LogisticModel:
    t = np.asarray(t, dtype=float)
    if len(t) == 0:
        raise ValueError("empty training set")
    if np.unique(t).size < 2:
        raise DegenerateLabelsError("degenerate labels: only one class present")

    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    Z = (X - means) / scales

    params = np.zeros(X.shape[1] + 1) if init is None else np.array(init, dtype=float)
    loss, grad = loss_and_grad(params, Z, t, cfg.l2_penalty)
    if history is not None:
        history.append(loss)
    epochs = 0
    for epochs in range(1, cfg.max_epochs + 1):
        params = params - cfg.learning_rate * grad
        new_loss, grad = loss_and_grad(params, Z, t, cfg.l2_penalty)
        if history is not None:
            history.append(new_loss)
        improved = loss - new_loss
        loss = new_loss
        if improved < cfg.convergence_tol:
            break

    return LogisticModel(
        weights=params[:-1].copy(),
        bias=float(params[-1]),
        feature_order=tuple(feature_order),
        means=means,
        scales=scales,
        config=cfg,
        epochs=epochs,
    )


def fit(dataset, cfg: TrainConfig = TrainConfig()) -> LogisticModel:
    """Fit on a :class:`~ceaudit.sampler.Dataset` (features -> class)."""
    model = fit_arrays(dataset.X, dataset.classes, dataset.features, cfg)
    return replace(model, dataset_digest=dataset_digest(dataset))


def dataset_digest(dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(dataset.y, dtype=float).tobytes())
    return h.hexdigest()[:16]


def predict_proba(model: LogisticModel, features: Mapping[str, float]) -> float:
    return float(model.proba(model.vector(features)))


def predict_class(model: LogisticModel, features: Mapping[str, float]) -> int:
    return int(predict_proba(model, features) >= 0.5)


def model_to_dict(model: LogisticModel) -> dict:
    return {
        "feature_order": list(model.feature_order),
        "weights": [float(w) for w in model.weights],
        "bias": model.bias,
        "means": [float(v) for v in model.means],
        "scales": [float(v) for v in model.scales],
        "train_config": asdict(model.config),
        "dataset_digest": model.dataset_digest,
        "epochs": model.epochs,
    }


def model_from_dict(data: Mapping) -> LogisticModel:
    return LogisticModel(
        weights=np.array(data["weights"], dtype=float),
        bias=float(data["bias"]),
        feature_order=tuple(data["feature_order"]),
        means=np.array(data["means"], dtype=float),
        scales=np.array(data["scales"], dtype=float),
        config=TrainConfig(**data.get("train_config", {})),
        dataset_digest=data.get("dataset_digest"),
        epochs=int(data.get("epochs", 0)),
    )


def save_model(model: LogisticModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> LogisticModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
