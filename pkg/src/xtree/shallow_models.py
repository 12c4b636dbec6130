"""Non-tree baselines sharing the tree models' prediction interface.

Exact brute-force k-nearest neighbors (uniform weights, Euclidean
distance, ties by training-row index) and a one-hidden-layer ReLU/softmax
perceptron trained with mini-batch adaptive-moment updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import FeatureMatrix
from .rng import generator

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8
_EARLY_STOP_TOL = 1e-6
_EARLY_STOP_PATIENCE = 10


class MlpDivergenceError(ArithmeticError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class KnnParams:
    k: int = 5
    weighting: str = "uniform"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.weighting != "uniform":
            raise ValueError(f"unsupported weighting {self.weighting!r}")


@dataclass(frozen=True)
class MlpParams:
    hidden_units: int = 128
    max_iterations: int = 1000
    l2_alpha: float = 0.001
    learning_rate: float = 1e-3
    batch_size: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.l2_alpha < 0:
            raise ValueError("l2_alpha must be >= 0")


class KnnModel:
    """Stored training set queried by exact Euclidean distance."""

    kind = "knn"

    def __init__(self, train_values, train_labels, feature_names, class_names, params):
        self.train_values = np.ascontiguousarray(train_values, dtype=np.float64)
        self.train_labels = np.ascontiguousarray(train_labels, dtype=np.int64)
        self.feature_names = tuple(feature_names)
        self.class_names = tuple(class_names)
        self.params = params

    def predict_proba(self, V) -> np.ndarray:
        V = _as_values(V, len(self.feature_names))
        n_train = self.train_values.shape[0]
        k = self.params.k
        n_classes = len(self.class_names)
        out = np.empty((V.shape[0], n_classes))
        # direct squared differences (no norm expansion) keep distances exact
        chunk = max(1, 8_000_000 // max(1, n_train * V.shape[1]))
        for start in range(0, V.shape[0], chunk):
            block = V[start:start + chunk]
            d2 = ((block[:, None, :] - self.train_values[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
            for i in range(block.shape[0]):
                counts = np.bincount(self.train_labels[nearest[i]], minlength=n_classes)
                out[start + i] = counts / k
        return out

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.predict_proba(V), axis=1)

    def to_payload(self) -> dict:
        return {
            "train_values": [[float(v) for v in row] for row in self.train_values],
            "train_labels": self.train_labels.tolist(),
        }


def fit_knn(X: FeatureMatrix, params: KnnParams) -> KnnModel:
    """Store the training set; prediction is brute-force neighbor voting."""
    if params.k > X.n_rows:
        raise ValueError(f"k={params.k} exceeds the {X.n_rows} training rows")
    return KnnModel(X.values, X.labels, X.feature_names, X.class_names, params)


def knn_predict_proba(model: KnnModel, Q) -> np.ndarray:
    return model.predict_proba(Q)


@dataclass
class MlpWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def copy(self) -> "MlpWeights":
        return MlpWeights(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def _as_values(X, n_features: int) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != n_features:
        raise ValueError(f"expected {n_features} feature columns, got shape {values.shape}")
    return values


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def mlp_loss_and_grad(weights: MlpWeights, X: np.ndarray, y: np.ndarray,
                      l2_alpha: float) -> tuple[float, MlpWeights]:
    """Cross-entropy (+ L2 on the weight matrices) and its exact gradient.

    Loss = mean CE over the batch + l2_alpha/2 * (|w1|^2 + |w2|^2); biases
    are not regularized.
    """
    n = X.shape[0]
    z1 = X @ weights.w1 + weights.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ weights.w2 + weights.b2
    p = _softmax(z2)
    ce = -np.log(np.clip(p[np.arange(n), y], 1e-300, None)).mean()
    reg = 0.5 * l2_alpha * (float((weights.w1 ** 2).sum()) + float((weights.w2 ** 2).sum()))
    loss = float(ce + reg)

    dz2 = p.copy()
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    dw2 = a1.T @ dz2 + l2_alpha * weights.w2
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ weights.w2.T
    dz1 = da1 * (z1 > 0.0)
    dw1 = X.T @ dz1 + l2_alpha * weights.w1
    db1 = dz1.sum(axis=0)
    return loss, MlpWeights(dw1, db1, dw2, db2)


class MlpModel:
    """One hidden ReLU layer into softmax."""

    kind = "mlp"

    def __init__(self, weights: MlpWeights, feature_names, class_names, params,
                 loss_trace=None):
        self.weights = weights
        self.feature_names = tuple(feature_names)
        self.class_names = tuple(class_names)
        self.params = params
        self.loss_trace = list(loss_trace or [])

    def predict_proba(self, V) -> np.ndarray:
        V = _as_values(V, len(self.feature_names))
        a1 = np.maximum(V @ self.weights.w1 + self.weights.b1, 0.0)
        return _softmax(a1 @ self.weights.w2 + self.weights.b2)

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.predict_proba(V), axis=1)

    def to_payload(self) -> dict:
        return {
            "w1": [[float(v) for v in row] for row in self.weights.w1],
            "b1": [float(v) for v in self.weights.b1],
            "w2": [[float(v) for v in row] for row in self.weights.w2],
            "b2": [float(v) for v in self.weights.b2],
            "loss_trace": [float(v) for v in self.loss_trace],
        }


def _glorot_uniform(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def fit_mlp(X: FeatureMatrix, params: MlpParams) -> MlpModel:
    """Mini-batch adaptive-moment training with seeded init and shuffling.

    Stops at ``max_iterations`` epochs or once the epoch loss has not
    improved by 1e-6 for 10 consecutive epochs.  Raises
    :class:`MlpDivergenceError` if the loss turns non-finite.
    """
    if X.n_rows == 0:
        raise ValueError("cannot fit an MLP on an empty matrix")
    rng = generator(params.seed, "shallow_models", "mlp")
    d, h, c = X.n_features, params.hidden_units, X.n_classes
    weights = MlpWeights(
        w1=_glorot_uniform(rng, d, h),
        b1=np.zeros(h),
        w2=_glorot_uniform(rng, h, c),
        b2=np.zeros(c),
    )
    moments1 = MlpWeights(*(np.zeros_like(a) for a in vars(weights).values()))
    moments2 = MlpWeights(*(np.zeros_like(a) for a in vars(weights).values()))
    step = 0
    best_loss = np.inf
    stall = 0
    loss_trace = []
    batch = min(params.batch_size, X.n_rows)
    for epoch in range(params.max_iterations):
        perm = rng.permutation(X.n_rows)
        epoch_losses = []
        for start in range(0, X.n_rows, batch):
            rows = perm[start:start + batch]
            loss, grads = mlp_loss_and_grad(
                weights, X.values[rows], X.labels[rows], params.l2_alpha
            )
            if not np.isfinite(loss):
                raise MlpDivergenceError(f"loss became non-finite at epoch {epoch}")
            epoch_losses.append(loss)
            step += 1
            for name in ("w1", "b1", "w2", "b2"):
                g = getattr(grads, name)
                m = getattr(moments1, name)
                v = getattr(moments2, name)
                m *= _ADAM_BETA1
                m += (1 - _ADAM_BETA1) * g
                v *= _ADAM_BETA2
                v += (1 - _ADAM_BETA2) * g * g
                m_hat = m / (1 - _ADAM_BETA1 ** step)
                v_hat = v / (1 - _ADAM_BETA2 ** step)
                getattr(weights, name)[...] -= (
                    params.learning_rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
                )
        epoch_loss = float(np.mean(epoch_losses))
        loss_trace.append(epoch_loss)
        if best_loss - epoch_loss >= _EARLY_STOP_TOL:
            best_loss = epoch_loss
            stall = 0
        else:
            stall += 1
            if stall >= _EARLY_STOP_PATIENCE:
                break
    return MlpModel(weights, X.feature_names, X.class_names, params, loss_trace)


def mlp_predict_proba(model: MlpModel, Q) -> np.ndarray:
    return model.predict_proba(Q)
