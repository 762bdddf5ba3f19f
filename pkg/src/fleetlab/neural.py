"""Feed-forward regressor for aggregated relocation decisions, from scratch.

Architecture: two tanh hidden layers and a linear output. Training is
mini-batch Adam on a weighted MSE plus l1-regularization; long-tail labels
are handled by mean-sampling (duplicate examples whose label mean clears a
threshold) and by up-weighting sparse label elements on the examples where
they are non-zero.

`MlpRegressor` packages the recipe behind the scikit-learn estimator API
(fit/predict/get_params) so it composes with that ecosystem; the plain
functions underneath (`forward`, `loss_value`, `gradients`, `mean_sample`,
`flag_sparse_elements`, `train`) are usable on their own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

__all__ = [
    "Dataset",
    "MlpModel",
    "TrainConfig",
    "TrainingDiverged",
    "forward",
    "loss_value",
    "gradients",
    "mean_sample",
    "flag_sparse_elements",
    "train",
    "save_model",
    "load_model",
    "MlpRegressor",
]

_MODEL_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Dataset:
    """Feature rows (flattened supply ++ demand), label rows, and bookkeeping.

    `groups` ties rows to their source instance so the validation split can
    separate whole instances; `copies` records per-example multiplicity
    after mean-sampling.
    """

    inputs: np.ndarray
    labels: np.ndarray
    groups: np.ndarray = None
    copies: np.ndarray = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on the number of rows")
        n = self.inputs.shape[0]
        if self.groups is None:
            self.groups = np.zeros(n, dtype=np.int64)
        else:
            self.groups = np.asarray(self.groups)
        if self.copies is None:
            self.copies = np.ones(n, dtype=np.int64)
        else:
            self.copies = np.asarray(self.copies, dtype=np.int64)

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class MlpModel:
    """Parameters of the network plus the preprocessing baked in at fit time."""

    weights: list  # [d_in x h, h x h, h x d_out]
    biases: list
    norm_mean: np.ndarray = None
    norm_std: np.ndarray = None
    flagged: np.ndarray = None  # sparse-element mask used during training

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self):
        return list(self.weights) + list(self.biases)

    def normalize(self, X):
        if self.norm_mean is None:
            return X
        return (X - self.norm_mean) / self.norm_std

    def predict(self, X):
        return forward(self, self.normalize(np.asarray(X, dtype=float)))


def init_model(layer_sizes, rng: np.random.Generator) -> MlpModel:
    weights, biases = [], []
    for d_in, d_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpModel(weights, biases)


def forward(m: MlpModel, x: np.ndarray) -> np.ndarray:
    """Raw network function W3·tanh(W2·tanh(W1·x + b1) + b2) + b3 (no normalization)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != m.weights[0].shape[0]:
        raise ValueError(f"input width {h.shape[1]} != {m.weights[0].shape[0]}")
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        h = np.tanh(h @ W + b)
    out = h @ m.weights[-1] + m.biases[-1]
    return out[0] if single else out


def _element_weights(Y, flagged, tail_weight):
    """Per-entry loss weights: tail_weight on flagged elements where the label is non-zero."""
    if flagged is None or not np.any(flagged):
        return np.ones_like(Y)
    return np.where(flagged[None, :] & (Y != 0), float(tail_weight), 1.0)


def loss_value(m: MlpModel, X, Y, weights, l1: float) -> float:
    """Weighted MSE over the batch plus l1 on all parameters.

    weights has one entry per (example, element); the per-example error is
    the weighted sum of squared residuals over the label width.
    """
    pred = forward(m, X)
    k = Y.shape[1]
    data_term = float((weights * (pred - Y) ** 2).sum() / (X.shape[0] * k))
    reg = sum(float(np.abs(p).sum()) for p in m.parameters())
    return data_term + l1 * reg


def gradients(m: MlpModel, X, Y, weights, l1: float):
    """Analytic gradients of loss_value w.r.t. every weight and bias.

    The l1 subgradient is sign(p), taken as 0 where p is exactly 0.
    """
    B, k = Y.shape
    h1 = np.tanh(X @ m.weights[0] + m.biases[0])
    h2 = np.tanh(h1 @ m.weights[1] + m.biases[1])
    pred = h2 @ m.weights[2] + m.biases[2]

    g = 2.0 * weights * (pred - Y) / (B * k)
    dW3 = h2.T @ g
    db3 = g.sum(axis=0)
    g2 = (g @ m.weights[2].T) * (1.0 - h2**2)
    dW2 = h1.T @ g2
    db2 = g2.sum(axis=0)
    g1 = (g2 @ m.weights[1].T) * (1.0 - h1**2)
    dW1 = X.T @ g1
    db1 = g1.sum(axis=0)

    grads = [dW1, dW2, dW3, db1, db2, db3]
    for gp, p in zip(grads, m.parameters()):
        gp += l1 * np.sign(p)
    return grads


def mean_sample(data: Dataset, kappa: float, mu: int) -> Dataset:
    """Duplicate long-tail examples: label mean >= kappa appears mu times total.

    Originals keep their order; duplicates are appended after them.
    """
    if mu < 1:
        raise ValueError(f"mu must be >= 1, got {mu}")
    means = data.labels.mean(axis=1)
    hot = means >= kappa
    copies = np.where(hot, mu, 1).astype(np.int64)
    extra = np.repeat(np.flatnonzero(hot), mu - 1)
    order = np.concatenate([np.arange(len(data)), extra])
    return Dataset(
        inputs=data.inputs[order],
        labels=data.labels[order],
        groups=data.groups[order],
        copies=copies[order],
    )


def flag_sparse_elements(data: Dataset, zero_fraction_threshold: float) -> np.ndarray:
    """Label elements whose zero fraction exceeds the threshold."""
    zero_frac = (data.labels == 0).mean(axis=0)
    return zero_frac > zero_fraction_threshold


@dataclass
class TrainConfig:
    hidden_units: int = 64
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    l1: float = 1e-5
    kappa: float = 4.0
    mu: int = 3
    tail_weight: float = 5.0
    zero_fraction_threshold: float = 0.9
    seed: int = 0
    standardize: bool = True
    validation_fraction: float = 1 / 6  # groups held out: 5:1 split
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("hidden_units", "epochs", "batch_size", "mu"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0 or self.l1 < 0:
            raise ValueError("learning_rate and l1 must be >= 0")


def _group_split(groups, fraction, rng):
    uniq = np.unique(groups)
    if uniq.size < 2:
        n = groups.shape[0]
        idx = rng.permutation(n)
        n_val = max(1, int(round(n * fraction))) if n > 1 else 0
        return idx[n_val:], idx[:n_val]
    order = rng.permutation(uniq)
    n_val = max(1, int(round(uniq.size * fraction)))
    val_groups = set(order[:n_val].tolist())
    val_mask = np.array([g in val_groups for g in groups])
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask)


def train(
    data: Dataset,
    cfg: TrainConfig,
    flagged: np.ndarray | None = None,
) -> tuple[MlpModel, list]:
    """Mini-batch Adam on the weighted loss; returns the model and the
    per-epoch (train_loss, val_loss) curve. Deterministic for a fixed seed.

    `flagged` marks sparse label elements whose non-zero examples get
    tail_weight in the loss; pass flag_sparse_elements output (or None).
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    X_all, Y_all = data.inputs, data.labels
    train_idx, val_idx = _group_split(data.groups, cfg.validation_fraction, rng)
    if train_idx.size == 0:
        train_idx, val_idx = val_idx, train_idx
    X, Y = X_all[train_idx], Y_all[train_idx]
    Xv, Yv = X_all[val_idx], Y_all[val_idx]

    if cfg.standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
    else:
        mean = np.zeros(X.shape[1])
        std = np.ones(X.shape[1])
    Xn = (X - mean) / std
    Xvn = (Xv - mean) / std if len(val_idx) else Xv

    layer_sizes = [X.shape[1], cfg.hidden_units, cfg.hidden_units, Y.shape[1]]
    model = init_model(layer_sizes, rng)
    model.norm_mean = mean
    model.norm_std = std
    model.flagged = (
        np.zeros(Y.shape[1], dtype=bool) if flagged is None else np.asarray(flagged, dtype=bool)
    )

    W = _element_weights(Y, model.flagged, cfg.tail_weight)
    Wv = _element_weights(Yv, model.flagged, cfg.tail_weight) if len(val_idx) else None

    params = model.parameters()
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    curve = []
    n = Xn.shape[0]

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            grads = gradients(model, Xn[sel], Y[sel], W[sel], cfg.l1)
            step += 1
            b1c = 1.0 - cfg.adam_beta1**step
            b2c = 1.0 - cfg.adam_beta2**step
            for p, g, ms, vs in zip(params, grads, m_state, v_state):
                ms *= cfg.adam_beta1
                ms += (1 - cfg.adam_beta1) * g
                vs *= cfg.adam_beta2
                vs += (1 - cfg.adam_beta2) * g * g
                p -= cfg.learning_rate * (ms / b1c) / (np.sqrt(vs / b2c) + cfg.adam_eps)

        train_loss = loss_value(model, Xn, Y, W, cfg.l1)
        val_loss = loss_value(model, Xvn, Yv, Wv, cfg.l1) if len(val_idx) else float("nan")
        if not np.isfinite(train_loss):
            raise TrainingDiverged(
                f"non-finite training loss {train_loss} at epoch {epoch} "
                f"(learning_rate={cfg.learning_rate}, batch_size={cfg.batch_size})"
            )
        curve.append((epoch, train_loss, val_loss))

    return model, curve


# ---------------------------------------------------------------------------
# Model file: self-describing JSON container; round-trip is bit-exact.
# ---------------------------------------------------------------------------


def save_model(model: MlpModel, path: str | Path) -> None:
    doc = {
        "version": _MODEL_FORMAT_VERSION,
        "layer_sizes": model.layer_sizes,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "norm_mean": None if model.norm_mean is None else model.norm_mean.tolist(),
        "norm_std": None if model.norm_std is None else model.norm_std.tolist(),
        "flagged": None if model.flagged is None else [bool(f) for f in model.flagged],
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path: str | Path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt model file {path}: {exc}") from exc
    version = doc.get("version")
    if version != _MODEL_FORMAT_VERSION:
        raise ValueError(
            f"model file version {version} unsupported (expected {_MODEL_FORMAT_VERSION})"
        )
    model = MlpModel(
        weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
        norm_mean=None if doc["norm_mean"] is None else np.asarray(doc["norm_mean"]),
        norm_std=None if doc["norm_std"] is None else np.asarray(doc["norm_std"]),
        flagged=None if doc["flagged"] is None else np.asarray(doc["flagged"], dtype=bool),
    )
    sizes = model.layer_sizes
    if sizes != doc["layer_sizes"]:
        raise ValueError(f"layer sizes {doc['layer_sizes']} do not match parameters {sizes}")
    return model


class MlpRegressor(BaseEstimator, RegressorMixin):
    """Scikit-learn estimator wrapping the full training recipe.

    fit(X, y, groups=...) performs mean-sampling, sparse-element flagging,
    standardization and Adam training; predict(X) returns real-valued
    aggregated relocation vectors (feasibility restoration is a separate,
    downstream step).
    """

    def __init__(
        self,
        hidden_units=64,
        epochs=200,
        batch_size=32,
        learning_rate=1e-3,
        l1=1e-5,
        kappa=4.0,
        mu=3,
        tail_weight=5.0,
        zero_fraction_threshold=0.9,
        standardize=True,
        validation_fraction=1 / 6,
        seed=0,
    ):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.l1 = l1
        self.kappa = kappa
        self.mu = mu
        self.tail_weight = tail_weight
        self.zero_fraction_threshold = zero_fraction_threshold
        self.standardize = standardize
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_units=self.hidden_units,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            l1=self.l1,
            kappa=self.kappa,
            mu=self.mu,
            tail_weight=self.tail_weight,
            zero_fraction_threshold=self.zero_fraction_threshold,
            standardize=self.standardize,
            validation_fraction=self.validation_fraction,
            seed=self.seed,
        )

    def fit(self, X, y, groups=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 2:
            raise ValueError("X and y must be 2-D (rows are examples)")
        data = Dataset(X, y, groups=groups)
        sampled = mean_sample(data, self.kappa, self.mu)
        flagged = flag_sparse_elements(sampled, self.zero_fraction_threshold)
        self.model_, self.curve_ = train(sampled, self._config(), flagged)
        self.flagged_ = flagged
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise RuntimeError("MlpRegressor is not fitted yet; call fit first")
        return self.model_.predict(np.asarray(X, dtype=float))

    def save(self, path):
        save_model(self.model_, path)
