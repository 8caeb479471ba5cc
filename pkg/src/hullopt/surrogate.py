"""Deep ReLU multilayer perceptron trained with Adam on MAPE, in plain numpy.

Inputs are the seven raw features ``(scaled scores 1-3, L/B, B/T, Fn, Re)``;
``Re`` is replaced by ``log10(Re)`` and every feature is min-max scaled to
[0, 1] with statistics taken from the training split. The output head is
linear and predicts the merit coefficient directly, multiplied by a fixed
``output_scale`` (the median training target). The scale only conditions the
optimizer: Adam moves every weight by roughly ``lr`` per step whatever the
size of the target, so an unscaled head would take steps comparable to the
targets themselves (merit coefficients are of order 1e-3).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hydro
from .errors import ExtrapolationWarning, FormatError, UndefinedLossError

log = logging.getLogger(__name__)

MODEL_FORMAT = "hullopt-mlp"
MODEL_FORMAT_VERSION = 1
N_FEATURES = 7
FEATURE_NAMES = ("lambda1", "lambda2", "lambda3", "L_over_B", "B_over_T", "Fn", "Re")
LOG_FEATURE = 6  # Re enters as log10(Re)


def deep_layer_dims(n_in: int = N_FEATURES, hidden_layers: int = 36, width: int = 32) -> tuple[int, ...]:
    return (n_in,) + (width,) * hidden_layers + (1,)


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[k] has shape (layer_dims[k], layer_dims[k + 1])
    biases: list[np.ndarray]
    feature_min: np.ndarray
    feature_max: np.ndarray
    provenance: dict = field(default_factory=dict)
    output_scale: float = 1.0

    def __post_init__(self):
        self.layer_dims = tuple(int(n) for n in self.layer_dims)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays does not match layer_dims")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[k], self.layer_dims[k + 1]) or b.shape != (self.layer_dims[k + 1],):
                raise ValueError(f"layer {k} parameter shapes do not chain")
        self.feature_min = np.asarray(self.feature_min, dtype=float)
        self.feature_max = np.asarray(self.feature_max, dtype=float)
        if self.feature_min.shape != (self.layer_dims[0],):
            raise ValueError("normalization statistics must cover every input feature")
        self.output_scale = float(self.output_scale)
        if not (self.output_scale > 0 and math.isfinite(self.output_scale)):
            raise ValueError("output_scale must be positive and finite")

    @property
    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.feature_min.copy(),
            self.feature_max.copy(),
            dict(self.provenance),
            self.output_scale,
        )


# -- features ------------------------------------------------------------------

def _transform(X) -> np.ndarray:
    X = np.array(X, dtype=float, ndmin=2)
    if X.shape[1] > LOG_FEATURE:
        X[:, LOG_FEATURE] = np.log10(X[:, LOG_FEATURE])
    return X


def feature_stats(X_raw) -> tuple[np.ndarray, np.ndarray]:
    X = _transform(X_raw)
    return X.min(axis=0), X.max(axis=0)


def _span(model: MlpModel) -> np.ndarray:
    span = model.feature_max - model.feature_min
    return np.where(span > 0, span, 1.0)


def normalize_features(model: MlpModel, X_raw) -> np.ndarray:
    return (_transform(X_raw) - model.feature_min) / _span(model)


def denormalize_features(model: MlpModel, Xn) -> np.ndarray:
    X = np.array(Xn, dtype=float, ndmin=2) * _span(model) + model.feature_min
    if X.shape[1] > LOG_FEATURE:
        X[:, LOG_FEATURE] = 10.0 ** X[:, LOG_FEATURE]
    return X


# -- network -------------------------------------------------------------------

def he_init(layer_dims: Sequence[int], seed) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Normal weights with variance ``2 / fan_in``; zero biases."""
    rng = np.random.default_rng(seed)
    weights = [
        rng.standard_normal((n_in, n_out)) * math.sqrt(2.0 / n_in)
        for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:])
    ]
    biases = [np.zeros(n) for n in layer_dims[1:]]
    return weights, biases


def new_model(layer_dims: Sequence[int], seed, feature_min, feature_max, output_scale: float = 1.0) -> MlpModel:
    W, b = he_init(layer_dims, seed)
    return MlpModel(tuple(layer_dims), W, b, feature_min, feature_max, output_scale=output_scale)


def _forward(weights, biases, Xn, keep: bool = False, scale: float = 1.0):
    a = Xn
    acts = [a]
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = z if k == last else np.maximum(z, 0.0)
        if keep:
            acts.append(a)
    return scale * a[:, 0], acts


def forward_normalized(model: MlpModel, Xn) -> np.ndarray:
    return _forward(model.weights, model.biases, np.asarray(Xn, dtype=float), scale=model.output_scale)[0]


def forward(model: MlpModel, X_raw) -> np.ndarray:
    """Predictions for raw feature rows; normalization is applied internally."""
    X = np.array(X_raw, dtype=float, ndmin=2)
    if X.shape[1] != model.layer_dims[0]:
        raise ValueError(f"expected {model.layer_dims[0]} features, got {X.shape[1]}")
    return forward_normalized(model, normalize_features(model, X))


def mape(predictions, targets) -> float:
    """Mean absolute percentage error in percent."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if np.any(t == 0):
        raise UndefinedLossError("MAPE is undefined for zero targets")
    return float(np.mean(np.abs((t - p) / t)) * 100.0)


def _loss_and_grads(weights, biases, Xn, targets, scale: float = 1.0):
    pred, acts = _forward(weights, biases, Xn, keep=True, scale=scale)
    m = targets.size
    resid = pred - targets
    loss = float(np.mean(np.abs(resid / targets)) * 100.0)
    # d|r|/dr taken as 0 at r == 0
    delta = (np.sign(resid) * (100.0 * scale / m) / np.abs(targets))[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        gW[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            # ReLU derivative taken as 0 at 0
            delta = (delta @ weights[k].T) * (acts[k] > 0)
    return loss, gW, gb


def backward(model: MlpModel, X_raw, targets):
    """MAPE and its exact gradients ``(loss, dW list, db list)`` on one batch."""
    targets = np.asarray(targets, dtype=float)
    if np.any(targets == 0):
        raise UndefinedLossError("MAPE is undefined for zero targets")
    return _loss_and_grads(
        model.weights, model.biases, normalize_features(model, X_raw), targets, model.output_scale
    )


# -- optimizer -----------------------------------------------------------------

@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0 or self.eps <= 0 or not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("invalid Adam hyper-parameters")

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        """Update ``params`` in place with bias-corrected moments and return them."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


# -- training ------------------------------------------------------------------

@dataclass
class TrainingConfig:
    epochs: int = 8000
    batch_size: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden_layers: int = 36
    width: int = 32

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        Adam(self.lr, self.beta1, self.beta2, self.eps)


# Desk scale: about 3.7k training rows instead of 21k. Small batches give the
# deep network enough optimizer steps to converge within minutes.
DESK_CONFIG = TrainingConfig(epochs=1000, batch_size=64)


@dataclass
class TrainingHistory:
    train_mape: list = field(default_factory=list)
    test_mape: list = field(default_factory=list)
    best_epoch: int = -1
    best_test_mape: float = math.inf

    def to_csv(self) -> str:
        lines = ["epoch,train_mape,test_mape"]
        lines += [f"{k + 1},{tr!r},{te!r}" for k, (tr, te) in enumerate(zip(self.train_mape, self.test_mape))]
        return "\n".join(lines) + "\n"


def train(
    train_X, train_y, test_X, test_y, config: TrainingConfig = TrainingConfig(), progress_every: int = 0
) -> tuple[MlpModel, TrainingHistory]:
    """Minibatch Adam on MAPE; returns the parameters with the lowest test MAPE.

    Normalization statistics come from the training rows only.
    """
    train_y = np.asarray(train_y, dtype=float)
    test_y = np.asarray(test_y, dtype=float)
    if train_y.size == 0 or test_y.size == 0:
        raise ValueError("training and test splits must both be non-empty")
    if np.any(train_y == 0) or np.any(test_y == 0):
        raise UndefinedLossError("MAPE is undefined for zero targets")
    fmin, fmax = feature_stats(train_X)
    dims = deep_layer_dims(np.shape(train_X)[1], config.hidden_layers, config.width)
    model = new_model(dims, config.seed, fmin, fmax, float(np.median(np.abs(train_y))))
    scale = model.output_scale
    Xtr = normalize_features(model, train_X)
    Xte = normalize_features(model, test_X)
    n = train_y.size
    bs = min(config.batch_size, n)
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    params = model.params
    nW = len(model.weights)
    hist = TrainingHistory()
    best = [p.copy() for p in params]
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            loss, gW, gb = _loss_and_grads(model.weights, model.biases, Xtr[idx], train_y[idx], scale)
            opt.step(params, gW + gb)
            total += loss * idx.size
        hist.train_mape.append(total / n)
        te = mape(forward_normalized(model, Xte), test_y)
        hist.test_mape.append(te)
        if te < hist.best_test_mape:
            hist.best_test_mape, hist.best_epoch = te, epoch
            for b, p in zip(best, params):
                b[...] = p
        if progress_every and (epoch + 1) % progress_every == 0:
            log.info(
                "epoch %d train %.3f%% test %.3f%% best %.3f%% (%.0fs)",
                epoch + 1, hist.train_mape[-1], te, hist.best_test_mape, time.perf_counter() - t0,
            )
    model.weights = best[:nW]
    model.biases = best[nW:]
    model.provenance = {"config": asdict(config), "best_epoch": hist.best_epoch, "best_test_mape": hist.best_test_mape}
    return model, hist


def train_on_dataset(ds, config: TrainingConfig = TrainingConfig(), progress_every: int = 0):
    """Train on a :class:`hullopt.dataset.Dataset` using its stored hull split."""
    tr, te = ds.train(), ds.test()
    model, hist = train(tr.features, tr.merit, te.features, te.merit, config, progress_every)
    model.provenance["pca_digest"] = ds.meta.get("pca_digest", "")
    from . import dataset as _dataset

    model.provenance["dataset_digest"] = _dataset.digest(ds)
    return model, hist


# -- prediction ----------------------------------------------------------------

def feature_rows(params, L, fns, nu: float = hydro.NU, g: float = hydro.GRAVITY) -> np.ndarray:
    """Raw feature rows for hull parameters ``params`` (n, 5) at Froude numbers ``fns``.

    Returns shape ``(n * len(fns), 7)``, hull-major, with ``Re = Fn sqrt(g L) L / nu``.
    """
    P = np.array(params, dtype=float, ndmin=2)
    fns = np.atleast_1d(np.asarray(fns, dtype=float))
    L = np.broadcast_to(np.asarray(L, dtype=float), (P.shape[0],))
    re = fns[None, :] * np.sqrt(g * L)[:, None] * L[:, None] / nu
    rows = np.repeat(P, fns.size, axis=0)
    return np.column_stack([rows, np.tile(fns, P.shape[0]), re.ravel()])


def out_of_range(model: MlpModel, X_raw, tol: float = 0.01) -> np.ndarray:
    """Boolean per row: some feature lies outside the training range.

    ``tol`` is measured in units of each feature's training span, so points on
    the edge of the sampled design box (which random training draws never hit
    exactly) are not flagged.
    """
    Xn = normalize_features(model, X_raw)
    return np.any((Xn < -tol) | (Xn > 1 + tol), axis=1)


def predict(model: MlpModel, params, L, fns, warn: bool = True) -> np.ndarray:
    """Predicted merit coefficients, shape ``(n_hulls, n_fns)``."""
    P = np.array(params, dtype=float, ndmin=2)
    X = feature_rows(P, L, fns)
    if warn:
        n_out = int(out_of_range(model, X).sum())
        if n_out:
            warnings.warn(f"{n_out} rows lie outside the training range", ExtrapolationWarning, stacklevel=2)
    return forward(model, X).reshape(P.shape[0], -1)


# -- model file ----------------------------------------------------------------

def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "feature_names": list(FEATURE_NAMES[: model.layer_dims[0]]),
        "feature_transform": {"Re": "log10"},
        "feature_min": model.feature_min.tolist(),
        "feature_max": model.feature_max.tolist(),
        "output_scale": model.output_scale,
        "weights": [W.ravel().tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "provenance": model.provenance,
    }


def model_from_dict(data: dict) -> MlpModel:
    if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"not a {MODEL_FORMAT} v{MODEL_FORMAT_VERSION} file")
    dims = tuple(data["layer_dims"])
    try:
        weights = [np.reshape(np.array(w, dtype=float), (a, b)) for w, a, b in zip(data["weights"], dims[:-1], dims[1:])]
        biases = [np.array(b, dtype=float) for b in data["biases"]]
        return MlpModel(
            dims, weights, biases, data["feature_min"], data["feature_max"],
            data.get("provenance", {}), data["output_scale"],
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed model file: {exc}") from exc


def dumps(model: MlpModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True) + "\n"


def loads(text: str) -> MlpModel:
    return model_from_dict(json.loads(text))


def save(model: MlpModel, path) -> str:
    text = dumps(model)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load(path) -> MlpModel:
    return loads(Path(path).read_text())
