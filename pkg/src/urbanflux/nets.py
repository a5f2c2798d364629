"""From-scratch multilayer perceptrons for the two demand networks.

Network T maps the 17 environment features to the normalized daily total
(one output); network D maps them to the 24-hour distribution (24 outputs).
Both train with plain minibatch SGD on MSE; the default activation is the
sigmoid at every layer, output included, since all targets live in [0, 1].

The estimators follow the sklearn fit/predict/get_params contract so they
compose with clone() and the shared evaluation harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone

from .errors import DivergenceError, NormMismatch, ShapeError, ZeroGroundTruth
from .features import NormalizationInfo, denormalize_total

ACTIVATIONS = ("sigmoid", "tanh", "relu", "softmax_output")

ENV_WIDTH = 17
N_HOURS = 24
DIST_SUM_TOL = 1e-6


@dataclass(frozen=True)
class MlpSpec:
    input_width: int
    hidden_widths: tuple[int, ...]
    output_width: int
    activation: str = "sigmoid"

    def __post_init__(self):
        widths = (self.input_width, *self.hidden_widths, self.output_width)
        if any(w < 1 for w in widths):
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = (self.input_width, *self.hidden_widths, self.output_width)
        return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]


@dataclass
class TrainHistory:
    """Per-epoch medians: error rate is 1 - median accuracy."""

    train_error: list[float] = field(default_factory=list)
    test_error: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train_error": self.train_error, "test_error": self.test_error,
                "loss": self.loss}


def init_params(spec: MlpSpec, seed: int, init_scale: float = 1.0,
                center_biases: bool = False) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.

    The defaults implement exactly that. Deep sigmoid stacks shrink
    sample-to-sample signal by sigma'(0)=1/4 per layer and plain SGD cannot
    escape the resulting constant predictor in any reasonable budget, so two
    opt-in knobs exist: init_scale multiplies the bound (4.0 restores unit
    signal gain through sigmoid layers), and center_biases sets each bias to
    -0.5 * (row sum of W), centering pre-activations for inputs near 0.5.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_w, in_w in spec.layer_shapes():
        bound = init_scale * np.sqrt(6.0 / (in_w + out_w))
        w = rng.uniform(-bound, bound, size=(out_w, in_w))
        weights.append(w)
        biases.append(-0.5 * w.sum(axis=1) if center_biases else np.zeros(out_w))
    return weights, biases


def _hidden_act(name: str) -> str:
    return "sigmoid" if name == "softmax_output" else name


def _apply_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(0.0, z)
    if name == "softmax":
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(name)


def _act_backward(name: str, a: np.ndarray, grad_a: np.ndarray) -> np.ndarray:
    """dLoss/dz given dLoss/da and the activation output a."""
    if name == "sigmoid":
        return grad_a * a * (1.0 - a)
    if name == "tanh":
        return grad_a * (1.0 - a * a)
    if name == "relu":
        return grad_a * (a > 0.0)
    if name == "softmax":
        inner = (grad_a * a).sum(axis=1, keepdims=True)
        return a * (grad_a - inner)
    raise ValueError(name)


def forward_pass(weights, biases, activation: str, X: np.ndarray) -> list[np.ndarray]:
    """All layer activations, input included; index -1 is the output."""
    hidden = _hidden_act(activation)
    n_layers = len(weights)
    acts = [X]
    a = X
    for i in range(n_layers):
        z = a @ weights[i].T + biases[i]
        name = hidden if i < n_layers - 1 else (
            "softmax" if activation == "softmax_output" else activation
        )
        a = _apply_act(name, z)
        acts.append(a)
    return acts


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the summed squared error across output units."""
    d = pred - target
    return float(np.mean(np.sum(d * d, axis=1)))


def backward_pass(weights, biases, activation: str, X: np.ndarray, Y: np.ndarray):
    """Gradients of :func:`mse_loss` w.r.t. every weight matrix and bias."""
    hidden = _hidden_act(activation)
    n_layers = len(weights)
    acts = forward_pass(weights, biases, activation, X)
    n = X.shape[0]
    grad_a = 2.0 * (acts[-1] - Y) / n
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for i in reversed(range(n_layers)):
        name = hidden if i < n_layers - 1 else (
            "softmax" if activation == "softmax_output" else activation
        )
        grad_z = _act_backward(name, acts[i + 1], grad_a)
        grads_w[i] = grad_z.T @ acts[i]
        grads_b[i] = grad_z.sum(axis=0)
        if i:
            grad_a = grad_z @ weights[i]
    return grads_w, grads_b


def renormalize_distribution(pred: np.ndarray) -> np.ndarray:
    """Project raw distribution outputs onto the probability simplex by L1 scaling.

    Negative entries (possible under tanh) are clipped first; an all-zero row
    falls back to the uniform distribution.
    """
    p = np.clip(np.atleast_2d(np.asarray(pred, dtype=float)), 0.0, None)
    sums = p.sum(axis=1, keepdims=True)
    uniform = np.full(p.shape[1], 1.0 / p.shape[1])
    out = np.where(sums > 0, p / np.where(sums > 0, sums, 1.0), uniform)
    return out


class MlpRegressor(BaseEstimator, RegressorMixin):
    """Minibatch-SGD multilayer perceptron for the demand networks.

    kind "T" predicts the normalized total (1 output); kind "D" predicts the
    24-hour distribution. Fitting with the same seed is bit-reproducible.
    """

    def __init__(self, hidden_widths=(36, 36, 36, 36, 36, 36), kind="T",
                 activation="sigmoid", epochs=300, batch_size=100,
                 learning_rate=0.1, shuffle=True, seed=0, record_history=True,
                 init_scale=1.0, center_biases=False):
        self.hidden_widths = hidden_widths
        self.kind = kind
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.shuffle = shuffle
        self.seed = seed
        self.record_history = record_history
        self.init_scale = init_scale
        self.center_biases = center_biases

    @property
    def output_width(self) -> int:
        return 1 if self.kind == "T" else N_HOURS

    def _as_targets(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[1] != self.output_width:
            raise ShapeError(f"kind {self.kind} expects {self.output_width} targets, "
                             f"got {Y.shape[1]}")
        return Y

    def _check_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if not hasattr(self, "spec_"):
            return X
        if X.shape[1] != self.spec_.input_width:
            raise ShapeError(f"expected {self.spec_.input_width} features, got {X.shape[1]}")
        return X

    def fit(self, X, Y, eval_set=None):
        if self.kind not in ("T", "D"):
            raise ValueError("kind must be 'T' or 'D'")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ShapeError("X must be a non-empty 2-D array")
        Y = self._as_targets(Y)
        if Y.shape[0] != X.shape[0]:
            raise ShapeError("X and Y row counts differ")
        self.spec_ = MlpSpec(X.shape[1], tuple(int(w) for w in self.hidden_widths),
                             self.output_width, self.activation)
        self.weights_, self.biases_ = init_params(self.spec_, self.seed,
                                                  self.init_scale, self.center_biases)
        self.history_ = TrainHistory()
        rng = np.random.default_rng(self.seed)

        eval_xy = None
        if eval_set is not None:
            eval_xy = (np.asarray(eval_set[0], dtype=float), self._as_targets(eval_set[1]))

        n = X.shape[0]
        lr = self.learning_rate
        for _epoch in range(self.epochs):
            order = rng.permutation(n) if self.shuffle else np.arange(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                gw, gb = backward_pass(self.weights_, self.biases_, self.activation,
                                       X[idx], Y[idx])
                for i in range(len(self.weights_)):
                    self.weights_[i] -= lr * gw[i]
                    self.biases_[i] -= lr * gb[i]
            if self.record_history:
                self._record_epoch(X, Y, eval_xy)
            elif _epoch % 50 == 0 or _epoch == self.epochs - 1:
                self._check_finite(X, Y)
        return self

    def _check_finite(self, X, Y):
        loss = mse_loss(self.forward(X), Y)
        if not np.isfinite(loss):
            raise DivergenceError(f"training loss became non-finite ({loss})")

    def _record_epoch(self, X, Y, eval_xy):
        pred = self.forward(X)
        loss = mse_loss(pred, Y)
        if not np.isfinite(loss):
            raise DivergenceError(f"training loss became non-finite ({loss})")
        accs, _ = _per_sample_accuracy(self.kind, Y, pred)
        self.history_.train_error.append(1.0 - float(np.median(accs)) if accs.size else np.nan)
        self.history_.loss.append(loss)
        if eval_xy is not None:
            eaccs, _ = _per_sample_accuracy(self.kind, eval_xy[1], self.forward(eval_xy[0]))
            self.history_.test_error.append(
                1.0 - float(np.median(eaccs)) if eaccs.size else np.nan)

    def forward(self, X) -> np.ndarray:
        """Raw output activations, shape (n, output_width)."""
        X = self._check_x(X)
        return forward_pass(self.weights_, self.biases_, self.activation, X)[-1]

    def predict(self, X) -> np.ndarray:
        out = self.forward(X)
        return out[:, 0] if self.kind == "T" else out

    def predict_dist(self, X) -> np.ndarray:
        """Distribution outputs renormalized onto the simplex (kind D)."""
        if self.kind != "D":
            raise ShapeError("predict_dist is only defined for kind 'D'")
        return renormalize_distribution(self.forward(X))


# ---------------------------------------------------------------------------
# Accuracy metrics
# ---------------------------------------------------------------------------


def accuracy_total(gt: float, pred: float) -> float:
    """Relative accuracy of a total prediction: 1 - |gt - pred| / gt.

    Unclamped; transferred models can legitimately score negative. Undefined
    for a zero ground truth.
    """
    if gt == 0:
        raise ZeroGroundTruth("accuracy of a zero total is undefined")
    return 1.0 - abs(gt - pred) / gt


def accuracy_dist(gt: np.ndarray, pred: np.ndarray) -> float:
    """Distribution accuracy: 1 - sum of absolute hourly errors."""
    gt = np.asarray(gt, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if gt.shape != (N_HOURS,) or pred.shape != (N_HOURS,):
        raise ShapeError(f"expected two 24-vectors, got {gt.shape} and {pred.shape}")
    if abs(gt.sum() - 1.0) > DIST_SUM_TOL:
        raise ValueError(f"ground-truth distribution sums to {gt.sum()}, not 1")
    return 1.0 - float(np.abs(gt - pred).sum())


def _per_sample_accuracy(kind: str, Y: np.ndarray, raw_pred: np.ndarray):
    """Accuracies over rows; rows with undefined accuracy are excluded and counted."""
    if kind == "T":
        gt = Y[:, 0] if Y.ndim == 2 else Y
        pred = raw_pred[:, 0] if raw_pred.ndim == 2 else raw_pred
        ok = gt != 0
        accs = 1.0 - np.abs(gt[ok] - pred[ok]) / gt[ok]
        return accs, int((~ok).sum())
    dist = renormalize_distribution(raw_pred)
    ok = np.abs(Y.sum(axis=1) - 1.0) <= DIST_SUM_TOL
    accs = 1.0 - np.abs(Y[ok] - dist[ok]).sum(axis=1)
    return accs, int((~ok).sum())


def per_sample_accuracy(model, X, Y):
    """(accuracies, n_excluded) for any fitted estimator with the shared API."""
    raw = model.predict(X)
    return _per_sample_accuracy(model.kind, np.asarray(Y, dtype=float), np.asarray(raw))


def median_accuracy(model, X, Y) -> float:
    """Median per-sample accuracy; even counts average the middle two."""
    accs, _ = per_sample_accuracy(model, X, Y)
    if accs.size == 0:
        raise ZeroGroundTruth("no sample has a defined accuracy")
    return float(np.median(accs))


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


def kfold_partition(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition into k folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError("dataset smaller than k")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(np.sort(perm[start:start + size]))
        start += size
    return folds


def kfold_cv(X, Y, models: dict, k: int = 5, seed: int = 0) -> list[dict]:
    """Five-fold style evaluation of several estimators on one dataset.

    Every estimator sees the same seeded partition. Per model, the held-out
    per-sample accuracies from all folds are pooled and summarized by their
    median.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    folds = kfold_partition(X.shape[0], k, seed)
    results = []
    for label, proto in models.items():
        pooled = []
        excluded = 0
        for i in range(k):
            test_idx = folds[i]
            train_mask = np.ones(X.shape[0], dtype=bool)
            train_mask[test_idx] = False
            est = clone(proto)
            est.fit(X[train_mask], Y[train_mask])
            accs, exc = per_sample_accuracy(est, X[test_idx], Y[test_idx])
            pooled.append(accs)
            excluded += exc
        pooled = np.concatenate(pooled)
        results.append({
            "model": label,
            "median_accuracy": float(np.median(pooled)) if pooled.size else float("nan"),
            "excluded": excluded,
            "fold_sizes": [int(f.size) for f in folds],
        })
    return results


# ---------------------------------------------------------------------------
# Hybrid predictor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HybridPrediction:
    total_vht: float
    hourly_vht: np.ndarray
    proportions: np.ndarray

    def to_dict(self) -> dict:
        return {
            "total_vht": self.total_vht,
            "hourly_vht": [float(v) for v in self.hourly_vht],
            "proportions": [float(v) for v in self.proportions],
        }


def _norm_of(model) -> NormalizationInfo:
    info = getattr(model, "norm_info_", None)
    if info is None:
        raise NormMismatch("model carries no normalization info")
    return info


def predict_hybrid(model_t, model_d, env: np.ndarray) -> HybridPrediction:
    """Compose the two networks into absolute hourly VHT.

    The total network's output is denormalized to daily hours; the
    distribution network's output is renormalized to sum 1; hourly VHT is
    their product. Both models must share normalization constants.
    """
    info_t, info_d = _norm_of(model_t), _norm_of(model_d)
    if info_t.to_dict() != info_d.to_dict():
        raise NormMismatch("the two models were normalized against different datasets")
    env = np.asarray(env, dtype=float)
    if env.ndim == 1:
        env = env[None, :]
    if env.shape != (1, ENV_WIDTH):
        raise ShapeError(f"expected a 17-feature environment vector, got {env.shape}")
    total = denormalize_total(float(model_t.predict(env)[0]), info_t)
    proportions = model_d.predict_dist(env)[0]
    return HybridPrediction(total_vht=total, hourly_vht=total * proportions,
                            proportions=proportions)
