"""Reference regressors: bagged CART forest and epsilon-insensitive linear SVR.

Both handle multi-output targets one dimension at a time and plug into the
same scoring harness as the neural networks (kind "T" scores totals, kind "D"
scores renormalized 24-hour distributions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import DivergenceError, ShapeError
from .nets import renormalize_distribution

N_HOURS = 24


# ---------------------------------------------------------------------------
# CART regression trees
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"v": self.value}
        return {"f": self.feature, "t": self.threshold,
                "l": self.left.to_dict(), "r": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "v" in d:
            return cls(value=float(d["v"]))
        return cls(feature=int(d["f"]), threshold=float(d["t"]),
                   left=cls.from_dict(d["l"]), right=cls.from_dict(d["r"]))


def best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """(sse, threshold) of the variance-minimizing split of one feature, or None.

    Scans every boundary between distinct sorted values with both sides
    holding at least min_leaf samples; thresholds sit at midpoints.
    """
    n = y.size
    if n < 2 * min_leaf:
        return None
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    sizes = np.arange(1, n)  # left-side sizes for split after position i-1
    valid = (sizes >= min_leaf) & (sizes <= n - min_leaf) & (xs[:-1] < xs[1:])
    if not valid.any():
        return None
    left_sse = csq[:-1] - csum[:-1] ** 2 / sizes
    right_cnt = n - sizes
    right_sum = csum[-1] - csum[:-1]
    right_sse = (csq[-1] - csq[:-1]) - right_sum**2 / right_cnt
    sse = np.where(valid, left_sse + right_sse, np.inf)
    i = int(np.argmin(sse))
    return float(sse[i]), float((xs[i] + xs[i + 1]) / 2.0)


def _grow(X, y, depth, max_depth, min_leaf, n_candidates, rng) -> TreeNode:
    if (max_depth is not None and depth >= max_depth) or y.size < 2 * min_leaf \
            or np.ptp(y) == 0.0:
        return TreeNode(value=float(y.mean()))
    n_features = X.shape[1]
    feats = rng.choice(n_features, size=min(n_candidates, n_features), replace=False)
    best = None
    for f in feats:
        cand = best_split(X[:, f], y, min_leaf)
        if cand is not None and (best is None or cand[0] < best[0]):
            best = (cand[0], int(f), cand[1])
    if best is None:
        return TreeNode(value=float(y.mean()))
    _, f, t = best
    mask = X[:, f] <= t
    return TreeNode(
        feature=f, threshold=t,
        left=_grow(X[mask], y[mask], depth + 1, max_depth, min_leaf, n_candidates, rng),
        right=_grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, n_candidates, rng),
    )


def _tree_predict(node: TreeNode, X: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] <= node.threshold
    _tree_predict(node.left, X, out, idx[mask])
    _tree_predict(node.right, X, out, idx[~mask])


def tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    _tree_predict(node, X, out, np.arange(X.shape[0]))
    return out


class ForestRegressor(BaseEstimator, RegressorMixin):
    """Bagged CART regression forest, one tree ensemble per output dimension.

    max_depth=None grows trees until leaves are pure or below min_leaf.
    Each (dimension, tree) pair owns a spawned RNG stream, so training is
    deterministic and could be parallelized over trees without changing
    results.
    """

    def __init__(self, n_trees=100, max_depth=5, min_leaf=5, feature_subsample=1 / 3,
                 bootstrap=True, kind="T", seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_subsample = feature_subsample
        self.bootstrap = bootstrap
        self.kind = kind
        self.seed = seed

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] == 0:
            raise ShapeError("cannot fit on an empty dataset")
        n, d = X.shape
        m = Y.shape[1]
        n_candidates = max(1, int(round(self.feature_subsample * d)))
        streams = np.random.SeedSequence(self.seed).spawn(m * self.n_trees)
        self.trees_ = []
        for dim in range(m):
            ensemble = []
            for t in range(self.n_trees):
                rng = np.random.default_rng(streams[dim * self.n_trees + t])
                idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
                ensemble.append(_grow(X[idx], Y[idx, dim], 0, self.max_depth,
                                      self.min_leaf, n_candidates, rng))
            self.trees_.append(ensemble)
        self.n_features_ = d
        self.n_outputs_ = m
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise ShapeError(f"expected {self.n_features_} features, got {X.shape[1]}")
        cols = []
        for ensemble in self.trees_:
            acc = np.zeros(X.shape[0])
            for node in ensemble:
                acc += tree_predict(node, X)
            cols.append(acc / len(ensemble))
        out = np.column_stack(cols)
        return out[:, 0] if self.n_outputs_ == 1 else out

    def predict_dist(self, X) -> np.ndarray:
        if self.kind != "D":
            raise ShapeError("predict_dist is only defined for kind 'D'")
        return renormalize_distribution(self.predict(X))


# ---------------------------------------------------------------------------
# Linear SVR by subgradient descent
# ---------------------------------------------------------------------------


def svr_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                  epsilon: float, c_penalty: float) -> float:
    """0.5 * ||w||^2 / c_penalty + mean epsilon-insensitive loss."""
    r = X @ w + b - y
    hinge = np.maximum(0.0, np.abs(r) - epsilon)
    return float(0.5 * w @ w / c_penalty + hinge.mean())


class LinearSvrRegressor(BaseEstimator, RegressorMixin):
    """Linear model under epsilon-insensitive loss plus an L2 penalty.

    Full-batch subgradient descent; lr_decay "sqrt" scales the step by
    1/sqrt(1+t), "linear" by 1/(1+0.01*t), "none" keeps it fixed. One
    independent model per output dimension.
    """

    def __init__(self, epsilon=0.01, c_penalty=1.0, learning_rate=0.1, epochs=500,
                 lr_decay="sqrt", kind="T", seed=0):
        self.epsilon = epsilon
        self.c_penalty = c_penalty
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.lr_decay = lr_decay
        self.kind = kind
        self.seed = seed

    def fit(self, X, Y):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] == 0:
            raise ShapeError("cannot fit on an empty dataset")
        n, d = X.shape
        m = Y.shape[1]
        W = np.zeros((m, d))
        b = np.zeros(m)
        for t in range(self.epochs):
            lr = self.learning_rate
            if self.lr_decay == "sqrt":
                lr = lr / np.sqrt(1.0 + t)
            elif self.lr_decay == "linear":
                lr = lr / (1.0 + 0.01 * t)
            r = X @ W.T + b - Y  # (n, m)
            s = np.sign(r) * (np.abs(r) > self.epsilon)
            W -= lr * (W / self.c_penalty + s.T @ X / n)
            b -= lr * s.mean(axis=0)
            if not np.isfinite(W).all() or not np.isfinite(b).all():
                raise DivergenceError(f"SVR parameters became non-finite at epoch {t}")
        self.W_ = W
        self.b_ = b
        self.n_features_ = d
        self.n_outputs_ = m
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise ShapeError(f"expected {self.n_features_} features, got {X.shape[1]}")
        out = X @ self.W_.T + self.b_
        return out[:, 0] if self.n_outputs_ == 1 else out

    def predict_dist(self, X) -> np.ndarray:
        if self.kind != "D":
            raise ShapeError("predict_dist is only defined for kind 'D'")
        return renormalize_distribution(self.predict(X))

    def objective(self, X, Y) -> float:
        """Current value of the training objective (summed over output dims)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        return sum(
            svr_objective(self.W_[j], self.b_[j], X, Y[:, j], self.epsilon, self.c_penalty)
            for j in range(self.n_outputs_)
        )
