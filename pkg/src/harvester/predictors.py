"""Frontier scoring: the MTN heuristic and classical classifiers.

Classical predictors consume feature vectors (see :mod:`harvester.features`)
and return a score in [0, 1].  The k-nearest-neighbor and random-forest
classifiers are written directly on numpy.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .graph import CrawlState


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    source: str = "boosted"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=bool)
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be (n_samples, dim) and match y")

    def __len__(self) -> int:
        return len(self.y)

    def fingerprint(self) -> str:
        h = hashlib.sha1(self.X.tobytes())
        h.update(self.y.tobytes())
        return h.hexdigest()[:16]


def mtn_score(state: CrawlState, v) -> np.ndarray | int:
    """Number of crawled target neighbors; raw count, only compared by argmax."""
    out = state.target_nbrs[v]
    return int(out) if np.ndim(out) == 0 else out.copy()


def _check_dim(model_dim: int, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model_dim:
        raise ValueError(f"dimension mismatch: model expects {model_dim}, got {X.shape[1]}")
    return X


@dataclass
class KNNModel:
    """Exact k nearest neighbors under Euclidean distance.

    Distance ties are broken by lower training-sample index.
    """

    X: np.ndarray
    y: np.ndarray
    k: int
    fingerprint: str = ""
    kind: str = field(default="KNN", init=False)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def neighbors(self, X) -> np.ndarray:
        X = _check_dim(self.dim, X)
        out = np.empty((len(X), self.k), dtype=np.int64)
        # chunked to bound the (queries x samples x dim) temporary
        step = max(1, 2_000_000 // max(1, len(self.X) * self.dim))
        for i in range(0, len(X), step):
            diff = X[i:i + step, None, :] - self.X[None, :, :]
            dist = np.einsum("qsd,qsd->qs", diff, diff)
            order = np.argsort(dist, axis=1, kind="stable")
            out[i:i + step] = order[:, :self.k]
        return out

    def score(self, X) -> np.ndarray:
        return self.y[self.neighbors(X)].mean(axis=1)


def knn_train(data: TrainingSet, k: int = 30) -> KNNModel:
    if len(data) == 0:
        raise ValueError("empty training set")
    return KNNModel(data.X.copy(), data.y.astype(np.float64), min(k, len(data)), data.fingerprint())


def knn_score(model: KNNModel, x) -> float | np.ndarray:
    s = model.score(x)
    return float(s[0]) if np.ndim(x) == 1 else s


@dataclass
class Tree:
    """Flat binary tree; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # fraction of target samples in the node

    def leaf_values(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray, max_features: int):
    """Gini-optimal (feature, threshold) over the first ``max_features`` usable features.

    Features that are constant on the node do not count towards the quota,
    so a split is found whenever any feature can separate the samples.
    """
    n = len(y)
    best = (np.inf, -1, 0.0)
    tried = 0
    total_pos = y.sum()
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        if xs[0] == xs[-1]:
            continue
        tried += 1
        ys = y[order]
        left_pos = np.cumsum(ys)[:-1]
        left_n = np.arange(1, n)
        valid = xs[1:] != xs[:-1]
        right_pos = total_pos - left_pos
        right_n = n - left_n
        pl = left_pos / left_n
        pr = right_pos / right_n
        gini = (left_n * (1 - pl ** 2 - (1 - pl) ** 2) + right_n * (1 - pr ** 2 - (1 - pr) ** 2)) / n
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if gini[i] < best[0]:
            best = (gini[i], int(f), (xs[i] + xs[i + 1]) / 2)
        if tried == max_features:
            break
    return best[1], best[2]


def build_tree(X: np.ndarray, y: np.ndarray, max_features: int, rng: np.random.Generator) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        ys = y[idx]
        if ys.all() or not ys.any():
            continue
        f, thr = _best_split(X[idx], ys, rng.permutation(X.shape[1]), max_features)
        if f < 0:
            continue
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature), np.array(threshold), np.array(left),
                np.array(right), np.array(value))


@dataclass
class ForestModel:
    trees: list[Tree]
    dim: int
    fingerprint: str = ""
    constant: float | None = None
    kind: str = field(default="RF", init=False)

    def votes(self, X) -> np.ndarray:
        """(n_trees, n) matrix of 0/1 target votes."""
        X = _check_dim(self.dim, X)
        return np.array([t.leaf_values(X) > 0.5 for t in self.trees], dtype=np.float64)

    def score(self, X) -> np.ndarray:
        if self.constant is not None:
            X = _check_dim(self.dim, X)
            return np.full(len(X), self.constant)
        return self.votes(X).mean(axis=0)


def rf_train(data: TrainingSet, n_trees: int = 100, rng_seed=0) -> ForestModel:
    """Bagged Gini trees grown to purity over sqrt(dim) candidate features per split."""
    if len(data) == 0:
        raise ValueError("empty training set")
    X, y = data.X, data.y.astype(np.float64)
    dim = X.shape[1]
    if y.all() or not y.any():
        return ForestModel([], dim, data.fingerprint(), constant=float(y[0]))
    rng = np.random.default_rng(rng_seed)
    max_features = max(1, int(np.sqrt(dim)))
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, len(y), len(y))
        trees.append(build_tree(X[boot], y[boot], max_features, rng))
    return ForestModel(trees, dim, data.fingerprint())


def rf_score(model: ForestModel, x) -> float | np.ndarray:
    s = model.score(x)
    return float(s[0]) if np.ndim(x) == 1 else s
