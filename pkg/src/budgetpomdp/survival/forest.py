"""Random-forest regression of the curve steepness beta from component features."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractViolation, ParameterError, SchemaError
from ..model import ComponentSpec

FEATURE_NAMES = ("weibull_shape", "weibull_scale", "repair_cost", "inspect_cost")
FOREST_SCHEMA = "budgetpomdp.forest/1"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    max_features: int | None = 2  # features tried per split; None = all

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ParameterError("need n_trees >= 1, max_depth >= 0, min_leaf >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ParameterError("max_features must be >= 1")


@dataclass
class RegressionTree:
    """Array-encoded binary tree; ``feature[i] == -1`` marks a leaf.

    Internal node ``i`` sends ``x[feature[i]] <= threshold[i]`` to ``left[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            go_left = X[rows[inner], feat[inner]] <= self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> RegressionTree:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )

    @classmethod
    def leaf(cls, value: float) -> RegressionTree:
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(value)]))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int, features):
    """Split over ``features`` maximizing the drop in summed squared error, or ``None``."""
    n = len(y)
    best_gain, best = 1e-12 * max(float(np.var(y)) * n, 1e-300), None
    total, total_sq = y.sum(), float(y @ y)
    base = total_sq - total * total / n
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)[:-1]
        csq = np.cumsum(ys * ys)[:-1]
        n_left = np.arange(1, n)
        n_right = n - n_left
        sse = (csq - csum**2 / n_left) + ((total_sq - csq) - (total - csum) ** 2 / n_right)
        valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        gain = base - sse[i]
        if gain > best_gain:
            best_gain, best = gain, (f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_leaf: int,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """CART regression tree with variance-reduction splits and mean leaves.

    With ``max_features`` each node searches a random subset of that many
    features (drawn from ``rng``).
    """
    n_feat = X.shape[1]
    k = n_feat if max_features is None else min(max_features, n_feat)
    if k < n_feat and rng is None:
        raise ParameterError("feature subsampling needs a generator")
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ys = y[idx]
        constant = ys.min() == ys.max()
        value.append(float(ys[0] if constant else np.mean(ys)))
        if constant or depth >= max_depth or len(idx) < 2 * min_leaf:
            return node
        features = range(n_feat) if k == n_feat else np.sort(rng.choice(n_feat, size=k, replace=False))
        split = _best_split(X[idx], y[idx], min_leaf, features)
        if split is None:
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
    )


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    feature_names: tuple[str, ...] = FEATURE_NAMES
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        if not self.trees:
            raise ParameterError("a forest needs at least one tree")

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Unclamped mean of the tree outputs."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ContractViolation(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self) -> dict:
        return {
            "schema": FOREST_SCHEMA,
            "feature_names": list(self.feature_names),
            "metadata": self.metadata,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForestModel:
        if d.get("schema") != FOREST_SCHEMA:
            raise SchemaError(f"expected forest schema {FOREST_SCHEMA!r}, got {d.get('schema')!r}")
        return cls([RegressionTree.from_dict(t) for t in d["trees"]], tuple(d["feature_names"]), d.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> ForestModel:
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_forest(dataset: Sequence[tuple[Sequence[float], float]], cfg: ForestConfig = ForestConfig(), seed: int = 0) -> ForestModel:
    """CART trees grown on bootstrap resamples, with a random feature subset per split."""
    if len(dataset) == 0:
        raise ParameterError("training set is empty")
    X = np.asarray([list(f) for f, _ in dataset], dtype=float)
    y = np.asarray([t for _, t in dataset], dtype=float)
    if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
        raise ParameterError(f"each row needs the features {FEATURE_NAMES}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ParameterError("features and targets must be finite")
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    for _ in range(cfg.n_trees):
        idx = rng.integers(0, n, size=n)
        trees.append(fit_tree(X[idx], y[idx], cfg.max_depth, cfg.min_leaf, cfg.max_features, rng))
    meta = {**asdict(cfg), "seed": seed, "n_samples": n}
    return ForestModel(trees, FEATURE_NAMES, meta)


def predict_beta(model: ForestModel, spec: ComponentSpec) -> float:
    if model.feature_names != FEATURE_NAMES:
        raise ContractViolation(f"forest was trained on {model.feature_names}, expected {FEATURE_NAMES}")
    return min(float(model.predict_raw(np.asarray([spec.features()]))[0]), 0.0)


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=float)
    ss_res = float(np.sum((y_true - np.asarray(y_pred)) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float(ss_res == 0)
