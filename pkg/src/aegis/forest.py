"""Random-forest classifier built from scratch on CART trees.

Used in two roles: ranking state dimensions by mean decrease in Gini impurity
(to shrink the attack search space) and as one of the two detector backends.
Trees split on Gini impurity with sqrt(d) feature candidates per split and
bootstrap resampling; an optional balanced bootstrap equalizes class draws
for heavily imbalanced safe/unsafe data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ForestError(ValueError):
    pass


@dataclass
class LabeledDataset:
    """Feature rows with binary labels (0 = safe, 1 = unsafe)."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ForestError(f"features must be 2-D, got {self.features.shape}")
        if len(self.features) != len(self.labels):
            raise ForestError("features and labels must have equal length")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ForestError("labels must be 0 (safe) or 1 (unsafe)")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self):
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))


class _Tree:
    """Array-encoded binary tree; feature == -1 marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.counts = []  # per-node [n_safe, n_unsafe]

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=int)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=int)
        self.right = np.asarray(self.right, dtype=int)
        self.counts = np.asarray(self.counts, dtype=float)


def _gini(counts) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(X, y, feat_candidates):
    """Return (feature, threshold, gini_decrease_weighted) or None."""
    n = len(y)
    parent_counts = np.array([np.sum(y == 0), np.sum(y == 1)], dtype=float)
    parent_gini = _gini(parent_counts)
    if parent_gini == 0.0:
        return None
    best = None
    for f in feat_candidates:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        # splits allowed only between distinct consecutive values
        distinct = np.nonzero(np.diff(xs))[0]
        if len(distinct) == 0:
            continue
        ones = np.cumsum(ys == 1)
        left_n = distinct + 1
        left_ones = ones[distinct].astype(float)
        left_zeros = left_n - left_ones
        right_n = n - left_n
        right_ones = ones[-1] - left_ones
        right_zeros = right_n - right_ones
        gini_l = 1.0 - ((left_ones / left_n) ** 2 + (left_zeros / left_n) ** 2)
        gini_r = 1.0 - ((right_ones / right_n) ** 2
                        + (right_zeros / right_n) ** 2)
        weighted = (left_n * gini_l + right_n * gini_r) / n
        k = int(np.argmin(weighted))
        decrease = parent_gini - weighted[k]
        if decrease > 1e-12 and (best is None or decrease > best[2]):
            thr = 0.5 * (xs[distinct[k]] + xs[distinct[k] + 1])
            best = (f, float(thr), float(decrease))
    return best


def _grow_tree(X, y, max_depth, rng, importance, n_total):
    tree = _Tree()
    d = X.shape[1]
    k = max(1, int(np.sqrt(d)))

    def new_node(rows):
        idx = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.counts.append([float(np.sum(y[rows] == 0)),
                            float(np.sum(y[rows] == 1))])
        return idx

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or len(rows) < 2:
            continue
        cand = rng.choice(d, size=k, replace=False)
        split = _best_split(X[rows], y[rows], cand)
        if split is None:
            continue
        f, thr, decrease = split
        go_left = X[rows, f] <= thr
        left_rows = rows[go_left]
        right_rows = rows[~go_left]
        if len(left_rows) == 0 or len(right_rows) == 0:
            continue
        importance[f] += decrease * len(rows) / n_total
        tree.feature[node] = f
        tree.threshold[node] = thr
        li = new_node(left_rows)
        ri = new_node(right_rows)
        tree.left[node] = li
        tree.right[node] = ri
        stack.append((li, left_rows, depth + 1))
        stack.append((ri, right_rows, depth + 1))
    tree.finalize()
    return tree


@dataclass
class RandomForest:
    trees: list
    importances: np.ndarray
    n_features: int
    feature_names: list


def rf_train(data: LabeledDataset, n_trees: int = 100, max_depth: int = 50,
             seed=0, balanced: bool = False) -> RandomForest:
    """Train on bootstrap samples; importances are normalized to sum to 1."""
    n_safe, n_unsafe = data.class_counts()
    if n_safe == 0 or n_unsafe == 0:
        raise ForestError("training data must contain both classes")
    X, y = data.features, data.labels
    n = len(y)
    ss = np.random.SeedSequence(seed)
    importance_sum = np.zeros(data.n_features)
    trees = []
    idx_safe = np.flatnonzero(y == 0)
    idx_unsafe = np.flatnonzero(y == 1)
    for child in ss.spawn(n_trees):
        rng = np.random.default_rng(child)
        if balanced:
            half = max(1, n // 2)
            boot = np.concatenate([rng.choice(idx_safe, size=half),
                                   rng.choice(idx_unsafe, size=n - half)])
        else:
            boot = rng.integers(0, n, size=n)
        imp = np.zeros(data.n_features)
        tree = _grow_tree(X[boot], y[boot], max_depth, rng, imp, len(boot))
        s = imp.sum()
        if s > 0:
            importance_sum += imp / s
        trees.append(tree)
    importances = importance_sum / n_trees
    total = importances.sum()
    if total > 0:
        importances = importances / total
    return RandomForest(trees=trees, importances=importances,
                        n_features=data.n_features,
                        feature_names=list(data.feature_names))


def _tree_leaf_nodes(tree: _Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=int)
    while True:
        feats = tree.feature[node]
        active = feats >= 0
        if not active.any():
            return node
        rows = np.flatnonzero(active)
        f = feats[rows]
        thr = tree.threshold[node[rows]]
        goes_left = X[rows, f] <= thr
        node[rows[goes_left]] = tree.left[node[rows[goes_left]]]
        node[rows[~goes_left]] = tree.right[node[rows[~goes_left]]]


def rf_predict_proba(rf: RandomForest, X) -> np.ndarray:
    """(n, 2) array of [score_safe, score_unsafe]; rows sum to 1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    acc = np.zeros((len(X), 2))
    for tree in rf.trees:
        leaves = _tree_leaf_nodes(tree, X)
        counts = tree.counts[leaves]
        acc += counts / counts.sum(axis=1, keepdims=True)
    return acc / len(rf.trees)


def rf_predict_scores(rf: RandomForest, x):
    """(score_safe, score_unsafe) for a single state."""
    p = rf_predict_proba(rf, np.asarray(x, dtype=float)[None, :])[0]
    return float(p[0]), float(p[1])


def select_top_features(rf: RandomForest, fraction: float) -> list:
    """Indices of the ceil(fraction * d) most important features.

    Ordered by descending importance; ties broken toward the lower index.
    """
    if not 0.0 < fraction <= 1.0:
        raise ForestError(f"fraction must lie in (0, 1], got {fraction}")
    k = int(np.ceil(fraction * rf.n_features))
    order = np.argsort(-rf.importances, kind="stable")
    return [int(i) for i in order[:k]]


def importance_report(rf: RandomForest) -> list:
    """(name, importance) pairs sorted by descending importance."""
    order = np.argsort(-rf.importances, kind="stable")
    return [(rf.feature_names[i], float(rf.importances[i])) for i in order]
