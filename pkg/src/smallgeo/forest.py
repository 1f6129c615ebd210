"""Random forest: bagged CART trees with Gini splits and majority voting.

Trees are stored as flat arrays (feature, threshold, left, right, leaf_class)
so that full-scene prediction vectorizes over all pixels at once and two runs
with the same seed serialize to identical bytes.  Split candidates are the
midpoints between consecutive sorted unique feature values; samples with
value < threshold go left.  Vote ties resolve to the smallest class id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError, InvalidInputError, ValidationError
from .labels import SampleSet


@dataclass
class Tree:
    """One decision tree as parallel node arrays; leaf nodes have feature -1."""

    feature: np.ndarray     # (m,) int32, -1 at leaves
    threshold: np.ndarray   # (m,) float32
    left: np.ndarray        # (m,) int32 child index, -1 at leaves
    right: np.ndarray       # (m,) int32
    leaf_class: np.ndarray  # (m,) int32 class id, -1 at internal nodes

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray          # ascending class ids
    mtry: int
    seed: int
    n_trees: int = 0
    min_leaf: int = 1
    max_depth: int | None = None

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int32)
        self.n_trees = self.n_trees or len(self.trees)
        d_seen = max((int(t.feature.max(initial=-1)) for t in self.trees), default=-1)
        self._class_pos = {int(c): i for i, c in enumerate(self.classes)}
        for t in self.trees:
            bad = set(np.unique(t.leaf_class[t.leaf_class >= 0])) - set(int(c) for c in self.classes)
            if bad:
                raise ValidationError(f"leaf class ids {sorted(bad)} not in model classes")
        self._max_feature = d_seen

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def predict(self, feature_vector) -> tuple[int, dict[int, int]]:
        return forest_predict(self, feature_vector)

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        return forest_predict_batch(self, features)


class _TreeBuilder:
    """Grows one tree depth-first; collects nodes in preorder."""

    def __init__(self, X, y_pos, classes, mtry, min_leaf, max_depth, rng):
        self.X = X
        self.y = y_pos              # class positions 0..k-1
        self.classes = classes
        self.k = len(classes)
        self.mtry = min(mtry, X.shape[1])
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.rng = rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaf_class: list[int] = []

    def build(self) -> Tree:
        self._grow(np.arange(len(self.y)), 0)
        return Tree(
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold, dtype=np.float32),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.leaf_class, dtype=np.int32),
        )

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_class.append(-1)
        return len(self.feature) - 1

    def _leaf(self, node: int, y: np.ndarray) -> None:
        counts = np.bincount(y, minlength=self.k)
        # argmax returns the first maximum: smallest class id wins ties
        self.leaf_class[node] = int(self.classes[int(np.argmax(counts))])

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        y = self.y[idx]
        pure = (y == y[0]).all()
        if (
            pure
            or len(idx) < 2 * self.min_leaf
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            self._leaf(node, y)
            return node
        feats = self.rng.choice(self.X.shape[1], size=self.mtry, replace=False)
        best_cost, best_f, best_t = np.inf, -1, 0.0
        for f in feats:
            cost, thr = self._best_split(self.X[idx, f], y)
            if cost < best_cost:
                best_cost, best_f, best_t = cost, int(f), thr
        if best_f < 0:
            self._leaf(node, y)
            return node
        goes_left = self.X[idx, best_f] < best_t
        self.feature[node] = best_f
        self.threshold[node] = best_t
        self.left[node] = self._grow(idx[goes_left], depth + 1)
        self.right[node] = self._grow(idx[~goes_left], depth + 1)
        return node

    def _best_split(self, v: np.ndarray, y: np.ndarray):
        """Weighted-Gini-minimizing midpoint threshold for one feature."""
        order = np.argsort(v, kind="stable")
        sv = v[order].astype(np.float64)
        sy = y[order]
        n = len(sv)
        boundary = np.nonzero(sv[:-1] != sv[1:])[0]
        if len(boundary) == 0:
            return np.inf, 0.0
        onehot = np.zeros((n, self.k))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        total = cum[-1]
        nl = (boundary + 1).astype(np.float64)
        nr = n - nl
        if self.min_leaf > 1:
            ok = (nl >= self.min_leaf) & (nr >= self.min_leaf)
            if not ok.any():
                return np.inf, 0.0
            boundary, nl, nr = boundary[ok], nl[ok], nr[ok]
        cl = cum[boundary]
        cr = total - cl
        gini_l = 1.0 - ((cl / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((cr / nr[:, None]) ** 2).sum(axis=1)
        cost = (nl * gini_l + nr * gini_r) / n
        j = int(np.argmin(cost))
        b = boundary[j]
        thr = float((sv[b] + sv[b + 1]) / 2.0)
        return float(cost[j]), thr


def train_forest(samples: SampleSet, n_trees: int = 100, mtry: int = 10,
                 min_leaf: int = 1, max_depth: int | None = None,
                 seed: int = 0) -> ForestModel:
    """Grow ``n_trees`` CART trees, each on a bootstrap resample of n rows.

    ``mtry`` features are drawn without replacement at every split (capped at
    the feature dimension).  Per-tree generators derive from the master seed,
    so training is deterministic and order-independent across trees.
    """
    classes = np.unique(samples.labels).astype(np.int32)
    if len(classes) < 2:
        raise DegenerateModelError(
            f"need at least 2 classes to train, got {[int(c) for c in classes]}"
        )
    X = samples.features.astype(np.float32)
    y_pos = np.searchsorted(classes, samples.labels).astype(np.int64)
    n = len(y_pos)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        boot = rng.integers(0, n, size=n)
        builder = _TreeBuilder(X[boot], y_pos[boot], classes, mtry, min_leaf, max_depth, rng)
        trees.append(builder.build())
    return ForestModel(trees, classes, mtry=min(mtry, X.shape[1]), seed=seed,
                       n_trees=n_trees, min_leaf=min_leaf, max_depth=max_depth)


def _check_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-D feature vector, got {x.ndim}-D")
    if not np.isfinite(x).all():
        raise InvalidInputError("feature vector contains NaN or infinity")
    return x


def forest_predict(model: ForestModel, feature_vector) -> tuple[int, dict[int, int]]:
    """Route the vector through every tree; returns (class id, votes per class)."""
    x = _check_vector(feature_vector)
    if model._max_feature >= len(x):
        raise InvalidInputError(
            f"vector has {len(x)} features but the model splits on index "
            f"{model._max_feature}"
        )
    counts = np.zeros(model.n_classes, dtype=np.int64)
    for tree in model.trees:
        node = 0
        while tree.feature[node] >= 0:
            if x[tree.feature[node]] < tree.threshold[node]:
                node = tree.left[node]
            else:
                node = tree.right[node]
        counts[model._class_pos[int(tree.leaf_class[node])]] += 1
    winner = int(model.classes[int(np.argmax(counts))])
    votes = {int(c): int(v) for c, v in zip(model.classes, counts)}
    return winner, votes


def forest_predict_batch(model: ForestModel, features: np.ndarray) -> np.ndarray:
    """Vectorized prediction for an (n, d) matrix; returns (n,) class ids."""
    X = np.asarray(features, dtype=np.float32)
    if X.ndim != 2:
        raise InvalidInputError("expected an (n, d) feature matrix")
    if not np.isfinite(X).all():
        raise InvalidInputError("feature matrix contains NaN or infinity")
    n = len(X)
    votes = np.zeros((n, model.n_classes), dtype=np.int32)
    class_pos = np.zeros(int(model.classes.max()) + 1, dtype=np.int64)
    for i, c in enumerate(model.classes):
        class_pos[int(c)] = i
    for tree in model.trees:
        node = np.zeros(n, dtype=np.int32)
        while True:
            f = tree.feature[node]
            active = np.nonzero(f >= 0)[0]
            if len(active) == 0:
                break
            fa = f[active]
            xa = X[active, fa]
            go_left = xa < tree.threshold[node[active]]
            node[active] = np.where(
                go_left, tree.left[node[active]], tree.right[node[active]]
            )
        votes[np.arange(n), class_pos[tree.leaf_class[node]]] += 1
    return model.classes[np.argmax(votes, axis=1)].astype(np.int32)
