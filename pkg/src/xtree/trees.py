"""Tree-structured classifiers stored as explicit node arrays.

A greedy CART decision tree, a bootstrap random forest, and a softmax
Newton-boosting ensemble of regression trees.  Models keep their split
structure in flat arrays (feature index, threshold, child pointers, class
counts, leaf values) so the explainer and the export renderer can walk
them directly.

Determinism contract: splits are chosen by scanning candidate features in
ascending index order and accepting strictly better scores only, so ties
resolve to the lowest feature index and smallest threshold.  All
randomness (bootstraps, feature subsets, per-class boosting) flows from
seed-derived streams consumed in a fixed preorder walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import scan_split_classification, scan_split_regression
from .dataio import FeatureMatrix
from .metrics import stratified_kfold_indices
from .rng import generator

LEAF = -1

_GH_EPS = 1e-6  # floor on boosting hessians when forming ratio targets


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = 10
    min_samples_split: int = 4
    criterion: str = "gini"
    seed: int = 0
    laplace_smoothing: bool = False

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 (or None for unlimited)")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.criterion != "gini":
            raise ValueError(f"unsupported criterion {self.criterion!r}")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    tree: TreeParams = field(default_factory=TreeParams)
    features_per_split: int | None = None  # None = ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


@dataclass(frozen=True)
class GbdtParams:
    n_iterations: int = 500
    learning_rate: float = 0.1
    depth: int = 6
    l2_leaf_reg: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.l2_leaf_reg < 0.0:
            raise ValueError("l2_leaf_reg must be >= 0")


def gini_impurity(counts) -> float:
    """1 - sum(p^2) over class proportions; 0 for a pure node."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


class _NodeArrays:
    """Append-only builder for the flat node representation."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.n_samples = []
        self.payload = []  # class counts (classification) or leaf value (regression)

    def add(self, feature, threshold, n_samples, payload) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.n_samples.append(n_samples)
        self.payload.append(payload)
        return len(self.feature) - 1


def _candidate_features(d: int, rng, features_per_split: int | None) -> np.ndarray:
    if rng is None or features_per_split is None or features_per_split >= d:
        return np.arange(d, dtype=np.int64)
    picked = rng.choice(d, size=features_per_split, replace=False)
    return np.sort(picked)


def _best_split(X, rows, candidates, scan, target):
    """Scan candidate features ascending; return (feature, threshold) or None."""
    best = None
    best_score = -np.inf
    for j in candidates:
        col = X[rows, j]
        order = np.argsort(col, kind="stable")
        found = scan(np.ascontiguousarray(col[order]), *target(order))
        if found is None:
            continue
        score, threshold, _n_left = found
        if score > best_score:
            best_score = score
            best = (int(j), float(threshold))
    return best


class TreeModel:
    """Fitted CART classification tree as flat node arrays."""

    kind = "decision_tree"

    def __init__(self, feature_index, threshold, left, right, n_samples,
                 class_counts, value, feature_names, class_names, params):
        self.feature_index = np.asarray(feature_index, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.class_counts = np.asarray(class_counts, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.feature_names = tuple(feature_names)
        self.class_names = tuple(class_names)
        self.params = params

    @property
    def n_nodes(self) -> int:
        return self.feature_index.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature_index[node] == LEAF

    def node_depths(self) -> np.ndarray:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        stack = [(0, 0)]
        while stack:
            node, depth = stack.pop()
            depths[node] = depth
            if not self.is_leaf(node):
                stack.append((int(self.right[node]), depth + 1))
                stack.append((int(self.left[node]), depth + 1))
        return depths

    def depth(self) -> int:
        return int(self.node_depths().max())

    def apply(self, V: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        V = _as_values(V, len(self.feature_names))
        node = np.zeros(V.shape[0], dtype=np.int64)
        while True:
            feats = self.feature_index[node]
            active = np.flatnonzero(feats >= 0)
            if active.size == 0:
                return node
            cur = node[active]
            go_left = V[active, feats[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def predict_proba(self, V) -> np.ndarray:
        return self.value[self.apply(V)]

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.predict_proba(V), axis=1)

    def to_payload(self) -> dict:
        return {
            "feature_index": self.feature_index.tolist(),
            "threshold": _thresholds_out(self.threshold),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_samples": self.n_samples.tolist(),
            "class_counts": self.class_counts.tolist(),
            "value": [[float(v) for v in row] for row in self.value],
        }

    @classmethod
    def from_payload(cls, payload, feature_names, class_names, params) -> "TreeModel":
        return cls(
            payload["feature_index"], _thresholds_in(payload["threshold"]),
            payload["left"], payload["right"], payload["n_samples"],
            payload["class_counts"], payload["value"],
            feature_names, class_names, params,
        )


def _as_values(X, n_features: int) -> np.ndarray:
    values = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != n_features:
        raise ValueError(
            f"expected {n_features} feature columns, got shape {values.shape}"
        )
    return values


def _thresholds_out(thresholds) -> list:
    # leaf thresholds are NaN; serialize as null so model files stay valid JSON
    return [float(v) if math.isfinite(v) else None for v in thresholds]


def _thresholds_in(raw) -> list:
    return [math.nan if v is None else float(v) for v in raw]


def _grow_classification(X, y, n_classes, max_depth, min_samples_split,
                         rng=None, features_per_split=None):
    arrays = _NodeArrays()
    depth_cap = math.inf if max_depth is None else max_depth
    stack = [(np.arange(X.shape[0], dtype=np.int64), 0, -1, False)]
    while stack:
        rows, depth, parent, as_right = stack.pop()
        counts = np.bincount(y[rows], minlength=n_classes)
        node = arrays.add(LEAF, math.nan, rows.size, counts)
        if parent >= 0:
            if as_right:
                arrays.right[parent] = node
            else:
                arrays.left[parent] = node
        pure = counts.max() == rows.size
        if pure or depth >= depth_cap or rows.size < min_samples_split:
            continue
        candidates = _candidate_features(X.shape[1], rng, features_per_split)
        y_rows = y[rows]
        split = _best_split(
            X, rows, candidates, scan_split_classification,
            lambda order, yr=y_rows: (np.ascontiguousarray(yr[order]), n_classes),
        )
        if split is None:
            continue
        j, threshold = split
        arrays.feature[node] = j
        arrays.threshold[node] = threshold
        go_left = X[rows, j] <= threshold
        stack.append((rows[~go_left], depth + 1, node, True))
        stack.append((rows[go_left], depth + 1, node, False))
    return arrays


def fit_cart(X: FeatureMatrix, params: TreeParams,
             rng=None, features_per_split=None, sample_rows=None) -> TreeModel:
    """Grow a greedy Gini CART tree on a feature matrix.

    ``rng``/``features_per_split``/``sample_rows`` are forest hooks: a
    per-split feature subset drawn from ``rng`` and an optional bootstrap
    row selection.
    """
    if X.n_rows == 0:
        raise ValueError("cannot fit a tree on an empty matrix")
    values = X.values
    labels = X.labels
    if sample_rows is not None:
        values = values[sample_rows]
        labels = labels[sample_rows]
    arrays = _grow_classification(
        values, labels, X.n_classes, params.max_depth, params.min_samples_split,
        rng=rng, features_per_split=features_per_split,
    )
    counts = np.asarray(arrays.payload, dtype=np.int64)
    smoothed = counts + 1 if params.laplace_smoothing else counts
    value = smoothed / smoothed.sum(axis=1, keepdims=True)
    return TreeModel(
        feature_index=arrays.feature, threshold=arrays.threshold,
        left=arrays.left, right=arrays.right, n_samples=arrays.n_samples,
        class_counts=counts, value=value,
        feature_names=X.feature_names, class_names=X.class_names, params=params,
    )


def predict_proba(model, X) -> np.ndarray:
    """Per-row per-class probabilities from any fitted model."""
    return model.predict_proba(X)


def predict(model, X) -> np.ndarray:
    """Class labels: argmax of predict_proba with lowest-index tie-break."""
    return model.predict(X)


class ForestModel:
    """Bootstrap ensemble of CART trees; probabilities are tree means."""

    kind = "random_forest"

    def __init__(self, trees, feature_names, class_names, params):
        self.trees = list(trees)
        self.feature_names = tuple(feature_names)
        self.class_names = tuple(class_names)
        self.params = params

    def predict_proba(self, V) -> np.ndarray:
        total = self.trees[0].predict_proba(V).copy()
        for tree in self.trees[1:]:
            total += tree.predict_proba(V)
        return total / len(self.trees)

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.predict_proba(V), axis=1)

    def to_payload(self) -> dict:
        return {"trees": [t.to_payload() for t in self.trees]}


def fit_random_forest(X: FeatureMatrix, params: ForestParams) -> ForestModel:
    """Fit ``n_trees`` CART trees on bootstrap resamples.

    Each tree draws its bootstrap and per-split feature subsets from its
    own stream derived from the master seed and the tree index, so the
    forest is identical however the trees are scheduled.
    """
    if X.n_rows == 0:
        raise ValueError("cannot fit a forest on an empty matrix")
    d = X.n_features
    k = params.features_per_split
    if k is None:
        k = math.ceil(math.sqrt(d))
    trees = []
    for t in range(params.n_trees):
        rng = generator(params.seed, "trees", "forest", t)
        sample = rng.integers(0, X.n_rows, size=X.n_rows) if params.bootstrap else None
        trees.append(fit_cart(X, params.tree, rng=rng, features_per_split=k,
                              sample_rows=sample))
    return ForestModel(trees, X.feature_names, X.class_names, params)


class RegressionTree:
    """Regression tree inside the boosting ensemble; leaf values are scores."""

    def __init__(self, feature_index, threshold, left, right, n_samples, value):
        self.feature_index = np.asarray(feature_index, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)

    def predict(self, V: np.ndarray) -> np.ndarray:
        node = np.zeros(V.shape[0], dtype=np.int64)
        while True:
            feats = self.feature_index[node]
            active = np.flatnonzero(feats >= 0)
            if active.size == 0:
                return self.value[node]
            cur = node[active]
            go_left = V[active, feats[active]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])

    def to_payload(self) -> dict:
        return {
            "feature_index": self.feature_index.tolist(),
            "threshold": _thresholds_out(self.threshold),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "n_samples": self.n_samples.tolist(),
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_payload(cls, payload) -> "RegressionTree":
        return cls(payload["feature_index"], _thresholds_in(payload["threshold"]),
                   payload["left"], payload["right"], payload["n_samples"],
                   payload["value"])


def _grow_regression(X, targets, g, h, max_depth, min_samples_split, l2_leaf_reg):
    arrays = _NodeArrays()
    stack = [(np.arange(X.shape[0], dtype=np.int64), 0, -1, False)]
    while stack:
        rows, depth, parent, as_right = stack.pop()
        leaf_value = -g[rows].sum() / (h[rows].sum() + l2_leaf_reg)
        node = arrays.add(LEAF, math.nan, rows.size, leaf_value)
        if parent >= 0:
            if as_right:
                arrays.right[parent] = node
            else:
                arrays.left[parent] = node
        if depth >= max_depth or rows.size < min_samples_split:
            continue
        t_rows = targets[rows]
        if np.all(t_rows == t_rows[0]):
            continue
        split = _best_split(
            X, rows, np.arange(X.shape[1], dtype=np.int64), scan_split_regression,
            lambda order, tr=t_rows: (np.ascontiguousarray(tr[order]),),
        )
        if split is None:
            continue
        j, threshold = split
        arrays.feature[node] = j
        arrays.threshold[node] = threshold
        go_left = X[rows, j] <= threshold
        stack.append((rows[~go_left], depth + 1, node, True))
        stack.append((rows[go_left], depth + 1, node, False))
    return arrays


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class GbdtModel:
    """Softmax Newton-boosting ensemble: one regression tree per class per round."""

    kind = "gbdt"

    def __init__(self, rounds, feature_names, class_names, params, loss_trace=None):
        self.rounds = [list(r) for r in rounds]  # rounds[i][c] -> RegressionTree
        self.feature_names = tuple(feature_names)
        self.class_names = tuple(class_names)
        self.params = params
        self.loss_trace = list(loss_trace or [])

    def decision_scores(self, V) -> np.ndarray:
        V = _as_values(V, len(self.feature_names))
        scores = np.zeros((V.shape[0], len(self.class_names)))
        for round_trees in self.rounds:
            for c, tree in enumerate(round_trees):
                scores[:, c] += self.params.learning_rate * tree.predict(V)
        return scores

    def predict_proba(self, V) -> np.ndarray:
        return _softmax(self.decision_scores(V))

    def predict(self, V) -> np.ndarray:
        return np.argmax(self.predict_proba(V), axis=1)

    def to_payload(self) -> dict:
        return {
            "rounds": [[t.to_payload() for t in r] for r in self.rounds],
            "loss_trace": [float(v) for v in self.loss_trace],
        }


def fit_gbdt(X: FeatureMatrix, params: GbdtParams) -> GbdtModel:
    """Newton softmax boosting of depth-bounded regression trees.

    Per round and class: gradient ``g = p - 1{y=c}`` and hessian
    ``h = p(1-p)`` of the multiclass log-loss; a regression tree is grown
    on the ratio targets ``g/h`` by variance reduction and its leaves are
    set to ``-sum(g) / (sum(h) + l2_leaf_reg)``; class scores advance by
    ``learning_rate`` times the tree output.
    """
    if X.n_rows == 0:
        raise ValueError("cannot fit a boosted ensemble on an empty matrix")
    values = X.values
    n, k = X.n_rows, X.n_classes
    onehot = np.zeros((n, k))
    onehot[np.arange(n), X.labels] = 1.0
    scores = np.zeros((n, k))
    rounds = []
    loss_trace = []
    for _ in range(params.n_iterations):
        p = _softmax(scores)
        loss_trace.append(float(-np.log(np.clip(p[np.arange(n), X.labels],
                                                1e-300, None)).mean()))
        round_trees = []
        for c in range(k):
            g = p[:, c] - onehot[:, c]
            h = p[:, c] * (1.0 - p[:, c])
            targets = g / np.maximum(h, _GH_EPS)
            arrays = _grow_regression(values, targets, g, h, params.depth, 2,
                                      params.l2_leaf_reg)
            tree = RegressionTree(
                feature_index=arrays.feature, threshold=arrays.threshold,
                left=arrays.left, right=arrays.right,
                n_samples=arrays.n_samples, value=arrays.payload,
            )
            scores[:, c] += params.learning_rate * tree.predict(values)
            round_trees.append(tree)
        rounds.append(round_trees)
    return GbdtModel(rounds, X.feature_names, X.class_names, params, loss_trace)


def grid_search_tree(X: FeatureMatrix, grid, k: int = 5, seed: int = 0):
    """Pick tree hyperparameters by stratified k-fold CV accuracy.

    Ties break toward the smaller ``max_depth``, then the larger
    ``min_samples_split``.  Returns the winning params and a per-candidate
    table of fold accuracies.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("hyperparameter grid must be non-empty")
    folds = stratified_kfold_indices(X.labels, k, seed)
    table = []
    for params in grid:
        fold_acc = []
        for test_rows in folds:
            train_mask = np.ones(X.n_rows, dtype=bool)
            train_mask[test_rows] = False
            model = fit_cart(X.take_rows(np.flatnonzero(train_mask)), params)
            pred = model.predict(X.values[test_rows])
            fold_acc.append(float((pred == X.labels[test_rows]).mean()))
        table.append({
            "params": params,
            "fold_accuracies": fold_acc,
            "mean_accuracy": float(np.mean(fold_acc)),
        })

    def sort_key(entry):
        depth = entry["params"].max_depth
        return (
            -entry["mean_accuracy"],
            math.inf if depth is None else depth,
            -entry["params"].min_samples_split,
        )

    best = min(table, key=sort_key)
    return best["params"], table


@dataclass(frozen=True)
class TreeRendering:
    """Text and DOT renderings of the top of a tree."""

    text: str
    dot: str


def export_tree(model: TreeModel, max_depth: int = 4) -> TreeRendering:
    """Render the first ``max_depth`` depths as indented text and DOT.

    Every node shows its feature name, threshold, sample count, and class
    counts; subtrees below the cut appear as ``(…)``.
    """
    lines = []
    dot_nodes = []
    dot_edges = []

    def describe(node: int) -> str:
        n = int(model.n_samples[node])
        counts = model.class_counts[node].tolist()
        if model.is_leaf(node):
            probs = [round(float(p), 4) for p in model.value[node]]
            return f"leaf n={n} counts={counts} probs={probs}"
        name = model.feature_names[int(model.feature_index[node])]
        return f"{name} <= {model.threshold[node]:.6g} n={n} counts={counts}"

    def visit(node: int, depth: int, indent: str) -> None:
        if depth > max_depth:
            lines.append(f"{indent}(…)")
            dot_nodes.append(f'  n{node} [label="(…)" shape=plaintext];')
            return
        text = describe(node)
        lines.append(f"{indent}{text}")
        shape = "box" if model.is_leaf(node) else "ellipse"
        dot_nodes.append(f'  n{node} [label="{text}" shape={shape}];')
        if not model.is_leaf(node):
            for child in (int(model.left[node]), int(model.right[node])):
                dot_edges.append(f"  n{node} -> n{child};")
                visit(child, depth + 1, indent + "    ")

    visit(0, 0, "")
    dot = "digraph tree {\n" + "\n".join(dot_nodes + dot_edges) + "\n}\n"
    return TreeRendering(text="\n".join(lines) + "\n", dot=dot)
