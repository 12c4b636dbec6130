"""Model explanation: exact Shapley attributions and Morris screening.

Shapley values here are interventional: the value of a coalition is the
model output with out-of-coalition features replaced by a background
row's values, averaged over the background set.  For tree models this is
computed exactly by walking each tree once per (row, background) pair and
weighting every coalition-feasible leaf with a closed-form sum of Shapley
weights; forests explain as the mean of per-tree attributions.  A
brute-force enumeration over all coalitions serves as the verification
oracle for small instances.

Morris screening builds one-at-a-time winding trajectories on a p-level
grid in the unit cube, rescaled to per-feature bounds: mu* (mean absolute
elementary effect) ranks overall influence, sigma flags nonlinearity and
interaction, and a percentile bootstrap gives the mu* confidence band.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import shap_pair
from .dataio import FeatureMatrix
from .rng import generator
from .trees import ForestModel, TreeModel

log = logging.getLogger(__name__)

_BOOTSTRAP_RESAMPLES = 1000


class UnsupportedModelError(TypeError):
    """The explainer does not handle this model family."""


@dataclass(frozen=True)
class ShapExplanation:
    """Per-class attributions for one explained row."""

    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    base_values: np.ndarray  # (n_classes,)
    phi: np.ndarray          # (n_classes, n_features)
    model_output: np.ndarray  # (n_classes,)

    def local_accuracy_gap(self) -> float:
        """Max |base + sum(phi) - output| over classes; ~0 for exact values."""
        recon = self.base_values + self.phi.sum(axis=1)
        return float(np.abs(recon - self.model_output).max())


def _shapley_weights(d: int) -> np.ndarray:
    # W[s] = s! (d-s-1)! / d!  -- the Shapley kernel weight of |S| = s
    w = np.empty(d, dtype=np.float64)
    log_fact = [math.lgamma(i + 1) for i in range(d + 1)]
    for s in range(d):
        w[s] = math.exp(log_fact[s] + log_fact[d - s - 1] - log_fact[d])
    return w


def shapley_coefficients(d: int) -> np.ndarray:
    """Closed-form coalition sums for the tree walk.

    ``coeff[p, q]`` = sum of Shapley weights w(|S|) over coalitions S that
    contain p required features, exclude q forbidden features plus the
    credited feature, and choose freely among the rest.
    """
    w = _shapley_weights(d)
    coeff = np.zeros((d + 1, d + 1), dtype=np.float64)
    for p in range(d):
        for q in range(d - p):
            free = d - 1 - p - q
            total = 0.0
            for k in range(free + 1):
                total += math.comb(free, k) * w[p + k]
            coeff[p, q] = total
    return coeff


def _component_trees(model) -> list[TreeModel]:
    if isinstance(model, TreeModel):
        return [model]
    if isinstance(model, ForestModel):
        return model.trees
    raise UnsupportedModelError(
        f"Shapley tree walk supports decision trees and forests, not {type(model).__name__}"
    )


def _background_values(background, d: int) -> np.ndarray:
    values = background.values if isinstance(background, FeatureMatrix) \
        else np.asarray(background, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != d:
        raise ValueError(f"background must be 2-D with {d} columns")
    if values.shape[0] == 0:
        raise ValueError("background must be non-empty")
    return np.ascontiguousarray(values)


def tree_shap(model, x, background) -> ShapExplanation:
    """Exact interventional Shapley values for one row of a tree-family model."""
    trees = _component_trees(model)
    d = len(model.feature_names)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"explained row must have {d} features, got {x.shape}")
    bg = _background_values(background, d)
    coeff = shapley_coefficients(d)
    n_classes = len(model.class_names)
    phi = np.zeros((d, n_classes))
    for tree in trees:
        tree_phi = np.zeros((d, n_classes))
        values = np.ascontiguousarray(tree.value)
        for i in range(bg.shape[0]):
            shap_pair(tree.feature_index, tree.threshold, tree.left, tree.right,
                      values, x, np.ascontiguousarray(bg[i]), coeff, tree_phi)
        phi += tree_phi / bg.shape[0]
    phi /= len(trees)
    base = model.predict_proba(bg).mean(axis=0)
    output = model.predict_proba(x[np.newaxis, :])[0]
    return ShapExplanation(
        feature_names=model.feature_names, class_names=model.class_names,
        base_values=base, phi=phi.T.copy(), model_output=output,
    )


def brute_force_shapley(model, x, background) -> ShapExplanation:
    """Direct Shapley enumeration over all 2^d coalitions (d <= 12).

    The coalition value is the mean model output over background rows with
    in-coalition features taken from the explained row.  Exact by
    construction; used to verify the tree walk.
    """
    d = len(model.feature_names)
    if d > 12:
        raise ValueError(f"brute force is limited to 12 features, got {d}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    bg = _background_values(background, d)
    n_classes = len(model.class_names)
    values = np.empty((1 << d, n_classes))
    for mask in range(1 << d):
        hybrid = bg.copy()
        for j in range(d):
            if mask >> j & 1:
                hybrid[:, j] = x[j]
        values[mask] = model.predict_proba(hybrid).mean(axis=0)
    w = _shapley_weights(d)
    phi = np.zeros((n_classes, d))
    for mask in range(1 << d):
        size = bin(mask).count("1")
        for j in range(d):
            if not mask >> j & 1:
                phi[:, j] += w[size] * (values[mask | (1 << j)] - values[mask])
    return ShapExplanation(
        feature_names=model.feature_names, class_names=model.class_names,
        base_values=values[0], phi=phi, model_output=values[(1 << d) - 1],
    )


@dataclass(frozen=True)
class ShapSummary:
    """Mean |phi| per class and feature over an explanation set."""

    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    mean_abs_phi: np.ndarray  # (n_classes, n_features)
    ranks: np.ndarray         # (n_classes, n_features), 1 = most important

    def to_rows(self) -> list[tuple[str, str, float, int]]:
        rows = []
        for c, cls in enumerate(self.class_names):
            for j, feat in enumerate(self.feature_names):
                rows.append((cls, feat, float(self.mean_abs_phi[c, j]),
                             int(self.ranks[c, j])))
        return rows

    def top_feature(self, class_index: int) -> str:
        return self.feature_names[int(np.argmin(self.ranks[class_index]))]


def shap_summary(model, X, background) -> ShapSummary:
    """Aggregate per-row attributions into a per-class importance ranking.

    Ranks order features by mean |phi| descending; ties break by feature
    name ascending.
    """
    rows = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("explanation set must be a non-empty 2-D matrix")
    d = len(model.feature_names)
    n_classes = len(model.class_names)
    total = np.zeros((n_classes, d))
    for i in range(rows.shape[0]):
        total += np.abs(tree_shap(model, rows[i], background).phi)
    mean_abs = total / rows.shape[0]
    ranks = np.empty((n_classes, d), dtype=np.int64)
    for c in range(n_classes):
        order = sorted(range(d), key=lambda j: (-mean_abs[c, j], model.feature_names[j]))
        for position, j in enumerate(order, start=1):
            ranks[c, j] = position
    return ShapSummary(
        feature_names=model.feature_names, class_names=model.class_names,
        mean_abs_phi=mean_abs, ranks=ranks,
    )


@dataclass(frozen=True)
class MorrisDesign:
    """One-at-a-time screening design on a p-level grid.

    Trajectories live in the unit cube and are rescaled to the per-feature
    bounds, so elementary effects read as output change per full feature
    range regardless of raw scale.
    """

    bounds: np.ndarray  # (d, 2) per-feature (min, max)
    n_trajectories: int = 32
    n_levels: int = 4
    seed: int = 0
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=np.float64)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must be a (d, 2) array of (min, max)")
        object.__setattr__(self, "bounds", bounds)
        if self.n_levels < 2 or self.n_levels % 2 != 0:
            raise ValueError("n_levels must be an even count >= 2")
        if self.n_trajectories < 2:
            raise ValueError("at least 2 trajectories are needed (sigma undefined)")
        if not np.all(np.isfinite(bounds)):
            raise ValueError("feature bounds must be finite")

    @property
    def delta(self) -> float:
        return self.n_levels / (2.0 * (self.n_levels - 1))

    @classmethod
    def from_matrix(cls, m: FeatureMatrix, n_trajectories: int = 32,
                    n_levels: int = 4, seed: int = 0) -> "MorrisDesign":
        bounds = np.stack([m.values.min(axis=0), m.values.max(axis=0)], axis=1)
        return cls(bounds=bounds, n_trajectories=n_trajectories,
                   n_levels=n_levels, seed=seed, feature_names=m.feature_names)


@dataclass(frozen=True)
class MorrisResult:
    """Per-feature mu*, sigma, and bootstrap confidence band."""

    feature_names: tuple[str, ...]
    mu_star: np.ndarray
    sigma: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    trajectories_used: int

    def to_rows(self) -> list[tuple[str, float, float, float, float]]:
        return [
            (name, float(self.mu_star[j]), float(self.sigma[j]),
             float(self.ci_low[j]), float(self.ci_high[j]))
            for j, name in enumerate(self.feature_names)
        ]

    def top_feature(self) -> str:
        return self.feature_names[int(np.argmax(self.mu_star))]


def morris_screening(predict_fn, design: MorrisDesign) -> MorrisResult:
    """Elementary-effects screening of a scalar prediction function.

    Each trajectory starts at a random grid point and steps every feature
    once by +delta in a random order; the elementary effect is the output
    change per unit-cube step.  Features with degenerate bounds are
    excluded (logged) and report zeros.
    """
    bounds = design.bounds
    d = bounds.shape[0]
    names = design.feature_names or tuple(f"f{j}" for j in range(d))
    lo = bounds[:, 0]
    span = bounds[:, 1] - lo
    active = np.flatnonzero(span > 0)
    for j in np.flatnonzero(span <= 0):
        log.info("feature %r has degenerate bounds; excluded from screening", names[j])
    r = design.n_trajectories
    p = design.n_levels
    delta = design.delta
    effects = np.zeros((r, d))
    base_choices = p // 2  # grid levels i/(p-1) with i such that +delta stays in [0,1]
    for t in range(r):
        rng = generator(design.seed, "explain", "morris", t)
        u = rng.integers(0, base_choices, size=d) / (p - 1)
        order = active[rng.permutation(active.size)]
        current = u.copy()
        f_cur = float(predict_fn(lo + current * span))
        for j in order:
            current[j] += delta
            f_next = float(predict_fn(lo + current * span))
            effects[t, j] = (f_next - f_cur) / delta
            f_cur = f_next
    mu_star = np.abs(effects).mean(axis=0)
    sigma = effects.std(axis=0)
    mu_star[span <= 0] = 0.0
    sigma[span <= 0] = 0.0
    ci_low = np.zeros(d)
    ci_high = np.zeros(d)
    for j in active:
        rng = generator(design.seed, "explain", "morris-bootstrap", int(j))
        idx = rng.integers(0, r, size=(_BOOTSTRAP_RESAMPLES, r))
        means = np.abs(effects[:, j])[idx].mean(axis=1)
        ci_low[j], ci_high[j] = np.percentile(means, [2.5, 97.5])
    return MorrisResult(
        feature_names=tuple(names), mu_star=mu_star, sigma=sigma,
        ci_low=ci_low, ci_high=ci_high, trajectories_used=r,
    )


def class_probability_fn(model, class_index: int):
    """Scalar prediction function: probability of one class for one row."""
    def fn(row: np.ndarray) -> float:
        return float(model.predict_proba(row[np.newaxis, :])[0, class_index])
    return fn
