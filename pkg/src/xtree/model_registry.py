"""Model specs, defaults, and the versioned on-disk model envelope.

A model spec is ``{"kind": <one of five families>, "params": {...}}``.
Defaults match the pipeline's standard configuration: decision tree
(depth 10, min split 4), forest (100 such trees), KNN (5 uniform
neighbors), MLP (one 128-unit hidden layer, 1000 epochs, alpha 0.001),
and boosted trees (500 rounds, rate 0.1, depth 6, L2 leaf reg 10).
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import shallow_models, trees
from .rng import derive_seed

MODEL_FORMAT_VERSION = 1

MODEL_KINDS = ("decision_tree", "random_forest", "knn", "mlp", "gbdt")

_DEFAULTS = {
    "decision_tree": {"max_depth": 10, "min_samples_split": 4, "criterion": "gini",
                      "laplace_smoothing": False},
    "random_forest": {"n_trees": 100, "max_depth": 10, "min_samples_split": 4,
                      "features_per_split": None, "bootstrap": True},
    "knn": {"k": 5, "weighting": "uniform"},
    "mlp": {"hidden_units": 128, "max_iterations": 1000, "l2_alpha": 0.001,
            "learning_rate": 0.001, "batch_size": 200},
    "gbdt": {"n_iterations": 500, "learning_rate": 0.1, "depth": 6,
             "l2_leaf_reg": 10.0},
}


class ModelSpecError(ValueError):
    """Unknown model kind or hyperparameter name."""


def default_params(kind: str) -> dict:
    if kind not in _DEFAULTS:
        raise ModelSpecError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return dict(_DEFAULTS[kind])


def resolve_params(kind: str, overrides: dict | None) -> dict:
    params = default_params(kind)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ModelSpecError(
                f"unknown hyperparameter {key!r} for {kind}; valid: {sorted(params)}"
            )
        params[key] = value
    return params


def _params_object(kind: str, params: dict, seed: int):
    if kind == "decision_tree":
        return trees.TreeParams(
            max_depth=params["max_depth"], min_samples_split=params["min_samples_split"],
            criterion=params["criterion"], seed=seed,
            laplace_smoothing=params["laplace_smoothing"],
        )
    if kind == "random_forest":
        return trees.ForestParams(
            n_trees=params["n_trees"],
            tree=trees.TreeParams(max_depth=params["max_depth"],
                                  min_samples_split=params["min_samples_split"]),
            features_per_split=params["features_per_split"],
            bootstrap=params["bootstrap"], seed=seed,
        )
    if kind == "knn":
        return shallow_models.KnnParams(k=params["k"], weighting=params["weighting"])
    if kind == "mlp":
        return shallow_models.MlpParams(
            hidden_units=params["hidden_units"], max_iterations=params["max_iterations"],
            l2_alpha=params["l2_alpha"], learning_rate=params["learning_rate"],
            batch_size=params["batch_size"], seed=seed,
        )
    if kind == "gbdt":
        return trees.GbdtParams(
            n_iterations=params["n_iterations"], learning_rate=params["learning_rate"],
            depth=params["depth"], l2_leaf_reg=params["l2_leaf_reg"], seed=seed,
        )
    raise ModelSpecError(f"unknown model kind {kind!r}")


def fit_model(spec: dict, m, seed: int = 0, purpose: tuple = ()):
    """Fit a model from its spec on a feature matrix.

    The model's internal seed is derived from ``seed`` and the purpose tag
    so, e.g., CV folds and the final fit draw independent streams.
    """
    kind = spec["kind"]
    params = resolve_params(kind, spec.get("params"))
    model_seed = derive_seed(seed, "model", kind, *purpose)
    params_obj = _params_object(kind, params, model_seed)
    if kind == "decision_tree":
        return trees.fit_cart(m, params_obj)
    if kind == "random_forest":
        return trees.fit_random_forest(m, params_obj)
    if kind == "knn":
        return shallow_models.fit_knn(m, params_obj)
    if kind == "mlp":
        return shallow_models.fit_mlp(m, params_obj)
    return trees.fit_gbdt(m, params_obj)


def _params_dict(model) -> dict:
    params = asdict(model.params)
    if model.kind == "random_forest":
        tree_params = params.pop("tree")
        params["max_depth"] = tree_params["max_depth"]
        params["min_samples_split"] = tree_params["min_samples_split"]
    return params


def save_model(model, path) -> Path:
    """Write the versioned JSON model envelope."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    envelope = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "params": _params_dict(model),
        "feature_names": list(model.feature_names),
        "class_names": list(model.class_names),
        "payload": model.to_payload(),
    }
    path.write_text(json.dumps(envelope, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path):
    """Read a model envelope written by :func:`save_model`."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelSpecError(f"unsupported model format {obj.get('format_version')}")
    kind = obj["kind"]
    feature_names = tuple(obj["feature_names"])
    class_names = tuple(obj["class_names"])
    params = obj["params"]
    payload = obj["payload"]
    if kind == "decision_tree":
        params_obj = trees.TreeParams(**params)
        return trees.TreeModel.from_payload(payload, feature_names, class_names, params_obj)
    if kind == "random_forest":
        seed = params.pop("seed")
        params_obj = trees.ForestParams(
            n_trees=params["n_trees"],
            tree=trees.TreeParams(max_depth=params["max_depth"],
                                  min_samples_split=params["min_samples_split"]),
            features_per_split=params["features_per_split"],
            bootstrap=params["bootstrap"], seed=seed,
        )
        members = [
            trees.TreeModel.from_payload(p, feature_names, class_names, params_obj.tree)
            for p in payload["trees"]
        ]
        return trees.ForestModel(members, feature_names, class_names, params_obj)
    if kind == "knn":
        params_obj = shallow_models.KnnParams(**params)
        return shallow_models.KnnModel(payload["train_values"], payload["train_labels"],
                                       feature_names, class_names, params_obj)
    if kind == "mlp":
        params_obj = shallow_models.MlpParams(**params)
        weights = shallow_models.MlpWeights(
            w1=np.asarray(payload["w1"], dtype=np.float64),
            b1=np.asarray(payload["b1"], dtype=np.float64),
            w2=np.asarray(payload["w2"], dtype=np.float64),
            b2=np.asarray(payload["b2"], dtype=np.float64),
        )
        return shallow_models.MlpModel(weights, feature_names, class_names, params_obj,
                                       payload.get("loss_trace"))
    if kind == "gbdt":
        params_obj = trees.GbdtParams(**params)
        rounds = [
            [trees.RegressionTree.from_payload(p) for p in round_trees]
            for round_trees in payload["rounds"]
        ]
        return trees.GbdtModel(rounds, feature_names, class_names, params_obj,
                               payload.get("loss_trace"))
    raise ModelSpecError(f"unknown model kind {kind!r}")
