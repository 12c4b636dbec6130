"""Synthetic flow-record generator with planted, recoverable rules.

Rows are labeled from class priors; each planted rule forces its feature
to one side of a threshold (with a margin) according to the label, so a
rule-respecting dataset is separable by construction.  The ground truth
is written to a sidecar JSON for tests to assert recoverability.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import generator

# imbalance profile of the reference three-class flow corpus
DEFAULT_THREE_CLASS_PRIORS = (0.06, 0.07, 0.87)


class PlantSpecError(ValueError):
    """The planted-rule specification is inconsistent."""


@dataclass(frozen=True)
class PlantedRule:
    feature: int
    threshold: float
    above_class: int
    below_class: int
    margin: float = 0.25
    spread: float = 1.0


def parse_plant_spec(obj: dict, n_features: int, n_classes: int) -> list[PlantedRule]:
    if not isinstance(obj, dict):
        raise PlantSpecError("plant spec must be a JSON object")
    unknown = set(obj) - {"rules"}
    if unknown:
        raise PlantSpecError(f"unknown plant spec key(s) {sorted(unknown)}")
    rules = []
    used_features = set()
    for entry in obj.get("rules", []):
        unknown = set(entry) - {"feature", "threshold", "above_class", "below_class",
                                "margin", "spread"}
        if unknown:
            raise PlantSpecError(f"unknown rule key(s) {sorted(unknown)}")
        rule = PlantedRule(
            feature=int(entry["feature"]),
            threshold=float(entry.get("threshold", 0.0)),
            above_class=int(entry["above_class"]),
            below_class=int(entry["below_class"]),
            margin=float(entry.get("margin", 0.25)),
            spread=float(entry.get("spread", 1.0)),
        )
        if not 0 <= rule.feature < n_features:
            raise PlantSpecError(f"rule feature {rule.feature} outside [0, {n_features})")
        if rule.feature in used_features:
            raise PlantSpecError(f"two rules target feature {rule.feature}")
        used_features.add(rule.feature)
        for cls in (rule.above_class, rule.below_class):
            if not 0 <= cls < n_classes:
                raise PlantSpecError(f"rule class {cls} outside [0, {n_classes})")
        if rule.above_class == rule.below_class:
            raise PlantSpecError("a rule must map the two sides to different classes")
        if rule.margin <= 0 or rule.spread <= 0:
            raise PlantSpecError("rule margin and spread must be positive")
        rules.append(rule)
    if len(rules) > n_features:
        raise PlantSpecError("more rules than features")
    return rules


def generate_dataset(n_rows: int, n_features: int, n_classes: int,
                     plant_spec: dict | None, seed: int,
                     class_priors=None) -> tuple[np.ndarray, np.ndarray, dict]:
    """Values, labels, and the ground-truth sidecar for one synthetic set."""
    if n_rows < 1 or n_features < 1 or n_classes < 2:
        raise PlantSpecError("need n_rows >= 1, n_features >= 1, n_classes >= 2")
    rules = parse_plant_spec(plant_spec or {"rules": []}, n_features, n_classes)
    if class_priors is None:
        class_priors = (DEFAULT_THREE_CLASS_PRIORS if n_classes == 3
                        else tuple(1.0 / n_classes for _ in range(n_classes)))
    priors = np.asarray(class_priors, dtype=np.float64)
    if priors.size != n_classes or np.any(priors <= 0):
        raise PlantSpecError(f"class priors must be {n_classes} positive weights")
    priors = priors / priors.sum()

    label_rng = generator(seed, "synth", "labels")
    labels = label_rng.choice(n_classes, size=n_rows, p=priors)

    values = np.empty((n_rows, n_features))
    ruled = {rule.feature: rule for rule in rules}
    for j in range(n_features):
        rng = generator(seed, "synth", "feature", j)
        rule = ruled.get(j)
        if rule is None:
            values[:, j] = rng.normal(0.0, 1.0, size=n_rows)
            continue
        offsets = rng.uniform(0.0, rule.spread, size=n_rows)
        sides = rng.uniform(-rule.margin - rule.spread, rule.margin + rule.spread,
                            size=n_rows)
        above = labels == rule.above_class
        below = labels == rule.below_class
        col = rule.threshold + sides  # unconstrained classes land anywhere
        col[above] = rule.threshold + rule.margin + offsets[above]
        col[below] = rule.threshold - rule.margin - offsets[below]
        values[:, j] = col

    sidecar = {
        "seed": int(seed),
        "n_rows": n_rows,
        "n_features": n_features,
        "n_classes": n_classes,
        "class_priors": [float(p) for p in priors],
        "class_counts": np.bincount(labels, minlength=n_classes).tolist(),
        "rules": [vars(r).copy() for r in rules],
        "feature_names": [f"f{j}" for j in range(n_features)],
        "class_names": [f"class{c}" for c in range(n_classes)],
        "label_column": "label",
    }
    return values, labels, sidecar


def write_dataset(path, values: np.ndarray, labels: np.ndarray, sidecar: dict) -> Path:
    """Write the CSV and its ``<path>.truth.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    class_names = sidecar["class_names"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*sidecar["feature_names"], sidecar["label_column"]])
        for i in range(values.shape[0]):
            writer.writerow([repr(float(v)) for v in values[i]] + [class_names[labels[i]]])
    truth_path = path.with_suffix(path.suffix + ".truth.json")
    truth_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    return path
