"""Declarative run configuration: one JSON document per experiment.

Unknown keys anywhere in the document are errors, so typos in
hyperparameter names fail fast instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataio import DatasetSchema
from .model_registry import MODEL_KINDS, resolve_params

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """The configuration document is malformed."""


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class PreprocessingConfig:
    iqr_k: float = 1.5
    chi2_alpha: float = 0.05
    chi2_bins: int = 10
    pearson_alpha: float = 0.05
    top_k: int | None = None
    noise_fraction: float = 0.15
    strict_no_leak: bool = False


@dataclass(frozen=True)
class ExplainConfig:
    background_size: int = 100
    explain_rows: int = 100
    morris_r: int = 32
    morris_p: int = 4


@dataclass(frozen=True)
class PipelineConfig:
    dataset_path: Path
    label_column: str
    class_names: tuple[str, ...]
    output_dir: Path
    feature_names: tuple[str, ...] | None = None
    categorical_columns: tuple[str, ...] = ()
    allow_missing: bool = False
    seed: int = 0
    split_ratio: float = 0.8
    preprocessing: PreprocessingConfig = field(default_factory=PreprocessingConfig)
    models: tuple[dict, ...] = ()
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    cv_k: int = 5
    timing_repeats: int = 3
    paper_order_cv: bool = False

    def schema(self, header: list[str] | None = None) -> DatasetSchema:
        """Dataset schema, inferring feature names from a header if needed."""
        names = self.feature_names
        if names is None:
            if header is None:
                raise ConfigError(
                    "feature_names is null and no CSV header is available to infer from"
                )
            names = tuple(c for c in header if c != self.label_column)
        return DatasetSchema(
            feature_names=names,
            categorical_columns=self.categorical_columns,
            label_column=self.label_column,
            class_names=self.class_names,
        )

    def model_specs(self) -> list[dict]:
        return [
            {"kind": m["kind"], "params": resolve_params(m["kind"], m.get("params"))}
            for m in self.models
        ]

    def snapshot(self) -> dict:
        """JSON-able copy of the full effective configuration."""
        return {
            "config_version": CONFIG_VERSION,
            "dataset": {
                "path": str(self.dataset_path),
                "schema": {
                    "feature_names": list(self.feature_names) if self.feature_names else None,
                    "categorical_columns": list(self.categorical_columns),
                    "label_column": self.label_column,
                    "class_names": list(self.class_names),
                },
                "allow_missing": self.allow_missing,
            },
            "seed": self.seed,
            "split_ratio": self.split_ratio,
            "preprocessing": vars(self.preprocessing).copy(),
            "models": [dict(m) for m in self.models],
            "explain": {
                "background_size": self.explain.background_size,
                "explain_rows": self.explain.explain_rows,
                "morris": {"r": self.explain.morris_r, "p": self.explain.morris_p},
            },
            "cv": {"k": self.cv_k},
            "timing": {"repeats": self.timing_repeats},
            "output_dir": str(self.output_dir),
            "paper_order_cv": self.paper_order_cv,
        }


_DEFAULT_MODELS = tuple({"kind": kind, "params": {}} for kind in MODEL_KINDS)


def parse_config(obj: dict, base_dir: Path | None = None) -> PipelineConfig:
    """Validate and resolve a configuration document."""
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_keys(obj, {"config_version", "dataset", "seed", "split_ratio",
                      "preprocessing", "models", "explain", "cv", "timing",
                      "output_dir", "paper_order_cv"}, "config")
    if obj.get("config_version") != CONFIG_VERSION:
        raise ConfigError(
            f"config_version must be {CONFIG_VERSION}, got {obj.get('config_version')!r}"
        )
    if "dataset" not in obj or "output_dir" not in obj:
        raise ConfigError("config requires 'dataset' and 'output_dir'")

    dataset = obj["dataset"]
    _check_keys(dataset, {"path", "schema", "allow_missing"}, "dataset")
    if "path" not in dataset or "schema" not in dataset:
        raise ConfigError("dataset requires 'path' and 'schema'")
    schema = dataset["schema"]
    _check_keys(schema, {"feature_names", "categorical_columns", "label_column",
                         "class_names"}, "dataset.schema")
    if "label_column" not in schema or "class_names" not in schema:
        raise ConfigError("dataset.schema requires 'label_column' and 'class_names'")

    pre_obj = obj.get("preprocessing", {})
    _check_keys(pre_obj, {"iqr_k", "chi2_alpha", "chi2_bins", "pearson_alpha",
                          "top_k", "noise_fraction", "strict_no_leak"}, "preprocessing")
    preprocessing = PreprocessingConfig(**pre_obj)

    models = obj.get("models")
    if models is None:
        models = [dict(m) for m in _DEFAULT_MODELS]
    if not models:
        raise ConfigError("at least one model must be configured")
    seen_kinds = set()
    for m in models:
        _check_keys(m, {"kind", "params"}, "models[]")
        if "kind" not in m:
            raise ConfigError("each model entry requires 'kind'")
        if m["kind"] in seen_kinds:
            raise ConfigError(f"duplicate model kind {m['kind']!r}")
        seen_kinds.add(m["kind"])
        resolve_params(m["kind"], m.get("params"))  # validates names/values

    explain_obj = obj.get("explain", {})
    _check_keys(explain_obj, {"background_size", "explain_rows", "morris"}, "explain")
    morris_obj = explain_obj.get("morris", {})
    _check_keys(morris_obj, {"r", "p"}, "explain.morris")
    explain = ExplainConfig(
        background_size=explain_obj.get("background_size", 100),
        explain_rows=explain_obj.get("explain_rows", 100),
        morris_r=morris_obj.get("r", 32),
        morris_p=morris_obj.get("p", 4),
    )

    cv_obj = obj.get("cv", {})
    _check_keys(cv_obj, {"k"}, "cv")
    timing_obj = obj.get("timing", {})
    _check_keys(timing_obj, {"repeats"}, "timing")

    split_ratio = float(obj.get("split_ratio", 0.8))
    if not 0.0 < split_ratio < 1.0:
        raise ConfigError(f"split_ratio must lie in (0, 1), got {split_ratio}")

    base = base_dir or Path.cwd()

    def _resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    feature_names = schema.get("feature_names")
    return PipelineConfig(
        dataset_path=_resolve(dataset["path"]),
        label_column=schema["label_column"],
        class_names=tuple(schema["class_names"]),
        feature_names=tuple(feature_names) if feature_names else None,
        categorical_columns=tuple(schema.get("categorical_columns", ())),
        allow_missing=bool(dataset.get("allow_missing", False)),
        seed=int(obj.get("seed", 0)),
        split_ratio=split_ratio,
        preprocessing=preprocessing,
        models=tuple(models),
        explain=explain,
        cv_k=int(cv_obj.get("k", 5)),
        timing_repeats=int(timing_obj.get("repeats", 3)),
        output_dir=_resolve(obj["output_dir"]),
        paper_order_cv=bool(obj.get("paper_order_cv", False)),
    )


def load_config(path) -> PipelineConfig:
    """Parse a configuration file; relative paths resolve against it."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        return parse_config(obj, base_dir=path.parent.resolve())
    except TypeError as exc:
        # dataclass kwargs catch wrong-typed/missing preprocessing values
        raise ConfigError(str(exc)) from None
