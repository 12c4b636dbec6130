"""Flow-record ingestion, label encoding, and reproducible splits.

CSV files (RFC-4180, header row, UTF-8, '.' decimals) are parsed into a
:class:`FeatureMatrix`: a dense float matrix plus an integer label vector.
Categorical columns are label-encoded in first-appearance order; the class
label is encoded by its position in the schema's ``class_names`` so the
class coding is a configuration fact rather than file-order luck.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import generator

log = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1


class SchemaError(ValueError):
    """The file does not match the declared dataset schema."""


class ParseError(ValueError):
    """A cell could not be parsed; carries row/column context."""


@dataclass(frozen=True)
class DatasetSchema:
    """Column layout of a flow-record CSV."""

    feature_names: tuple[str, ...]
    categorical_columns: tuple[str, ...]
    label_column: str
    class_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "categorical_columns", tuple(self.categorical_columns))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.label_column in self.feature_names:
            raise SchemaError(f"label column {self.label_column!r} listed as a feature")
        unknown = set(self.categorical_columns) - set(self.feature_names)
        if unknown:
            raise SchemaError(f"categorical columns not among features: {sorted(unknown)}")
        if not self.class_names:
            raise SchemaError("class_names must be non-empty")
        if len(set(self.class_names)) != len(self.class_names):
            raise SchemaError("class_names must be distinct")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("feature names must be distinct")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "categorical_columns": list(self.categorical_columns),
            "label_column": self.label_column,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetSchema":
        return cls(
            feature_names=tuple(obj["feature_names"]),
            categorical_columns=tuple(obj.get("categorical_columns", ())),
            label_column=obj["label_column"],
            class_names=tuple(obj["class_names"]),
        )


class FeatureMatrix:
    """Dense numeric feature table with an integer label vector.

    Immutable after construction: the value and label arrays are marked
    read-only, so instances are safe to share across threads.
    """

    def __init__(self, values, feature_names, labels, class_names, encoder_map=None):
        values = np.ascontiguousarray(values, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        feature_names = tuple(feature_names)
        class_names = tuple(class_names)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if values.shape[1] != len(feature_names):
            raise ValueError(
                f"{values.shape[1]} columns but {len(feature_names)} feature names"
            )
        if labels.shape != (values.shape[0],):
            raise ValueError("labels must be one integer per row")
        if len(set(feature_names)) != len(feature_names):
            raise ValueError("feature names must be distinct")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        if labels.size and (labels.min() < 0 or labels.max() >= len(class_names)):
            raise ValueError(f"labels must lie in [0, {len(class_names)})")
        values.setflags(write=False)
        labels.setflags(write=False)
        self.values = values
        self.feature_names = feature_names
        self.labels = labels
        self.class_names = class_names
        self.encoder_map = dict(encoder_map or {})

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_index(name)]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def replace(self, values=None, labels=None) -> "FeatureMatrix":
        """Functional update keeping names and encoder map."""
        return FeatureMatrix(
            values=self.values if values is None else values,
            feature_names=self.feature_names,
            labels=self.labels if labels is None else labels,
            class_names=self.class_names,
            encoder_map=self.encoder_map,
        )

    def take_rows(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return self.replace(values=self.values[idx], labels=self.labels[idx])

    def select_features(self, indices) -> "FeatureMatrix":
        idx = list(indices)
        names = tuple(self.feature_names[i] for i in idx)
        enc = {k: v for k, v in self.encoder_map.items() if k in names}
        return FeatureMatrix(
            values=self.values[:, idx],
            feature_names=names,
            labels=self.labels,
            class_names=self.class_names,
            encoder_map=enc,
        )


@dataclass(frozen=True)
class SplitPair:
    """Stratified train/test split of one matrix."""

    train: FeatureMatrix
    test: FeatureMatrix
    seed: int
    ratio: float


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(
            f"row {row}, column {column!r}: cannot parse {cell!r} as a number"
        ) from None


def load_csv(path, schema: DatasetSchema, allow_missing: bool = False) -> FeatureMatrix:
    """Parse a flow-record CSV into a FeatureMatrix.

    Numeric columns are parsed as reals; categorical columns are encoded in
    first-appearance order; the label column is encoded by its position in
    ``schema.class_names``.  Empty numeric cells are a hard error unless
    ``allow_missing`` is set, in which case they take the column mean and
    the count is logged.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty file: {path}") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"no data rows in {path}")

    positions = {}
    for col in (*schema.feature_names, schema.label_column):
        if col not in header:
            raise SchemaError(f"missing column {col!r} in {path}")
        positions[col] = header.index(col)

    n = len(rows)
    d = len(schema.feature_names)
    values = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    categorical = set(schema.categorical_columns)
    encoder_map: dict[str, dict[str, int]] = {c: {} for c in schema.categorical_columns}
    missing: dict[int, list[int]] = {}

    label_pos = positions[schema.label_column]
    class_index = {name: i for i, name in enumerate(schema.class_names)}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"row {i}: expected {len(header)} cells, got {len(row)}")
        raw_label = row[label_pos]
        if raw_label not in class_index:
            raise ParseError(
                f"row {i}, column {schema.label_column!r}: "
                f"unknown class {raw_label!r} (schema classes: {list(schema.class_names)})"
            )
        labels[i] = class_index[raw_label]
        for j, col in enumerate(schema.feature_names):
            cell = row[positions[col]]
            if col in categorical:
                codes = encoder_map[col]
                if cell not in codes:
                    codes[cell] = len(codes)
                values[i, j] = codes[cell]
            elif cell == "":
                if not allow_missing:
                    raise ParseError(f"row {i}, column {col!r}: empty numeric cell")
                values[i, j] = np.nan
                missing.setdefault(j, []).append(i)
            else:
                values[i, j] = _parse_float(cell, i, col)

    for j, row_ids in missing.items():
        col_name = schema.feature_names[j]
        col = values[:, j]
        finite = col[np.isfinite(col)]
        if finite.size == 0:
            raise ParseError(f"column {col_name!r} has no parseable values")
        values[row_ids, j] = finite.mean()
        log.info("filled %d missing cells in column %r with the mean", len(row_ids), col_name)

    return FeatureMatrix(
        values=values,
        feature_names=schema.feature_names,
        labels=labels,
        class_names=schema.class_names,
        encoder_map=encoder_map,
    )


def deduplicate(m: FeatureMatrix) -> tuple[FeatureMatrix, int]:
    """Drop rows identical in all feature values and label, keeping firsts.

    Returns the filtered matrix and the number of rows removed.  Rows equal
    in features but differing in label are both retained.
    """
    seen = set()
    keep = []
    for i in range(m.n_rows):
        key = (m.values[i].tobytes(), int(m.labels[i]))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    removed = m.n_rows - len(keep)
    if removed == 0:
        return m, 0
    return m.take_rows(np.asarray(keep, dtype=np.int64)), removed


def stratified_split(m: FeatureMatrix, ratio: float, seed: int) -> SplitPair:
    """Split into train/test preserving per-class proportions.

    Each class is shuffled with its own seed-derived stream and cut at
    ``round(ratio * count)``; the remainder goes to test.  Row order within
    each side follows the original matrix, so identical inputs give
    bit-identical splits.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    counts = m.class_counts()
    for c, count in enumerate(counts):
        if 0 < count < 2:
            raise ValueError(
                f"class {m.class_names[c]!r} has only {count} row(s); need at least 2"
            )
    train_idx = []
    test_idx = []
    for c in range(m.n_classes):
        rows = np.flatnonzero(m.labels == c)
        if rows.size == 0:
            continue
        rng = generator(seed, "dataio", "split", c)
        perm = rng.permutation(rows.size)
        n_train = int(round(ratio * rows.size))
        train_idx.append(rows[perm[:n_train]])
        test_idx.append(rows[perm[n_train:]])
    train_rows = np.sort(np.concatenate(train_idx))
    test_rows = np.sort(np.concatenate(test_idx))
    return SplitPair(
        train=m.take_rows(train_rows),
        test=m.take_rows(test_rows),
        seed=int(seed),
        ratio=float(ratio),
    )


# ---------------------------------------------------------------------------
# two-file snapshot format (JSON metadata + CSV values) for checkpointing


def _float_repr(v: float) -> str:
    # repr round-trips float64 exactly, keeping snapshots bit-faithful
    return repr(float(v))


def save_snapshot(m: FeatureMatrix, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.meta.json`` and ``<prefix>.values.csv``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    meta_path = prefix.with_suffix(prefix.suffix + ".meta.json")
    values_path = prefix.with_suffix(prefix.suffix + ".values.csv")
    meta = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "feature_names": list(m.feature_names),
        "class_names": list(m.class_names),
        "encoder_map": m.encoder_map,
        "n_rows": m.n_rows,
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(values_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*m.feature_names, "__label__"])
        for i in range(m.n_rows):
            writer.writerow([_float_repr(v) for v in m.values[i]] + [int(m.labels[i])])
    return meta_path, values_path


def load_snapshot(prefix) -> FeatureMatrix:
    """Read a snapshot written by :func:`save_snapshot`."""
    prefix = Path(prefix)
    meta_path = prefix.with_suffix(prefix.suffix + ".meta.json")
    values_path = prefix.with_suffix(prefix.suffix + ".values.csv")
    for p in (meta_path, values_path):
        if not p.exists():
            raise SchemaError(f"snapshot file missing: {p}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("format_version") != SNAPSHOT_FORMAT_VERSION:
        raise SchemaError(f"unsupported snapshot version {meta.get('format_version')}")
    with open(values_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    names = header[:-1]
    if names != list(meta["feature_names"]):
        raise SchemaError("snapshot value header disagrees with metadata")
    values = np.empty((len(rows), len(names)), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        for j in range(len(names)):
            values[i, j] = _parse_float(row[j], i, names[j])
        labels[i] = int(row[-1])
    return FeatureMatrix(
        values=values,
        feature_names=tuple(names),
        labels=labels,
        class_names=tuple(meta["class_names"]),
        encoder_map=meta.get("encoder_map", {}),
    )
