"""Fit-on-train / apply-anywhere transforms between ingestion and training.

Outlier imputation by IQR fences, z-score scaling, the two-stage
statistical feature screen (chi-square independence filter, then Pearson
correlation with Bonferroni control), random oversampling of minority
classes, and Gaussian noise injection.  The pipeline applies them in
exactly this order; each is deterministic given its inputs and seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numstats
from .dataio import FeatureMatrix
from .rng import generator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IqrFeatureStats:
    name: str
    q1: float
    q3: float
    lower_fence: float
    upper_fence: float
    replaced_count: int


@dataclass(frozen=True)
class IqrReport:
    """Per-feature fences and replacement counts from outlier imputation."""

    features: tuple[IqrFeatureStats, ...]

    def to_json_obj(self) -> list[dict]:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None  # exempt columns carry no fences
            return v

        return [{k: clean(v) for k, v in vars(f).items()} for f in self.features]


@dataclass(frozen=True)
class IqrParams:
    """Fitted fences and in-fence means, applicable to any matrix."""

    feature_names: tuple[str, ...]
    lower_fence: np.ndarray
    upper_fence: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    fill_value: np.ndarray
    exempt: tuple[str, ...] = ()


@dataclass(frozen=True)
class ZScoreParams:
    """Per-feature mean and population standard deviation fitted on train."""

    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    exempt: tuple[str, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "exempt": list(self.exempt),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ZScoreParams":
        return cls(
            feature_names=tuple(obj["feature_names"]),
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
            exempt=tuple(obj.get("exempt", ())),
        )


@dataclass
class FeatureScreen:
    """Screening statistics for a single feature."""

    name: str
    chi2: float | None = None
    chi2_p: float | None = None
    r: float | None = None
    p_raw: float | None = None
    p_adj: float | None = None
    kept: bool = False
    rank: int | None = None
    warning: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "chi2": self.chi2,
            "chi2_p": self.chi2_p,
            "r": self.r,
            "p_raw": self.p_raw,
            "p_adj": self.p_adj,
            "kept": self.kept,
            "rank": self.rank,
            "warning": self.warning,
        }


@dataclass
class FeatureScreenReport:
    """Per-feature screening record covering every input feature."""

    features: list[FeatureScreen] = field(default_factory=list)

    def by_name(self, name: str) -> FeatureScreen:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json_obj(self) -> list[dict]:
        return [f.to_json_obj() for f in self.features]

    @staticmethod
    def merged(stage1: "FeatureScreenReport", stage2: "FeatureScreenReport") -> "FeatureScreenReport":
        """Combine chi-square and Pearson stages into one record."""
        merged = FeatureScreenReport()
        stage2_names = {f.name: f for f in stage2.features}
        for f1 in stage1.features:
            entry = FeatureScreen(
                name=f1.name, chi2=f1.chi2, chi2_p=f1.chi2_p, warning=f1.warning
            )
            f2 = stage2_names.get(f1.name)
            if f2 is not None:
                entry.r = f2.r
                entry.p_raw = f2.p_raw
                entry.p_adj = f2.p_adj
                entry.kept = f2.kept
                entry.rank = f2.rank
                if f2.warning and not entry.warning:
                    entry.warning = f2.warning
            merged.features.append(entry)
        return merged


def iqr_fit(m: FeatureMatrix, k: float = 1.5, exempt=()) -> IqrParams:
    """Fit per-feature fences ``[q1 - k*IQR, q3 + k*IQR]``.

    Quartiles use linear interpolation between order statistics; the fill
    value is the mean of the in-fence values only, so the outliers being
    replaced never contaminate their replacement.  Columns named in
    ``exempt`` (categoricals) pass through untouched.
    """
    exempt = tuple(e for e in exempt if e in m.feature_names)
    exempt_set = set(exempt)
    d = m.n_features
    q1 = np.zeros(d)
    q3 = np.zeros(d)
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    fill = np.zeros(d)
    for j, name in enumerate(m.feature_names):
        col = m.values[:, j]
        if name in exempt_set:
            q1[j] = q3[j] = math.nan
            continue
        q1[j], q3[j] = np.quantile(col, [0.25, 0.75])
        iqr = q3[j] - q1[j]
        lo[j] = q1[j] - k * iqr
        hi[j] = q3[j] + k * iqr
        inside = (col >= lo[j]) & (col <= hi[j])
        fill[j] = col[inside].mean()
    return IqrParams(feature_names=m.feature_names, lower_fence=lo, upper_fence=hi,
                     q1=q1, q3=q3, fill_value=fill, exempt=exempt)


def iqr_apply(m: FeatureMatrix, params: IqrParams) -> tuple[FeatureMatrix, IqrReport]:
    """Replace out-of-fence values with the fitted in-fence means."""
    if params.feature_names != m.feature_names:
        raise ValueError("IQR parameters were fitted on different features")
    values = np.array(m.values)
    stats = []
    for j, name in enumerate(m.feature_names):
        if name in params.exempt:
            stats.append(IqrFeatureStats(name, float("nan"), float("nan"),
                                         float("nan"), float("nan"), 0))
            continue
        col = values[:, j]
        outside = (col < params.lower_fence[j]) | (col > params.upper_fence[j])
        replaced = int(outside.sum())
        if replaced:
            values[:, j] = np.where(outside, params.fill_value[j], col)
        stats.append(IqrFeatureStats(
            name, float(params.q1[j]), float(params.q3[j]),
            float(params.lower_fence[j]), float(params.upper_fence[j]), replaced,
        ))
    return m.replace(values=values), IqrReport(features=tuple(stats))


def iqr_impute(m: FeatureMatrix, k: float = 1.5, exempt=()) -> tuple[FeatureMatrix, IqrReport]:
    """Fit fences on ``m`` and apply them to ``m`` in one step."""
    return iqr_apply(m, iqr_fit(m, k=k, exempt=exempt))


def zscore_fit(train: FeatureMatrix, exempt=()) -> ZScoreParams:
    """Per-feature mean and population std (divisor n) from the train split."""
    exempt = tuple(e for e in exempt if e in train.feature_names)
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    for name in exempt:
        j = train.feature_index(name)
        mean[j] = 0.0
        std[j] = 1.0
    return ZScoreParams(feature_names=train.feature_names, mean=mean, std=std, exempt=exempt)


def zscore_apply(m: FeatureMatrix, params: ZScoreParams) -> FeatureMatrix:
    """Apply ``(x - mean) / std`` per feature; zero-std features map to 0."""
    if params.feature_names != m.feature_names:
        raise ValueError("z-score parameters were fitted on different features")
    std = np.where(params.std == 0.0, 1.0, params.std)
    scaled = (m.values - params.mean) / std
    scaled[:, params.std == 0.0] = 0.0
    return m.replace(values=scaled)


def _quantile_bins(col: np.ndarray, bins: int) -> np.ndarray:
    """Discretize a column into at most ``bins`` equal-frequency bins."""
    edges = np.quantile(col, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    edges = np.unique(edges)
    return np.searchsorted(edges, col, side="left")


def chi_square_filter(
    m: FeatureMatrix, alpha: float = 0.05, bins: int = 10, categorical=()
) -> tuple[list[int], FeatureScreenReport]:
    """Stage-1 screen: drop features independent of the class label.

    Continuous features are discretized into at most ``bins`` quantile
    bins; categorical features use their codes directly.  Features whose
    chi-square p-value exceeds ``alpha`` are dropped.  A feature that
    collapses to a single bin cannot reject independence: it is kept with
    p recorded as 1 and a warning.
    """
    classes = np.unique(m.labels)
    if classes.size < 2:
        raise ValueError("chi-square screen needs at least 2 classes present")
    categorical = set(categorical)
    kept = []
    report = FeatureScreenReport()
    for j, name in enumerate(m.feature_names):
        col = m.values[:, j]
        if name in categorical:
            codes = np.unique(col, return_inverse=True)[1]
        else:
            codes = _quantile_bins(col, bins)
        n_bins = int(codes.max()) + 1
        if n_bins < 2:
            kept.append(j)
            report.features.append(FeatureScreen(
                name=name, chi2=0.0, chi2_p=1.0, kept=True,
                warning="single bin: cannot reject independence",
            ))
            continue
        table = np.zeros((n_bins, classes.size), dtype=np.int64)
        for ci, c in enumerate(classes):
            table[:, ci] = np.bincount(codes[m.labels == c], minlength=n_bins)
        table = table[table.sum(axis=1) > 0]
        result = numstats.chi2_statistic(table)
        keep = result.p_value <= alpha
        if keep:
            kept.append(j)
        report.features.append(FeatureScreen(
            name=name, chi2=result.statistic, chi2_p=result.p_value, kept=keep
        ))
    return kept, report


def pearson_select(
    m: FeatureMatrix, alpha: float = 0.05, top_k: int | None = None
) -> tuple[list[int], FeatureScreenReport]:
    """Stage-2 screen: rank by |r| against the integer class codes.

    Raw p-values come from the Student-t test, adjusted by Bonferroni over
    all tested features; features with adjusted p below ``alpha`` are kept,
    ranked by |r| descending with ties broken by feature name ascending,
    then truncated to ``top_k`` if given.  Constant features cannot be
    tested and are excluded with a logged reason.
    """
    y = m.labels.astype(np.float64)
    report = FeatureScreenReport()
    tested: list[tuple[int, str, float, float]] = []
    for j, name in enumerate(m.feature_names):
        col = m.values[:, j]
        if np.all(col == col[0]):
            log.info("feature %r is constant; correlation undefined, excluded", name)
            report.features.append(FeatureScreen(
                name=name, kept=False, warning="constant feature: correlation undefined"
            ))
            continue
        r = numstats.pearson_r(col, y)
        p = numstats.pearson_p(r, m.n_rows)
        tested.append((j, name, r, p))
        report.features.append(FeatureScreen(name=name, r=r, p_raw=p))
    significant = []
    if tested:
        adjusted = numstats.bonferroni([t[3] for t in tested])
        for (j, name, r, _p), p_adj in zip(tested, adjusted):
            report.by_name(name).p_adj = float(p_adj)
            if p_adj < alpha:
                significant.append((j, name, r))
    significant.sort(key=lambda t: (-abs(t[2]), t[1]))
    if top_k is not None:
        significant = significant[:top_k]
    kept = []
    for rank, (j, name, _r) in enumerate(significant, start=1):
        entry = report.by_name(name)
        entry.kept = True
        entry.rank = rank
        kept.append(j)
    return kept, report


def random_oversample(train: FeatureMatrix, seed: int) -> FeatureMatrix:
    """Resample every minority class with replacement up to the majority count.

    Each added row duplicates an existing row of its class; the result is
    shuffled.  Classes draw from independent seed-derived streams, so the
    outcome does not depend on processing order or worker count.
    """
    counts = train.class_counts()
    present = np.flatnonzero(counts)
    if present.size < 2:
        raise ValueError("oversampling needs at least 2 classes present")
    majority = int(counts.max())
    pieces = [np.arange(train.n_rows, dtype=np.int64)]
    for c in present:
        deficit = majority - int(counts[c])
        if deficit == 0:
            continue
        rows = np.flatnonzero(train.labels == c)
        rng = generator(seed, "preprocess", "oversample", int(c))
        pieces.append(rng.choice(rows, size=deficit, replace=True))
    all_rows = np.concatenate(pieces)
    shuffle_rng = generator(seed, "preprocess", "oversample", "shuffle")
    all_rows = all_rows[shuffle_rng.permutation(all_rows.size)]
    return train.take_rows(all_rows)


def gaussian_noise(m: FeatureMatrix, fraction: float = 0.15, seed: int = 0) -> FeatureMatrix:
    """Add zero-mean Gaussian noise scaled to each feature's spread.

    Noise std is ``fraction`` times the feature's population std; constant
    features are untouched and labels never change.  Each feature draws
    from its own seed-derived stream.
    """
    if fraction < 0.0:
        raise ValueError(f"noise fraction must be >= 0, got {fraction}")
    if fraction == 0.0:
        return m
    values = np.array(m.values)
    stds = m.values.std(axis=0)
    for j in range(m.n_features):
        if stds[j] == 0.0:
            continue
        rng = generator(seed, "preprocess", "noise", j)
        values[:, j] += rng.normal(0.0, fraction * stds[j], size=m.n_rows)
    return m.replace(values=values)
