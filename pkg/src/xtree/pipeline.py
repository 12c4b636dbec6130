"""Stage orchestration: checkpointed runs of the full workflow.

Stages (preprocess, train, evaluate, explain, report) communicate only
through files under the run's output directory, so each can be re-run or
replaced in isolation.  A manifest records config, derived seeds, and
input/output checksums per stage; everything except the manifest's
timestamps and the wall-clock timing files is a pure function of the
master seed and the input data.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import time
from pathlib import Path

import numpy as np

from . import __version__, dataio, explain, metrics, preprocess
from .config import PipelineConfig
from .model_registry import fit_model, load_model, save_model
from .rng import derive_seed, generator
from .trees import export_tree


class MissingCheckpointError(ValueError):
    """A stage prerequisite has not been produced yet."""


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "class"


def threads_cap() -> int:
    """Parallelism cap from XTREE_THREADS (results never depend on it)."""
    raw = os.environ.get("XTREE_THREADS")
    if raw is None:
        return 1
    cap = int(raw)
    if cap < 1:
        raise ValueError("XTREE_THREADS must be a positive integer")
    return cap


class PipelinePaths:
    def __init__(self, output_dir: Path):
        self.root = Path(output_dir)
        self.checkpoints = self.root / "checkpoints"
        self.models = self.root / "models"
        self.eval = self.root / "eval"
        self.explain = self.root / "explain"
        self.manifest = self.root / "manifest.json"
        self.report = self.root / "report.json"

    def checkpoint(self, name: str) -> Path:
        return self.checkpoints / name

    def model_file(self, kind: str) -> Path:
        return self.models / f"{kind}.model.json"


def stratified_sample_rows(m: dataio.FeatureMatrix, size: int, seed: int,
                           *tags) -> np.ndarray:
    """Deterministic per-class proportional sample of row indices."""
    size = min(size, m.n_rows)
    counts = m.class_counts()
    present = np.flatnonzero(counts)
    quotas = {}
    remainders = []
    allocated = 0
    for c in present:
        exact = size * counts[c] / m.n_rows
        quotas[int(c)] = min(int(exact), int(counts[c]))
        allocated += quotas[int(c)]
        remainders.append((exact - int(exact), int(c)))
    remainders.sort(key=lambda t: (-t[0], t[1]))
    i = 0
    while allocated < size:
        c = remainders[i % len(remainders)][1]
        if quotas[c] < counts[c]:
            quotas[c] += 1
            allocated += 1
        i += 1
    picked = []
    for c, quota in quotas.items():
        if quota == 0:
            continue
        rows = np.flatnonzero(m.labels == c)
        rng = generator(seed, *tags, c)
        picked.append(rng.choice(rows, size=quota, replace=False))
    return np.sort(np.concatenate(picked))


class Pipeline:
    """One configured run; each method is one CLI subcommand."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.paths = PipelinePaths(config.output_dir)

    # -- manifest ----------------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.paths.manifest.exists():
            return json.loads(self.paths.manifest.read_text(encoding="utf-8"))
        return {
            "tool_version": __version__,
            "master_seed": self.config.seed,
            "config": self.config.snapshot(),
            "threads_cap": threads_cap(),
            "stages": {},
        }

    def _record_stage(self, name: str, inputs: list[Path], outputs: list[Path],
                      started: float, extra: dict | None = None) -> None:
        manifest = self._load_manifest()
        manifest["stages"][name] = {
            "seed": self.config.seed,
            "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
            "outputs": {str(p): _sha256(p) for p in outputs if p.exists()},
            "started_at": started,
            "finished_at": time.time(),
            **(extra or {}),
        }
        _write_json(self.paths.manifest, manifest)

    def _require_checkpoint(self, name: str, producer: str) -> dataio.FeatureMatrix:
        prefix = self.paths.checkpoint(name)
        meta = prefix.with_suffix(prefix.suffix + ".meta.json")
        if not meta.exists():
            raise MissingCheckpointError(
                f"checkpoint {name!r} not found under {self.paths.checkpoints}; "
                f"run `xtree {producer}` first"
            )
        return dataio.load_snapshot(prefix)

    def _require_model(self, kind: str):
        path = self.paths.model_file(kind)
        if not path.exists():
            raise MissingCheckpointError(
                f"model file {path} not found; run `xtree train` first"
            )
        return load_model(path)

    # -- preprocess --------------------------------------------------------

    def preprocess(self) -> dict:
        """Ingest, dedup, impute, scale, screen, split, balance, add noise."""
        cfg = self.config
        pre = cfg.preprocessing
        started = time.time()
        with open(cfg.dataset_path, encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh))
        schema = cfg.schema(header)
        raw = dataio.load_csv(cfg.dataset_path, schema, allow_missing=cfg.allow_missing)
        deduped, removed = dataio.deduplicate(raw)
        outputs = []
        outputs += dataio.save_snapshot(deduped, self.paths.checkpoint("01_dedup"))
        categorical = schema.categorical_columns

        if pre.strict_no_leak:
            split = dataio.stratified_split(deduped, cfg.split_ratio, cfg.seed)
            iqr_params = preprocess.iqr_fit(split.train, k=pre.iqr_k, exempt=categorical)
            train_m, iqr_report = preprocess.iqr_apply(split.train, iqr_params)
            test_m, _ = preprocess.iqr_apply(split.test, iqr_params)
            z = preprocess.zscore_fit(train_m, exempt=categorical)
            train_m = preprocess.zscore_apply(train_m, z)
            test_m = preprocess.zscore_apply(test_m, z)
            kept1, report1 = preprocess.chi_square_filter(
                train_m, alpha=pre.chi2_alpha, bins=pre.chi2_bins, categorical=categorical
            )
            stage2_input = train_m.select_features(kept1)
            kept2, report2 = preprocess.pearson_select(
                stage2_input, alpha=pre.pearson_alpha, top_k=pre.top_k
            )
            kept = [kept1[i] for i in kept2]
            train_scr = train_m.select_features(kept)
            test_scr = test_m.select_features(kept)
        else:
            imputed, iqr_report = preprocess.iqr_impute(deduped, k=pre.iqr_k,
                                                        exempt=categorical)
            outputs += dataio.save_snapshot(imputed, self.paths.checkpoint("02_iqr"))
            z = preprocess.zscore_fit(imputed, exempt=categorical)
            scaled = preprocess.zscore_apply(imputed, z)
            outputs += dataio.save_snapshot(scaled, self.paths.checkpoint("03_zscore"))
            kept1, report1 = preprocess.chi_square_filter(
                scaled, alpha=pre.chi2_alpha, bins=pre.chi2_bins, categorical=categorical
            )
            stage2_input = scaled.select_features(kept1)
            kept2, report2 = preprocess.pearson_select(
                stage2_input, alpha=pre.pearson_alpha, top_k=pre.top_k
            )
            kept = [kept1[i] for i in kept2]
            screened = scaled.select_features(kept)
            outputs += dataio.save_snapshot(screened, self.paths.checkpoint("04_screened"))
            split = dataio.stratified_split(screened, cfg.split_ratio, cfg.seed)
            train_scr, test_scr = split.train, split.test

        balanced = preprocess.random_oversample(
            train_scr, derive_seed(cfg.seed, "pipeline", "balance")
        )
        noisy = preprocess.gaussian_noise(
            balanced, fraction=pre.noise_fraction,
            seed=derive_seed(cfg.seed, "pipeline", "noise"),
        )
        outputs += dataio.save_snapshot(train_scr, self.paths.checkpoint("05_train"))
        outputs += dataio.save_snapshot(test_scr, self.paths.checkpoint("06_test"))
        outputs += dataio.save_snapshot(balanced, self.paths.checkpoint("07_train_balanced"))
        outputs += dataio.save_snapshot(noisy, self.paths.checkpoint("08_train_noisy"))

        screen_report = preprocess.FeatureScreenReport.merged(report1, report2)
        outputs.append(_write_json(self.paths.root / "screen_report.json",
                                   screen_report.to_json_obj()))
        outputs.append(_write_json(self.paths.root / "iqr_report.json",
                                   iqr_report.to_json_obj()))
        outputs.append(_write_json(self.paths.root / "zscore_params.json",
                                   z.to_json_obj()))
        summary = {
            "n_rows_ingested": raw.n_rows,
            "duplicates_removed": removed,
            "class_counts": {name: int(c) for name, c in
                             zip(raw.class_names, raw.class_counts())},
            "train_counts": {name: int(c) for name, c in
                             zip(train_scr.class_names, train_scr.class_counts())},
            "test_counts": {name: int(c) for name, c in
                            zip(test_scr.class_names, test_scr.class_counts())},
            "balanced_counts": {name: int(c) for name, c in
                                zip(balanced.class_names, balanced.class_counts())},
            "n_features_initial": raw.n_features,
            "kept_features": list(train_scr.feature_names),
            "strict_no_leak": pre.strict_no_leak,
        }
        outputs.append(_write_json(self.paths.root / "preprocess_summary.json", summary))
        self._record_stage(
            "preprocess", [Path(cfg.dataset_path)], outputs, started,
            extra={"derived_seeds": {
                "balance": derive_seed(cfg.seed, "pipeline", "balance"),
                "noise": derive_seed(cfg.seed, "pipeline", "noise"),
            }, "strict_no_leak": pre.strict_no_leak},
        )
        return summary

    # -- train ---------------------------------------------------------------

    def train(self) -> list[str]:
        """Fit every configured model on the final training checkpoint."""
        started = time.time()
        noisy = self._require_checkpoint("08_train_noisy", "preprocess")
        outputs = []
        kinds = []
        for spec in self.config.model_specs():
            model = fit_model(spec, noisy, seed=self.config.seed, purpose=("train",))
            outputs.append(save_model(model, self.paths.model_file(spec["kind"])))
            kinds.append(spec["kind"])
        inputs = [self.paths.checkpoint("08_train_noisy").with_suffix(".values.csv")]
        self._record_stage("train", inputs, outputs, started, extra={
            "models": kinds,
            "derived_seeds": {
                kind: derive_seed(self.config.seed, "model", kind, "train")
                for kind in kinds
            },
        })
        return kinds

    # -- evaluate --------------------------------------------------------------

    def evaluate(self) -> dict:
        """Train/test metrics, cross-validation, and the timing comparison."""
        cfg = self.config
        started = time.time()
        noisy = self._require_checkpoint("08_train_noisy", "preprocess")
        test = self._require_checkpoint("06_test", "preprocess")
        train_plain = self._require_checkpoint("05_train", "preprocess")
        outputs = []
        results = {}
        for spec in cfg.model_specs():
            kind = spec["kind"]
            model = self._require_model(kind)
            train_report = metrics.evaluate_model(model, noisy, tag="train")
            test_report = metrics.evaluate_model(model, test, tag="test")
            if cfg.paper_order_cv:
                cv = metrics.kfold_cv(spec, noisy, k=cfg.cv_k, seed=cfg.seed)
            else:
                cv = metrics.kfold_cv(
                    spec, train_plain, k=cfg.cv_k, seed=cfg.seed,
                    train_transform=self._cv_fold_transform(),
                )
            results[kind] = {"train": train_report, "test": test_report, "cv": cv}
            outputs.append(_write_json(self.paths.eval / f"{kind}.eval.json", {
                "kind": kind,
                "train": train_report.to_json_obj(),
                "test": test_report.to_json_obj(),
                "cv": cv.to_json_obj(),
            }))
            for c, points in test_report.roc_points.items():
                name = _slug(test.class_names[c])
                outputs.append(_write_csv(self.paths.eval / kind / f"roc_{name}.csv",
                                          ["fpr", "tpr"], points))
            for c, points in test_report.pr_points.items():
                name = _slug(test.class_names[c])
                outputs.append(_write_csv(self.paths.eval / kind / f"pr_{name}.csv",
                                          ["recall", "precision"], points))
        timing = metrics.timing_benchmark(cfg.model_specs(), noisy, test,
                                          repeats=cfg.timing_repeats, seed=cfg.seed)
        # timing is wall-clock and machine-dependent: kept out of report.json
        _write_json(self.paths.eval / "timing.json", timing.to_json_obj())
        _write_csv(
            self.paths.eval / "timing_radar.csv",
            ["model", "train_seconds", "infer_seconds",
             "train_normalized", "infer_normalized"],
            [(e.name, e.train_seconds, e.infer_seconds,
              e.train_normalized, e.infer_normalized) for e in timing.entries],
        )
        self._record_stage(
            "evaluate",
            [self.paths.checkpoint("08_train_noisy").with_suffix(".values.csv")],
            outputs, started, extra={"paper_order_cv": cfg.paper_order_cv},
        )
        return results

    def _cv_fold_transform(self):
        cfg = self.config

        def transform(train_m, fold_index):
            fold_seed = derive_seed(cfg.seed, "pipeline", "cv-fold", fold_index)
            balanced = preprocess.random_oversample(train_m, fold_seed)
            return preprocess.gaussian_noise(
                balanced, fraction=cfg.preprocessing.noise_fraction, seed=fold_seed
            )

        return transform

    # -- explain ---------------------------------------------------------------

    def explain(self) -> dict:
        """Per-row attributions, the global summary, and Morris screening."""
        cfg = self.config
        started = time.time()
        noisy = self._require_checkpoint("08_train_noisy", "preprocess")
        test = self._require_checkpoint("06_test", "preprocess")
        model = self._require_model("decision_tree")
        bg_rows = stratified_sample_rows(noisy, cfg.explain.background_size,
                                         cfg.seed, "pipeline", "background")
        background = noisy.take_rows(bg_rows)
        explain_rows = stratified_sample_rows(test, cfg.explain.explain_rows,
                                              cfg.seed, "pipeline", "explain-rows")
        subset = test.take_rows(explain_rows)

        row_records = []
        for i in range(subset.n_rows):
            exp = explain.tree_shap(model, subset.values[i], background)
            row_records.append({
                "row": int(explain_rows[i]),
                "label": subset.class_names[subset.labels[i]],
                "base_values": [float(v) for v in exp.base_values],
                "model_output": [float(v) for v in exp.model_output],
                "phi": [[float(v) for v in row] for row in exp.phi],
            })
        summary = explain.shap_summary(model, subset, background)

        design_seedless = explain.MorrisDesign.from_matrix(
            noisy, n_trajectories=cfg.explain.morris_r, n_levels=cfg.explain.morris_p
        )
        morris_by_class = {}
        for c, cls in enumerate(noisy.class_names):
            design = explain.MorrisDesign(
                bounds=design_seedless.bounds,
                n_trajectories=cfg.explain.morris_r, n_levels=cfg.explain.morris_p,
                seed=derive_seed(cfg.seed, "pipeline", "morris", c),
                feature_names=noisy.feature_names,
            )
            morris_by_class[cls] = explain.morris_screening(
                explain.class_probability_fn(model, c), design
            )

        outputs = [
            _write_json(self.paths.explain / "shap_rows.json", row_records),
            _write_json(self.paths.explain / "shap_summary.json",
                        [{"class": c, "feature": f, "mean_abs_phi": v, "rank": r}
                         for c, f, v, r in summary.to_rows()]),
            _write_csv(self.paths.explain / "shap_summary.csv",
                       ["class", "feature", "mean_abs_phi", "rank"],
                       summary.to_rows()),
            _write_json(self.paths.explain / "morris.json",
                        [{"class": cls, "feature": f, "mu_star": mu, "sigma": sg,
                          "ci_low": lo, "ci_high": hi}
                         for cls, result in morris_by_class.items()
                         for f, mu, sg, lo, hi in result.to_rows()]),
            _write_csv(self.paths.explain / "morris.csv",
                       ["class", "feature", "mu_star", "sigma", "ci_low", "ci_high"],
                       [(cls, f, mu, sg, lo, hi)
                        for cls, result in morris_by_class.items()
                        for f, mu, sg, lo, hi in result.to_rows()]),
        ]
        self._record_stage("explain", [self.paths.model_file("decision_tree")],
                           outputs, started, extra={"derived_seeds": {
                               "background_per_class": {
                                   cls: derive_seed(cfg.seed, "pipeline", "background", c)
                                   for c, cls in enumerate(noisy.class_names)},
                               "morris_per_class": {
                                   cls: derive_seed(cfg.seed, "pipeline", "morris", c)
                                   for c, cls in enumerate(noisy.class_names)},
                           }})
        return {"shap_summary": summary, "morris": morris_by_class}

    # -- report ----------------------------------------------------------------

    def report(self) -> dict:
        """Consolidate every stage's artifacts into report.json."""
        started = time.time()
        root = self.paths.root
        summary_path = root / "preprocess_summary.json"
        if not summary_path.exists():
            raise MissingCheckpointError(
                f"{summary_path} not found; run `xtree preprocess` first"
            )
        report = {
            "report_version": 1,
            "config": self.config.snapshot(),
            "dataset": json.loads(summary_path.read_text(encoding="utf-8")),
            "screening": json.loads((root / "screen_report.json").read_text(encoding="utf-8")),
            "models": {},
            "explain": None,
            "tree": None,
        }
        for spec in self.config.model_specs():
            eval_path = self.paths.eval / f"{spec['kind']}.eval.json"
            if not eval_path.exists():
                raise MissingCheckpointError(
                    f"{eval_path} not found; run `xtree evaluate` first"
                )
            obj = json.loads(eval_path.read_text(encoding="utf-8"))
            report["models"][spec["kind"]] = {
                "train": obj["train"], "test": obj["test"], "cv": obj["cv"],
            }
        shap_path = self.paths.explain / "shap_summary.json"
        morris_path = self.paths.explain / "morris.json"
        if shap_path.exists() and morris_path.exists():
            report["explain"] = {
                "shap_summary": json.loads(shap_path.read_text(encoding="utf-8")),
                "morris": json.loads(morris_path.read_text(encoding="utf-8")),
            }
        tree_model_path = self.paths.model_file("decision_tree")
        if tree_model_path.exists():
            rendering = export_tree(load_model(tree_model_path), max_depth=4)
            report["tree"] = {"text": rendering.text, "dot": rendering.dot}
            (root / "tree.txt").write_text(rendering.text, encoding="utf-8")
            (root / "tree.dot").write_text(rendering.dot, encoding="utf-8")
        outputs = [_write_json(self.paths.report, report)]
        self._record_stage("report", [], outputs, started)
        return report


def format_report_table(report: dict) -> str:
    """Render the per-model metric grid (train and test blocks)."""
    headers = ["Model", "Trn Acc", "Trn Prec", "Trn Rec", "Trn F1",
               "Tst Acc", "Tst Prec", "Tst Rec", "Tst F1", "Kappa", "CV mean", "CV std"]
    rows = []
    for kind, blocks in report["models"].items():
        tr, te, cv = blocks["train"], blocks["test"], blocks["cv"]
        rows.append([
            kind,
            f"{tr['accuracy']:.4f}", f"{tr['precision_macro']:.4f}",
            f"{tr['recall_macro']:.4f}", f"{tr['f1_macro']:.4f}",
            f"{te['accuracy']:.4f}", f"{te['precision_macro']:.4f}",
            f"{te['recall_macro']:.4f}", f"{te['f1_macro']:.4f}",
            f"{te['kappa']:.4f}", f"{cv['mean']:.4f}", f"{cv['std']:.4f}",
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
