#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Three workloads: the raw split-search scan, a full tree fit, and a batch
of exact Shapley explanations.  Outputs are verified identical across
backends before timing.

Run: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from xtree import _kernels, explain, trees
from xtree.dataio import FeatureMatrix


def time_call(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_scan(backends, n, repeats):
    rng = np.random.default_rng(0)
    x = np.sort(rng.normal(size=n))
    y = rng.integers(0, 3, n)
    results = {}
    outputs = {}
    for name, module in backends.items():
        def run(scan=module.scan_split_classification):
            for _ in range(20):
                scan(x, y, 3)
        results[name] = time_call(run, repeats) / 20
        outputs[name] = module.scan_split_classification(x, y, 3)
    values = list(outputs.values())
    assert all(v == values[0] for v in values), "backends disagree on the scan"
    return results


def make_dataset(n, d, seed=1):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n, d))
    labels = (values[:, 0] + 0.5 * values[:, 1] > 0).astype(int) + rng.integers(0, 2, n)
    labels = np.clip(labels, 0, 2)
    return FeatureMatrix(values, tuple(f"f{j}" for j in range(d)), labels,
                         ("a", "b", "c"))


def with_backend(module):
    """Point the tree builder and explainer at one backend's kernels."""
    trees.scan_split_classification = module.scan_split_classification
    trees.scan_split_regression = module.scan_split_regression
    explain.shap_pair = module.shap_pair


def bench_fit(backends, n, d, repeats):
    m = make_dataset(n, d)
    params = trees.TreeParams(max_depth=10, min_samples_split=4)
    results = {}
    models = {}
    for name, module in backends.items():
        with_backend(module)
        results[name] = time_call(lambda: trees.fit_cart(m, params), repeats)
        models[name] = trees.fit_cart(m, params)
    payloads = [model.to_payload() for model in models.values()]
    import json
    assert all(json.dumps(p) == json.dumps(payloads[0]) for p in payloads), \
        "backends grew different trees"
    return results


def bench_shap(backends, n_rows, n_background, repeats):
    m = make_dataset(800, 12, seed=2)
    with_backend(_kernels.available_backends()["python"])
    model = trees.fit_cart(m, trees.TreeParams(max_depth=8, min_samples_split=2))
    rng = np.random.default_rng(3)
    rows = rng.normal(size=(n_rows, 12))
    background = rng.normal(size=(n_background, 12))
    results = {}
    outputs = {}
    for name, module in backends.items():
        with_backend(module)

        def run():
            for i in range(rows.shape[0]):
                explain.tree_shap(model, rows[i], background)

        results[name] = time_call(run, repeats)
        outputs[name] = explain.tree_shap(model, rows[0], background).phi
    values = list(outputs.values())
    assert all(np.array_equal(v, values[0]) for v in values), \
        "backends disagree on attributions"
    return results


def print_table(title, results, unit="s"):
    print(f"\n{title}")
    baseline = results.get("python")
    for name in sorted(results):
        line = f"  {name:10s} {results[name]:.6f} {unit}"
        if baseline and name != "python":
            line += f"   ({baseline / results[name]:.1f}x vs python)"
        print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()

    backends = _kernels.available_backends()
    print(f"available backends: {', '.join(sorted(backends))}")
    print(f"selected at import: {_kernels.BACKEND}")
    if "compiled" not in backends:
        print("note: compiled extension not built; timing the fallback only")

    repeats = 2 if args.quick else 3
    scan_n = 20_000 if args.quick else 100_000
    fit_n, fit_d = (5_000, 10) if args.quick else (34_272, 20)
    shap_rows, shap_bg = (10, 20) if args.quick else (40, 60)

    print_table(f"split scan (n={scan_n}, 3 classes, per call)",
                bench_scan(backends, scan_n, repeats))
    print_table(f"tree fit (n={fit_n}, d={fit_d}, depth 10)",
                bench_fit(backends, fit_n, fit_d, repeats))
    print_table(f"shap explanations ({shap_rows} rows x {shap_bg} background)",
                bench_shap(backends, shap_rows, shap_bg, repeats))

    with_backend(backends[_kernels.BACKEND])  # restore the import-time choice


if __name__ == "__main__":
    main()
