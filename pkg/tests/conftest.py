import re
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from xtree.dataio import FeatureMatrix


def make_matrix(values, labels, class_names=None, feature_names=None,
                categorical=None) -> FeatureMatrix:
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if class_names is None:
        class_names = tuple(f"class{c}" for c in range(int(labels.max()) + 1))
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(values.shape[1]))
    return FeatureMatrix(values, feature_names, labels, class_names,
                         encoder_map=categorical or {})


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_CRITERION = re.compile(r"test_c(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if status in ("passed", "skipped") and getattr(report, "when", "call") != "call":
                continue
            match = _CRITERION.search(nodeid)
            if not match:
                continue
            number = int(match.group(1))
            label = match.group(2)
            outcome = {"passed": "PASS", "failed": "FAIL", "error": "FAIL",
                       "skipped": "SKIP"}[status]
            # a failure in any phase wins over an earlier pass record
            if results.get(number, ("", "PASS"))[1] != "FAIL":
                results[number] = (label, outcome)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        label, outcome = results[number]
        terminalreporter.write_line(f"criterion {number:2d} [{label}]: {outcome}")
