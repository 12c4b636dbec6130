"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_speedups`` implements the split-search scans used
by every tree builder and the per-pair Shapley walk used by the explainer.
It is selected at import when present; otherwise the NumPy reference
implementations in ``_pyref`` take over with identical results.  Set
``XTREE_KERNELS=python`` to force the fallback (used by the benchmark).
"""

from __future__ import annotations

import os

from . import _pyref

try:
    from . import _speedups
except ImportError:
    _speedups = None

if os.environ.get("XTREE_KERNELS", "").lower() == "python" or _speedups is None:
    _impl = _pyref
    BACKEND = "python"
else:
    _impl = _speedups
    BACKEND = "compiled"

scan_split_classification = _impl.scan_split_classification
scan_split_regression = _impl.scan_split_regression
shap_pair = _impl.shap_pair


def available_backends() -> dict:
    """Name -> module map of every kernel backend importable here."""
    backends = {"python": _pyref}
    if _speedups is not None:
        backends["compiled"] = _speedups
    return backends
