"""xtree: explainable tree-model toolkit for network-flow anomaly detection.

Feature-matrix ingestion, statistical feature screening, class balancing,
noise-robust training of five classifier families, exact interventional
SHAP and Morris elementary-effects explanation, and a full evaluation
harness behind the ``xtree`` command-line tool.
"""

__version__ = "0.1.0"
