"""Pure-Python (NumPy) reference kernels.

These are the fallback implementations selected when the compiled
extension is unavailable.  Each kernel mirrors its Cython twin
operation-for-operation: scores are accumulated with the same arithmetic
(integer class counts, sequential prefix sums, one division per side) so
both backends pick identical splits.
"""

from __future__ import annotations

import numpy as np


def scan_split_classification(x_sorted, y_sorted, n_classes):
    """Best binary split of one pre-sorted feature column for Gini impurity.

    Returns ``(score, threshold, n_left)`` where ``score`` is
    ``sum(left_counts^2)/n_left + sum(right_counts^2)/n_right`` (maximizing
    it minimizes the weighted Gini of the children), or ``None`` when the
    column is constant.  Among equal scores the smallest threshold wins.
    """
    n = x_sorted.shape[0]
    boundaries = np.flatnonzero(x_sorted[1:] > x_sorted[:-1]) + 1
    if boundaries.size == 0:
        return None
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), y_sorted] = 1
    prefix = np.cumsum(onehot, axis=0)
    total = prefix[-1]
    left = prefix[boundaries - 1]
    right = total[np.newaxis, :] - left
    n_left = boundaries.astype(np.float64)
    n_right = (n - boundaries).astype(np.float64)
    a = np.sum(left * left, axis=1)
    b = np.sum(right * right, axis=1)
    scores = a / n_left + b / n_right
    k = int(np.argmax(scores))
    cut = int(boundaries[k])
    lo = float(x_sorted[cut - 1])
    hi = float(x_sorted[cut])
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return float(scores[k]), threshold, cut


def scan_split_regression(x_sorted, t_sorted):
    """Best binary split of one pre-sorted column for variance reduction.

    Returns ``(score, threshold, n_left)`` with ``score`` equal to
    ``sum_left^2/n_left + sum_right^2/n_right`` (maximizing it minimizes
    the weighted within-child sum of squares), or ``None`` when the column
    is constant.
    """
    n = x_sorted.shape[0]
    boundaries = np.flatnonzero(x_sorted[1:] > x_sorted[:-1]) + 1
    if boundaries.size == 0:
        return None
    prefix = np.cumsum(t_sorted)
    total = prefix[-1]
    s_left = prefix[boundaries - 1]
    s_right = total - s_left
    n_left = boundaries.astype(np.float64)
    n_right = (n - boundaries).astype(np.float64)
    scores = (s_left * s_left) / n_left + (s_right * s_right) / n_right
    k = int(np.argmax(scores))
    cut = int(boundaries[k])
    lo = float(x_sorted[cut - 1])
    hi = float(x_sorted[cut])
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return float(scores[k]), threshold, cut


def shap_pair(feature, threshold, left, right, values, x, b, coeff, phi):
    """Accumulate exact interventional Shapley values for one (x, b) pair.

    Walks every coalition-feasible root-to-leaf path of one tree.  A path
    node whose foreground and background rows disagree forks the walk:
    following the foreground requires the split feature inside the
    coalition, following the background requires it outside.  Each reached
    leaf contributes its value, weighted by the closed-form sum over the
    coalitions compatible with the path constraints (``coeff[p, q]`` is
    that sum for p required-in and q required-out features besides the
    one being credited).  ``phi`` has shape (n_features, n_outputs) and is
    accumulated in place.
    """
    d = x.shape[0]
    state = np.zeros(d, dtype=np.int8)
    in_list: list[int] = []
    out_list: list[int] = []

    def walk(node: int) -> None:
        f = int(feature[node])
        if f < 0:
            val = values[node]
            n_in = len(in_list)
            n_out = len(out_list)
            for ff in in_list:
                phi[ff] += val * coeff[n_in - 1, n_out]
            for ff in out_list:
                phi[ff] -= val * coeff[n_in, n_out - 1]
            return
        t = threshold[node]
        go_x = x[f] <= t
        go_b = b[f] <= t
        st = state[f]
        if st == 1:
            walk(left[node] if go_x else right[node])
        elif st == 2:
            walk(left[node] if go_b else right[node])
        elif go_x == go_b:
            walk(left[node] if go_x else right[node])
        else:
            state[f] = 1
            in_list.append(f)
            walk(left[node] if go_x else right[node])
            in_list.pop()
            state[f] = 2
            out_list.append(f)
            walk(left[node] if go_b else right[node])
            out_list.pop()
            state[f] = 0

    walk(0)
