# Compiled twins of the kernels in _pyref.py.  Semantics must stay
# bit-identical: integer count accumulation, one division per child, and
# first-maximum selection so both backends choose the same splits.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def scan_split_classification(const double[::1] x_sorted, const long long[::1] y_sorted, int n_classes):
    cdef Py_ssize_t n = x_sorted.shape[0]
    cdef Py_ssize_t i, c, cut
    cdef long long a, b, cl, cr
    cdef double n_left, n_right, score
    cdef double best_score = 0.0
    cdef Py_ssize_t best_cut = -1
    cdef long long[::1] counts = np.zeros(n_classes, dtype=np.int64)
    cdef long long[::1] total = np.zeros(n_classes, dtype=np.int64)
    cdef double lo, hi, threshold

    if n < 2:
        return None
    for i in range(n):
        total[y_sorted[i]] += 1
    for i in range(1, n):
        counts[y_sorted[i - 1]] += 1
        if x_sorted[i] > x_sorted[i - 1]:
            a = 0
            b = 0
            for c in range(n_classes):
                cl = counts[c]
                cr = total[c] - cl
                a += cl * cl
                b += cr * cr
            n_left = <double> i
            n_right = <double> (n - i)
            score = (<double> a) / n_left + (<double> b) / n_right
            if best_cut < 0 or score > best_score:
                best_score = score
                best_cut = i
    if best_cut < 0:
        return None
    cut = best_cut
    lo = x_sorted[cut - 1]
    hi = x_sorted[cut]
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return best_score, threshold, cut


def scan_split_regression(const double[::1] x_sorted, const double[::1] t_sorted):
    cdef Py_ssize_t n = x_sorted.shape[0]
    cdef Py_ssize_t i, cut
    cdef double s_left = 0.0
    cdef double s_total = 0.0
    cdef double s_right, n_left, n_right, score
    cdef double best_score = 0.0
    cdef Py_ssize_t best_cut = -1
    cdef double lo, hi, threshold

    if n < 2:
        return None
    for i in range(n):
        s_total += t_sorted[i]
    for i in range(1, n):
        s_left += t_sorted[i - 1]
        if x_sorted[i] > x_sorted[i - 1]:
            s_right = s_total - s_left
            n_left = <double> i
            n_right = <double> (n - i)
            score = (s_left * s_left) / n_left + (s_right * s_right) / n_right
            if best_cut < 0 or score > best_score:
                best_score = score
                best_cut = i
    if best_cut < 0:
        return None
    cut = best_cut
    # recompute the left prefix sequentially so the threshold pick matches
    lo = x_sorted[cut - 1]
    hi = x_sorted[cut]
    threshold = lo + (hi - lo) / 2.0
    if threshold >= hi:
        threshold = lo
    return best_score, threshold, cut


cdef void _walk(
    const long long[::1] feature,
    const double[::1] threshold,
    const long long[::1] left,
    const long long[::1] right,
    const double[:, ::1] values,
    const double[::1] x,
    const double[::1] b,
    const double[:, ::1] coeff,
    double[:, ::1] phi,
    signed char[::1] state,
    long long[::1] in_list,
    long long[::1] out_list,
    Py_ssize_t n_in,
    Py_ssize_t n_out,
    Py_ssize_t node,
):
    cdef long long f = feature[node]
    cdef Py_ssize_t i, c, ff
    cdef double t, w
    cdef bint go_x, go_b
    cdef Py_ssize_t n_out_dims = values.shape[1]

    if f < 0:
        for i in range(n_in):
            ff = <Py_ssize_t> in_list[i]
            w = coeff[n_in - 1, n_out]
            for c in range(n_out_dims):
                phi[ff, c] += values[node, c] * w
        for i in range(n_out):
            ff = <Py_ssize_t> out_list[i]
            w = coeff[n_in, n_out - 1]
            for c in range(n_out_dims):
                phi[ff, c] -= values[node, c] * w
        return
    t = threshold[node]
    go_x = x[f] <= t
    go_b = b[f] <= t
    if state[f] == 1:
        _walk(feature, threshold, left, right, values, x, b, coeff, phi,
              state, in_list, out_list, n_in, n_out,
              <Py_ssize_t> (left[node] if go_x else right[node]))
    elif state[f] == 2:
        _walk(feature, threshold, left, right, values, x, b, coeff, phi,
              state, in_list, out_list, n_in, n_out,
              <Py_ssize_t> (left[node] if go_b else right[node]))
    elif go_x == go_b:
        _walk(feature, threshold, left, right, values, x, b, coeff, phi,
              state, in_list, out_list, n_in, n_out,
              <Py_ssize_t> (left[node] if go_x else right[node]))
    else:
        state[f] = 1
        in_list[n_in] = f
        _walk(feature, threshold, left, right, values, x, b, coeff, phi,
              state, in_list, out_list, n_in + 1, n_out,
              <Py_ssize_t> (left[node] if go_x else right[node]))
        state[f] = 2
        out_list[n_out] = f
        _walk(feature, threshold, left, right, values, x, b, coeff, phi,
              state, in_list, out_list, n_in, n_out + 1,
              <Py_ssize_t> (left[node] if go_b else right[node]))
        state[f] = 0


def shap_pair(feature, threshold, left, right, values, x, b, coeff, phi):
    cdef const long long[::1] feature_v = feature
    cdef const double[::1] threshold_v = threshold
    cdef const long long[::1] left_v = left
    cdef const long long[::1] right_v = right
    cdef const double[:, ::1] values_v = values
    cdef const double[::1] x_v = x
    cdef const double[::1] b_v = b
    cdef const double[:, ::1] coeff_v = coeff
    cdef double[:, ::1] phi_v = phi
    cdef Py_ssize_t d = x_v.shape[0]
    cdef signed char[::1] state = np.zeros(d, dtype=np.int8)
    cdef long long[::1] in_list = np.zeros(d, dtype=np.int64)
    cdef long long[::1] out_list = np.zeros(d, dtype=np.int64)
    _walk(feature_v, threshold_v, left_v, right_v, values_v, x_v, b_v,
          coeff_v, phi_v, state, in_list, out_list, 0, 0, 0)
