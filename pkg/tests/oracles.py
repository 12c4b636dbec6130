"""Independent slow oracles used to freeze expected values.

Everything here deliberately avoids the package's own evaluation paths:
special functions are checked against adaptive-Simpson quadrature of the
defining integrals, ROC AUC against the pairwise-comparison probability,
and boosting convergence against the closed-form single-leaf recurrence.
"""

from __future__ import annotations

import math

import numpy as np


def adaptive_simpson(f, a: float, b: float, rel_tol: float = 1e-13) -> float:
    """Classic recursive Simpson quadrature with a relative tolerance."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = max(abs(whole) * rel_tol, 1e-300)
    return _simpson_step(f, a, fa, b, fb, m, fm, whole, tol, 60)


def _simpson_step(f, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (
        _simpson_step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + _simpson_step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    )


def gamma_p_quad(s: float, x: float) -> float:
    """Lower regularized incomplete gamma by quadrature of the density."""
    if x <= 0.0:
        return 0.0
    if s >= 1.0:
        lg = math.lgamma(s)

        def density(t: float) -> float:
            if t == 0.0:
                return 1.0 if s == 1.0 else 0.0
            return math.exp((s - 1.0) * math.log(t) - t - lg)

        return adaptive_simpson(density, 0.0, x)
    # s < 1: substitute t = u^(1/s) to remove the t=0 singularity
    scale = math.exp(-math.lgamma(s)) / s

    def smooth(u: float) -> float:
        return math.exp(-(u ** (1.0 / s)))

    return scale * adaptive_simpson(smooth, 0.0, x ** s)


def gamma_q_quad(s: float, x: float) -> float:
    """Upper regularized incomplete gamma by direct tail quadrature."""
    if x <= 0.0:
        return 1.0
    lg = math.lgamma(s)

    def density(t: float) -> float:
        return math.exp((s - 1.0) * math.log(t) - t - lg)

    cutoff = x + 250.0 + 5.0 * s  # integrand there is ~e^-250 of its value at x
    return adaptive_simpson(density, x, cutoff)


def chi2_sf_quad(x: float, dof: int) -> float:
    return gamma_q_quad(dof / 2.0, x / 2.0)


def beta_inc_quad(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta by quadrature with endpoint substitution."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if x > 0.5:
        return 1.0 - beta_inc_quad(b, a, 1.0 - x)
    # substitute t = u^(1/a); on [0, x] with x <= 1/2 the other endpoint is tame
    log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)

    def smooth(u: float) -> float:
        t = u ** (1.0 / a)
        return (1.0 - t) ** (b - 1.0)

    return math.exp(log_norm - math.log(a)) * adaptive_simpson(smooth, 0.0, x ** a)


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability by quadrature of the t density."""
    t = abs(t)
    if t == 0.0:
        return 1.0
    c = math.exp(math.lgamma((dof + 1) / 2.0) - math.lgamma(dof / 2.0)) / math.sqrt(
        dof * math.pi
    )

    def inverted(w: float) -> float:
        # u = 1/w maps the [t, inf) tail onto (0, 1/t]
        if w == 0.0:
            return c if dof == 1 else 0.0
        u = 1.0 / w
        return c * (1.0 + u * u / dof) ** (-(dof + 1) / 2.0) / (w * w)

    return 2.0 * adaptive_simpson(inverted, 0.0, 1.0 / t)


def roc_auc_pairwise(y_binary, scores) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie) over all positive/negative pairs."""
    y = np.asarray(y_binary, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    pos = s[y]
    neg = s[~y]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("pairwise AUC needs both positives and negatives")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def gbdt_single_class_recurrence(n_rows: int, l2_leaf_reg: float, learning_rate: float,
                                 n_iterations: int, n_classes: int = 3) -> float:
    """Probability of the lone class after boosting identical rows.

    With every row identical the ensemble collapses to one leaf per class
    per round, giving a scalar score recurrence.
    """
    scores = np.zeros(n_classes)
    for _ in range(n_iterations):
        e = np.exp(scores - scores.max())
        p = e / e.sum()
        for c in range(n_classes):
            g = n_rows * (p[c] - (1.0 if c == 0 else 0.0))
            h = n_rows * p[c] * (1.0 - p[c])
            scores[c] += learning_rate * (-g / (h + l2_leaf_reg))
    e = np.exp(scores - scores.max())
    return float(e[0] / e.sum())
