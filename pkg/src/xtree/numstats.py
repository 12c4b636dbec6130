"""Statistical kernels behind the feature screens.

Pearson correlation with Student-t p-values, the chi-square test of
independence with its survival function, Bonferroni adjustment, and the
regularized incomplete gamma/beta functions they rest on.  Everything is
self-contained: the special functions use the classic series /
continued-fraction evaluations (series for the gamma function when
``x < s + 1``, Lentz continued fractions otherwise) with a relative
tolerance of 1e-12 and an iteration cap of 500.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TOL = 1e-12
_MAX_ITER = 500
_FPMIN = 1e-300


class NonConvergenceError(ArithmeticError):
    """A special-function iteration failed to converge within the cap."""


@dataclass(frozen=True)
class CorrelationResult:
    """Pearson correlation of one feature against the target."""

    r: float
    p_value: float
    n: int


@dataclass(frozen=True)
class Chi2Result:
    """Chi-square test of independence on a contingency table."""

    statistic: float
    dof: int
    p_value: float


# ---------------------------------------------------------------------------
# regularized incomplete gamma


def _gamma_p_series(s: float, x: float) -> float:
    # lower regularized gamma P(s, x) by power series, valid for x < s + 1
    ap = s
    total = 1.0 / s
    term = total
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _TOL:
            return total * math.exp(-x + s * math.log(x) - math.lgamma(s))
    raise NonConvergenceError(f"gamma series did not converge for s={s}, x={x}")


def _gamma_q_contfrac(s: float, x: float) -> float:
    # upper regularized gamma Q(s, x) by Lentz continued fraction, x >= s + 1
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _TOL:
            return h * math.exp(-x + s * math.log(x) - math.lgamma(s))
    raise NonConvergenceError(
        f"gamma continued fraction did not converge for s={s}, x={x}"
    )


def regularized_gamma_p(s: float, x: float) -> float:
    """Lower regularized incomplete gamma P(s, x) for s > 0, x >= 0."""
    if s <= 0.0:
        raise ValueError(f"shape parameter must be positive, got {s}")
    if x < 0.0:
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0.0:
        return 0.0
    if x < s + 1.0:
        return _gamma_p_series(s, x)
    return 1.0 - _gamma_q_contfrac(s, x)


def regularized_gamma_q(s: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(s, x) = 1 - P(s, x)."""
    if s <= 0.0:
        raise ValueError(f"shape parameter must be positive, got {s}")
    if x < 0.0:
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0.0:
        return 1.0
    if x < s + 1.0:
        return 1.0 - _gamma_p_series(s, x)
    return _gamma_q_contfrac(s, x)


# ---------------------------------------------------------------------------
# regularized incomplete beta


def _beta_contfrac(a: float, b: float, x: float) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _TOL:
            return h
    raise NonConvergenceError(
        f"beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"argument must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    # symmetry transformation keeps the continued fraction in its fast region
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_contfrac(a, b, x) / a
    return 1.0 - front * _beta_contfrac(b, a, 1.0 - x) / b


# ---------------------------------------------------------------------------
# pipeline-facing operations


def chi2_sf(x: float, dof: int) -> float:
    """Survival function of the chi-square distribution, Q(dof/2, x/2)."""
    if dof < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {dof}")
    if x < 0.0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    if x == 0.0:
        return 1.0
    return regularized_gamma_q(dof / 2.0, x / 2.0)


def pearson_r(x, y) -> float:
    """Sample Pearson correlation, clamped to [-1, 1] against rounding."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D vectors of equal length")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined for a constant input vector")
    denom = math.sqrt(sxx * syy)
    if not math.isfinite(denom):  # overflow guard for extreme magnitudes
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = float(dx @ dy) / denom
    return min(1.0, max(-1.0, r))


def pearson_p(r: float, n: int) -> float:
    """Two-sided p-value for a Pearson r via the Student-t distribution.

    Uses t = r * sqrt((n - 2) / (1 - r^2)) against n - 2 degrees of
    freedom, evaluated through the regularized incomplete beta function.
    """
    if abs(r) > 1.0:
        raise ValueError(f"|r| must be <= 1, got {r}")
    if n < 3:
        raise ValueError(f"p-value needs n >= 3 observations, got {n}")
    if abs(r) == 1.0:
        return 0.0
    dof = n - 2
    t2 = r * r * dof / (1.0 - r * r)
    return regularized_beta(dof / 2.0, 0.5, dof / (dof + t2))


def pearson_test(x, y) -> CorrelationResult:
    """Pearson r plus its two-sided p-value for one feature/target pair."""
    x = np.asarray(x, dtype=np.float64)
    r = pearson_r(x, y)
    return CorrelationResult(r=r, p_value=pearson_p(r, x.size), n=int(x.size))


def chi2_statistic(table) -> Chi2Result:
    """Chi-square test of independence on an R x C table of counts."""
    obs = np.asarray(table, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise ValueError("contingency table must have at least 2 rows and 2 columns")
    if np.any(obs < 0):
        raise ValueError("contingency table counts must be non-negative")
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    if np.any(row == 0.0) or np.any(col == 0.0):
        raise ValueError("contingency table has a zero marginal (expected count zero)")
    total = obs.sum()
    expected = np.outer(row, col) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return Chi2Result(statistic=stat, dof=dof, p_value=chi2_sf(stat, dof))


def bonferroni(p_values) -> np.ndarray:
    """Bonferroni adjustment: p_adj[i] = min(1, m * p[i]) with m = len(p)."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("p-values must form a 1-D vector")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    return np.minimum(1.0, p * p.size)
