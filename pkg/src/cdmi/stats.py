"""Chi-square distribution, half-Mahalanobis statistics and the Gaussian prior."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DOF_STATE = 6
_EPS = 1e-16
_TINY = 1e-300


def _gammainc_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gammaincc_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError(f"P(a, x) needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gammainc_series(a, x))
    return max(0.0, 1.0 - _gammaincc_cf(a, x))


def chi2_cdf(x: float, k: int) -> float:
    if x < 0:
        raise ValueError(f"chi-square CDF is defined for x >= 0, got {x}")
    if k < 1:
        raise ValueError(f"degrees of freedom must be positive, got {k}")
    return regularized_gamma_p(0.5 * k, 0.5 * x)


def chi2_pdf(x: float, k: int) -> float:
    if x <= 0:
        return 0.5 if (k == 2 and x == 0) else 0.0
    a = 0.5 * k
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a))


def chi2_quantile(alpha: float, k: int) -> float:
    """Inverse of :func:`chi2_cdf`; ``alpha == 1`` gives ``math.inf``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return 0.0
    if alpha == 1.0:
        return math.inf
    lo, hi = 0.0, max(1.0, float(k))
    while chi2_cdf(hi, k) < alpha:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, k) - alpha
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        pdf = chi2_pdf(x, k)
        step = f / pdf if pdf > 0 else math.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(1.0, x):
            return x_new
        x = x_new
    return x


def half_mahalanobis(d, cov) -> float:
    """``0.5 * d' cov^-1 d`` through a Cholesky solve."""
    d = np.asarray(d, dtype=float)
    chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
    w = np.linalg.solve(chol, d)
    return 0.5 * float(w @ w)


@dataclass(frozen=True)
class ConfidenceBudget:
    """State confidence level and its chi-square quantile (6 degrees of freedom)."""
    alpha_x: float
    m_x: float
    dof_state: int = DOF_STATE

    @classmethod
    def from_alpha(cls, alpha_x: float) -> "ConfidenceBudget":
        return cls(alpha_x, chi2_quantile(alpha_x, DOF_STATE))

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.m_x)


class GaussianState:
    """Mean state and covariance with the factor ``U`` such that ``inv(cov) = U.T @ U``."""

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float)
        cov = np.array(cov, dtype=float)
        if cov.shape != (6, 6) or mean.shape != (6,):
            raise ValueError("expected a 6-vector mean and a 6x6 covariance")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * np.abs(cov).max()):
            raise ValueError("covariance is not symmetric")
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        self.chol = np.linalg.cholesky(self.cov)  # raises LinAlgError when not positive definite
        self.chol_inv = np.linalg.inv(self.chol)
        for a in (self.mean, self.cov, self.chol, self.chol_inv):
            a.flags.writeable = False

    @classmethod
    def diagonal(cls, mean, sigmas) -> "GaussianState":
        return cls(mean, np.diag(np.asarray(sigmas, dtype=float) ** 2))

    def scaled(self, factor: float) -> "GaussianState":
        return GaussianState(self.mean, self.cov * factor)

    def half_mahalanobis(self, dx) -> float:
        w = self.chol_inv @ np.asarray(dx, dtype=float)
        return 0.5 * float(w @ w)


def sample_gaussian(g: GaussianState, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Zero-mean deviations with covariance ``g.cov``."""
    shape = (6,) if size is None else (size, 6)
    return standard_to_deviation(g, rng.standard_normal(shape))


def standard_to_deviation(g: GaussianState, normals) -> np.ndarray:
    return np.asarray(normals, dtype=float) @ g.chol.T
