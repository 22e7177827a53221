"""Linear control-variate estimator and variance diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .stats import RunningStats

GAMMA_CAP = 1e6
RHO_CAP = 0.9999995
PIVOT_TOL = 1e-10


def improvement_ratio(rho):
    """``1 / (1 - rho^2)``, capped at ``GAMMA_CAP`` for ``|rho| > RHO_CAP``."""
    rho = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(np.abs(rho) > RHO_CAP, GAMMA_CAP, 1.0 / (1.0 - np.minimum(rho * rho, 1.0)))
    out = np.minimum(out, GAMMA_CAP)
    return float(out) if out.ndim == 0 else out


def efficiency(c0: float, var0: float, c1: float, var1: float) -> float:
    """Cost-weighted variance ratio ``(c0 var0) / (c1 var1)``."""
    if min(c0, var0, c1, var1) <= 0:
        raise ValueError("costs and variances must be positive")
    return (c0 * var0) / (c1 * var1)


def _cholesky_pivots(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-order Cholesky of ``R``; returns the factor and the pivot values.

    Non-positive pivots are recorded and the corresponding column zeroed so
    the factorisation can continue.
    """
    k = R.shape[0]
    L = np.zeros_like(R)
    piv = np.zeros(k)
    for i in range(k):
        p = R[i, i] - L[i, :i] @ L[i, :i]
        piv[i] = p
        if p <= 0:
            continue
        L[i, i] = np.sqrt(p)
        L[i + 1 :, i] = (R[i + 1 :, i] - L[i + 1 :, :i] @ L[i, :i]) / L[i, i]
    return L, piv


def estimate_beta(stats: RunningStats, tol: float = PIVOT_TOL) -> tuple[np.ndarray, list[int]]:
    """Regression coefficients ``Sigma_Z^{-1} Sigma_ZV``.

    Works on the correlation scale. Variates with zero variance or a
    Cholesky pivot below ``tol`` are dropped one at a time, smallest pivot
    first. Returns the length-``d`` coefficient vector (zeros for dropped
    variates) and the dropped indices.
    """
    d = stats.d
    if stats.n < d + 3:
        raise ValueError(f"need at least d + 3 = {d + 3} samples, have {stats.n}")
    beta = np.zeros(d)
    if d == 0:
        return beta, []
    cov = stats.covariance()
    corr = stats.correlation()
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sd_z, sd_v = sd[:d], sd[d]
    active = [i for i in range(d) if corr[i, i] > 0]
    dropped = [i for i in range(d) if corr[i, i] == 0]
    if sd_v == 0 or corr[d, d] == 0:
        return beta, dropped
    while active:
        R = corr[np.ix_(active, active)]
        L, piv = _cholesky_pivots(R)
        worst = int(np.argmin(piv))
        if piv[worst] < tol:
            dropped.append(active.pop(worst))
            continue
        b_std = cho_solve((L, True), corr[active, d])
        beta[active] = b_std * sd_v / sd_z[active]
        break
    return beta, sorted(dropped)


@dataclass
class LcvEstimate:
    point: float
    beta: np.ndarray
    variance_crude: float
    variance_lcv: float
    r_squared: float
    d: int
    n: int
    mean_V: float
    dropped: list[int] = field(default_factory=list)

    @property
    def reduction_factor(self) -> float:
        """``variance_crude / variance_lcv`` (infinite for a perfect fit)."""
        if self.variance_lcv <= 0:
            return float("inf")
        return self.variance_crude / self.variance_lcv

    @property
    def finite_sample_factor(self) -> float:
        return (self.n - 2) / (self.n - 2 - self.d)

    @property
    def se_lcv(self) -> float:
        return float(np.sqrt(self.variance_lcv))

    @property
    def se_crude(self) -> float:
        return float(np.sqrt(self.variance_crude))


def lcv_estimate(stats: RunningStats) -> LcvEstimate:
    """Control-variate point estimate with the normal-theory variance.

    ``variance_lcv = (n-2)/(n-2-d) * (1 - R^2) * var(V) / n`` where ``d`` counts
    retained variates. The factor assumes joint normality of ``(Z, V)``.
    """
    beta, dropped = estimate_beta(stats)
    n = stats.n
    var_v = stats.var_V
    kept = [i for i in range(stats.d) if i not in dropped]
    d = len(kept)
    if d and var_v > 0:
        r2 = float(beta[kept] @ stats.cov_ZV[kept] / var_v)
        r2 = min(max(r2, 0.0), 1.0)
    else:
        r2 = 0.0
    point = stats.mean_V - float(beta @ stats.mean_Z) if stats.d else stats.mean_V
    crude = var_v / n
    lcv = (n - 2) / (n - 2 - d) * (1.0 - r2) * crude
    return LcvEstimate(
        point=point,
        beta=beta,
        variance_crude=crude,
        variance_lcv=lcv,
        r_squared=r2,
        d=d,
        n=n,
        mean_V=stats.mean_V,
        dropped=dropped,
    )


@dataclass
class EfficiencyReport:
    c0: float
    c1: float
    variance_crude: float
    variance_lcv: float

    @property
    def variance_ratio(self) -> float:
        return self.variance_crude / self.variance_lcv if self.variance_lcv > 0 else float("inf")

    @property
    def slowdown(self) -> float:
        return self.c1 / self.c0

    @property
    def efficiency(self) -> float:
        if self.variance_lcv <= 0:
            return float("inf")
        return efficiency(self.c0, self.variance_crude, self.c1, self.variance_lcv)


class LinearControlVariates(BaseEstimator):
    """Estimate ``E[V]`` from samples of ``V`` and zero-mean controls ``Z``.

    Examples
    --------
    >>> rng = np.random.default_rng(0)
    >>> z = rng.normal(size=(500, 1))
    >>> v = 3.0 + 2.0 * z[:, 0] + 0.1 * rng.normal(size=500)
    >>> est = LinearControlVariates().fit(z, v)
    >>> round(est.estimate_, 1)
    3.0
    """

    def fit(self, Z, V):
        Z = check_array(Z, ensure_min_features=0, ensure_min_samples=2)
        V = check_array(V, ensure_2d=False, ensure_min_samples=2)
        check_consistent_length(Z, V)
        self.stats_ = RunningStats(Z.shape[1]).push_batch(V, Z)
        self.result_ = lcv_estimate(self.stats_)
        self.coef_ = self.result_.beta
        self.estimate_ = self.result_.point
        self.variance_ = self.result_.variance_lcv
        self.r_squared_ = self.result_.r_squared
        self.n_features_in_ = Z.shape[1]
        return self

    def corrected_samples(self, Z, V) -> np.ndarray:
        """Per-sample ``V - beta^T Z``; their mean is the estimate."""
        check_is_fitted(self, "coef_")
        Z = check_array(Z, ensure_min_features=0)
        V = np.asarray(V, dtype=np.float64).reshape(-1)
        return V - Z @ self.coef_
