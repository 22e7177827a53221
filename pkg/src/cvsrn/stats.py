"""Online joint mean/covariance of a control-variate vector and a target."""

from __future__ import annotations

import numpy as np


class RunningStats:
    """Streaming moments of the joint vector ``(Z_1, ..., Z_d, V)``.

    Uses Welford updates for single samples and the pairwise (Chan et al.)
    combine for batches and for merging partial results. Covariances are
    unbiased (divisor ``n - 1``).
    """

    def __init__(self, d: int):
        self.d = int(d)
        self.n = 0
        self._mean = np.zeros(self.d + 1)
        self._comoment = np.zeros((self.d + 1, self.d + 1))

    def _joint(self, v, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape[0] != self.d:
            raise ValueError(f"expected {self.d} control variates, got {z.shape[0]}")
        return np.append(z, float(v))

    def push(self, v: float, z) -> "RunningStats":
        x = self._joint(v, z)
        self.n += 1
        delta = x - self._mean
        self._mean += delta / self.n
        self._comoment += np.outer(delta, x - self._mean)
        return self

    def push_batch(self, V, Z) -> "RunningStats":
        V = np.asarray(V, dtype=np.float64).reshape(-1)
        Z = np.asarray(Z, dtype=np.float64).reshape(len(V), -1) if self.d else np.zeros((len(V), 0))
        if Z.shape[1] != self.d:
            raise ValueError(f"expected {self.d} control variates, got {Z.shape[1]}")
        if len(V) == 0:
            return self
        X = np.column_stack([Z, V])
        other = RunningStats(self.d)
        other.n = X.shape[0]
        other._mean = X.mean(axis=0)
        centered = X - other._mean
        other._comoment = centered.T @ centered
        return self.merge(other)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.d != self.d:
            raise ValueError("cannot merge statistics of different dimension")
        if other.n == 0:
            return self
        if self.n == 0:
            self.n = other.n
            self._mean = other._mean.copy()
            self._comoment = other._comoment.copy()
            return self
        n = self.n + other.n
        delta = other._mean - self._mean
        self._comoment = self._comoment + other._comoment + np.outer(delta, delta) * (self.n * other.n / n)
        self._mean = self._mean + delta * (other.n / n)
        self.n = n
        return self

    def copy(self) -> "RunningStats":
        out = RunningStats(self.d)
        out.n = self.n
        out._mean = self._mean.copy()
        out._comoment = self._comoment.copy()
        return out

    def subset(self, columns) -> "RunningStats":
        """Statistics restricted to the given control-variate columns."""
        cols = list(columns)
        idx = cols + [self.d]
        out = RunningStats(len(cols))
        out.n = self.n
        out._mean = self._mean[idx].copy()
        out._comoment = self._comoment[np.ix_(idx, idx)].copy()
        return out

    @property
    def mean_V(self) -> float:
        return float(self._mean[-1])

    @property
    def mean_Z(self) -> np.ndarray:
        return self._mean[:-1].copy()

    def covariance(self) -> np.ndarray:
        """Full ``(d+1) x (d+1)`` covariance, target last."""
        if self.n < 2:
            raise ValueError("covariance needs at least two samples")
        cov = self._comoment / (self.n - 1)
        return (cov + cov.T) / 2

    @property
    def cov_Z(self) -> np.ndarray:
        return self.covariance()[:-1, :-1]

    @property
    def cov_ZV(self) -> np.ndarray:
        return self.covariance()[:-1, -1]

    @property
    def var_V(self) -> float:
        return float(self.covariance()[-1, -1])

    def correlation(self) -> np.ndarray:
        """Correlation matrix of ``(Z, V)``; zero-variance entries get 0."""
        cov = self.covariance()
        sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        # spread at rounding level around a large mean counts as constant
        sd[sd <= 1e-12 * np.abs(self._mean)] = 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = cov / np.outer(sd, sd)
        corr[~np.isfinite(corr)] = 0.0
        corr = np.clip(corr, -1.0, 1.0)
        np.fill_diagonal(corr, np.where(sd > 0, 1.0, 0.0))
        return corr
