"""Streaming moment accumulation and log-log rate regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


class Welford:
    """Online mean/variance accumulator with batch updates.

    Batches are folded in with the pairwise combination rule, so results are
    reproducible for a fixed sequence of update calls.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def update(self, values) -> None:
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return
        n_b = values.size
        mean_b = float(np.mean(values))
        m2_b = float(np.sum((values - mean_b) ** 2))
        if self.count == 0:
            self.count, self.mean, self._m2 = n_b, mean_b, m2_b
            return
        n_a, mean_a, m2_a = self.count, self.mean, self._m2
        n = n_a + n_b
        delta = mean_b - mean_a
        self.mean = mean_a + delta * (n_b / n)
        self._m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
        self.count = n

    def merge(self, other: "Welford") -> None:
        if other.count == 0:
            return
        combined = Welford()
        combined.count, combined.mean, combined._m2 = self.count, self.mean, self._m2
        combined.update_from_moments(other.count, other.mean, other._m2)
        self.count, self.mean, self._m2 = combined.count, combined.mean, combined._m2

    def update_from_moments(self, n_b: int, mean_b: float, m2_b: float) -> None:
        if n_b == 0:
            return
        if self.count == 0:
            self.count, self.mean, self._m2 = n_b, mean_b, m2_b
            return
        n_a, mean_a, m2_a = self.count, self.mean, self._m2
        n = n_a + n_b
        delta = mean_b - mean_a
        self.mean = mean_a + delta * (n_b / n)
        self._m2 = m2_a + m2_b + delta * delta * (n_a * n_b / n)
        self.count = n

    @property
    def variance(self) -> float:
        """Unbiased sample variance (ddof=1); 0.0 when count < 2."""
        if self.count < 2:
            return 0.0
        return self._m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        """Standard error of the mean."""
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self.variance / self.count))


@dataclass(frozen=True)
class LineFit:
    """OLS line fit y = slope*x + intercept with residual-based slope error."""

    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    n_points: int


def ols_line(x, y) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise InvalidArgumentError("need >= 2 paired points for a line fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise InvalidArgumentError("degenerate abscissa: all x equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    rss = float(np.sum(resid**2))
    tss = float(np.sum((y - ym) ** 2))
    r_squared = 1.0 if tss == 0.0 else max(0.0, min(1.0, 1.0 - rss / tss))
    if x.size > 2:
        sigma2 = rss / (x.size - 2)
        slope_stderr = float(np.sqrt(sigma2 / sxx))
    else:
        slope_stderr = 0.0
    return LineFit(slope, intercept, r_squared, slope_stderr, int(x.size))


def loglog_fit(x, y) -> LineFit:
    """OLS on (log x, log y); inputs must be strictly positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("log-log fit requires positive values")
    return ols_line(np.log(x), np.log(y))
