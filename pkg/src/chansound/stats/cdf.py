"""Empirical step CDF with inverted-CDF quantiles."""

from __future__ import annotations

import numpy as np


class EmpiricalCDF:
    """Right-continuous step CDF of a sample.

    ``quantile(p)`` returns the smallest sample value ``x`` with ``F(x) >= p``,
    so ``F(quantile(p)) >= p`` and the two are inverse on the sample grid.
    """

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite sample")
        self.values = x

    def __len__(self):
        return len(self.values)

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / len(self.values)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probability outside [0, 1]")
        n = len(self.values)
        k = np.clip(np.ceil(p * n - 1e-12).astype(int) - 1, 0, n - 1)
        out = self.values[k]
        return float(out) if out.ndim == 0 else out

    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values and the CDF just after each."""
        u, counts = np.unique(self.values, return_counts=True)
        return u, np.cumsum(counts) / len(self.values)

    def rows(self, label: str = "") -> list[tuple]:
        x, f = self.table()
        return [(label, float(a), float(b)) for a, b in zip(x, f)]

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def __repr__(self):
        return f"EmpiricalCDF(n={len(self)}, median={self.quantile(0.5):g})"


def empirical_cdf(samples) -> EmpiricalCDF:
    return EmpiricalCDF(samples)

