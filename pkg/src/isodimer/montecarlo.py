"""Batch-means error bars for Monte Carlo estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_BATCHES = 20


@dataclass
class Estimate:
    mean: float
    std_error: float
    n: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.std_error


def _batches(n: int, n_batches: int):
    if n < n_batches:
        raise ValueError(f"need at least {n_batches} samples, got {n}")
    return np.array_split(np.arange(n), n_batches)


def batch_means(x, n_batches: int = N_BATCHES) -> Estimate:
    x = np.asarray(x, dtype=float)
    parts = [x[idx].mean() for idx in _batches(len(x), n_batches)]
    return Estimate(float(x.mean()), float(np.std(parts, ddof=1) / np.sqrt(n_batches)), len(x))


def batch_variance(x, n_batches: int = N_BATCHES) -> Estimate:
    x = np.asarray(x, dtype=float)
    parts = [x[idx].var(ddof=1) for idx in _batches(len(x), n_batches)]
    return Estimate(float(x.var(ddof=1)), float(np.std(parts, ddof=1) / np.sqrt(n_batches)), len(x))


def batch_correlation(x, y, n_batches: int = N_BATCHES) -> Estimate:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    parts = [np.corrcoef(x[idx], y[idx])[0, 1] for idx in _batches(len(x), n_batches)]
    return Estimate(float(np.corrcoef(x, y)[0, 1]), float(np.std(parts, ddof=1) / np.sqrt(n_batches)), len(x))
