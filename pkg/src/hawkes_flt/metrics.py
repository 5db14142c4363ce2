"""Distances between one-dimensional empirical distributions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["EmpiricalSample", "kolmogorov_distance", "wasserstein1"]


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Sorted sample with uniform weights ``1/count``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("an empirical sample needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.values, x, side="right") / self.values.size

    def mean(self) -> float:
        return float(self.values.mean())

    def variance(self) -> float:
        return float(self.values.var(ddof=1)) if self.values.size > 1 else 0.0


def _as_sample(a) -> EmpiricalSample:
    return a if isinstance(a, EmpiricalSample) else EmpiricalSample(a)


def kolmogorov_distance(a, b: "EmpiricalSample | Callable | np.ndarray") -> float:
    """``sup_x |F_a(x) - F_b(x)|``.

    ``b`` may be a second sample or a continuous distribution function; in the
    latter case both one-sided limits at every atom of ``a`` are compared.
    """
    a = _as_sample(a)
    if callable(b) and not isinstance(b, EmpiricalSample):
        x = a.values
        fb = np.asarray(b(x), dtype=float)
        n = x.size
        upper = np.arange(1, n + 1) / n
        lower = np.arange(n) / n
        return float(max(np.max(np.abs(upper - fb)), np.max(np.abs(fb - lower))))
    b = _as_sample(b)
    support = np.union1d(a.values, b.values)
    return float(np.max(np.abs(a.cdf(support) - b.cdf(support))))


def wasserstein1(a, b) -> float:
    """First Wasserstein distance ``int_0^1 |Q_a(u) - Q_b(u)| du``.

    Equal sizes reduce to the mean absolute difference of order statistics;
    unequal sizes integrate the two step quantile functions exactly over the
    merged grid of their jump levels.
    """
    a, b = _as_sample(a), _as_sample(b)
    x, y = a.values, b.values
    if x.size == y.size:
        return float(np.mean(np.abs(x - y)))
    levels = np.union1d(np.arange(1, x.size) / x.size, np.arange(1, y.size) / y.size)
    edges = np.concatenate(([0.0], levels, [1.0]))
    mid = 0.5 * (edges[:-1] + edges[1:])
    qa = x[np.minimum((mid * x.size).astype(int), x.size - 1)]
    qb = y[np.minimum((mid * y.size).astype(int), y.size - 1)]
    return float(np.sum(np.diff(edges) * np.abs(qa - qb)))
