import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from hawkes_flt.metrics import EmpiricalSample, kolmogorov_distance, wasserstein1

PERMS8 = np.array(list(itertools.permutations(range(8))))


def _exhaustive_ot(a, b):
    cost = np.abs(a[:, None] - b[None, :])
    return cost[np.arange(8), PERMS8].sum(axis=1).min() / 8


def _lp_ot(a, b):
    n, m = len(a), len(b)
    cost = np.abs(a[:, None] - b[None, :]).ravel()
    rows = np.zeros((n + m, n * m))
    for i in range(n):
        rows[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        rows[n + j, j::m] = 1
    rhs = np.concatenate([np.full(n, 1 / n), np.full(m, 1 / m)])
    return optimize.linprog(cost, A_eq=rows, b_eq=rhs, bounds=(0, None), method="highs").fun


def test_sample_is_sorted_and_read_only():
    s = EmpiricalSample([3.0, 1.0, 2.0])
    assert list(s.values) == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        s.values[0] = 5
    with pytest.raises(ValueError):
        EmpiricalSample([])


def test_kolmogorov_examples():
    assert kolmogorov_distance([0.3, 1.2], [1.2, 0.3]) == 0.0
    assert kolmogorov_distance([0.0], [1.0]) == 1.0
    assert kolmogorov_distance([0.0, 1.0], [0.0, 2.0]) == 0.5


def test_kolmogorov_against_cdf():
    rng = np.random.default_rng(1)
    x = rng.normal(size=500)
    assert kolmogorov_distance(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic)


def test_wasserstein_examples():
    assert wasserstein1([1.0, 2.0], [2.0, 1.0]) == 0.0
    assert wasserstein1([0.0, 2.0], [1.0, 3.0]) == 1.0


def test_wasserstein_exhaustive_transport():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.normal(size=8), rng.exponential(size=8)
        assert wasserstein1(a, b) == pytest.approx(_exhaustive_ot(a, b), abs=1e-14)


def test_wasserstein_unequal_sizes_against_lp():
    rng = np.random.default_rng(3)
    for n, m in ((3, 5), (4, 7), (6, 2)):
        a, b = rng.normal(size=n), rng.normal(size=m)
        assert wasserstein1(a, b) == pytest.approx(_lp_ot(a, b), abs=1e-9)
        assert wasserstein1(a, b) == pytest.approx(stats.wasserstein_distance(a, b), abs=1e-12)


finite = st.floats(-1e3, 1e3, allow_nan=False)
samples = st.lists(finite, min_size=1, max_size=12)


@given(samples, samples, samples)
@settings(max_examples=200, deadline=None)
def test_triangle_inequalities(a, b, c):
    for d in (kolmogorov_distance, wasserstein1):
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-9 * (1 + max(map(abs, a + b + c)))


@given(samples, samples)
@settings(max_examples=200, deadline=None)
def test_distance_bounds(a, b):
    assert 0 <= kolmogorov_distance(a, b) <= 1
    assert wasserstein1(a, b) >= abs(np.mean(a) - np.mean(b)) - 1e-9 * (1 + max(map(abs, a + b)))


@given(st.lists(finite, min_size=5, max_size=5), st.lists(finite, min_size=5, max_size=5))
@settings(max_examples=100, deadline=None)
def test_wasserstein_homogeneous(a, b):
    a, b = np.array(a), np.array(b)
    assert wasserstein1(2 * a, 2 * b) == pytest.approx(2 * wasserstein1(a, b), rel=1e-12, abs=1e-12)
