"""Mittag-Leffler function and one-sided stable law."""
import math

import numpy as np
import pytest
from scipy import special as sc

from hawkes_flt.special import (
    invert_laplace,
    ml_function,
    sample_one_sided_stable,
    stable_cdf,
    stable_pdf,
    stable_sf,
)

# high-precision values from an independent multiprecision evaluation, frozen
ML_ORACLE = [
    (0.3, 1.0, -50.0, 0.0152282015018146942),
    (0.7, 0.7, -3.0, 0.0359017297308412320),
    (0.8, 1.8, -20.0, 0.0494191374774283611),
    (0.5, 1.5, -100.0, 0.00994358386217010567),
    (0.9, 2.0, 5.0, 73.1999358058146128),
]


def test_ml_at_zero_is_reciprocal_gamma():
    for a in (0.2, 0.5, 1.0):
        assert ml_function(a, 1.0, 0.0) == 1.0
    assert ml_function(0.5, 2.5, 0.0) == pytest.approx(1 / math.gamma(2.5), rel=1e-15)


def test_ml_reduces_to_exp():
    assert ml_function(1.0, 1.0, 1.0) == pytest.approx(2.718281828459045, rel=1e-14)
    assert ml_function(1.0, 1.0, -30.0) == pytest.approx(math.exp(-30), rel=1e-10)


@pytest.mark.parametrize("z", [-0.1, -1.0, -2.0, -5.0, -9.9, -10.1, -30.0, -300.0])
def test_ml_half_matches_erfcx(z):
    # E_{1/2}(z) = exp(z^2) erfc(-z)
    assert ml_function(0.5, 1.0, z) == pytest.approx(sc.erfcx(-z), rel=1e-10)


def test_ml_half_at_minus_one():
    assert ml_function(0.5, 1.0, -1.0) == pytest.approx(0.427583576155807, rel=1e-12)


@pytest.mark.parametrize("a,k,x,ref", ML_ORACLE)
def test_ml_against_multiprecision(a, k, x, ref):
    assert ml_function(a, k, x) == pytest.approx(ref, rel=1e-10)


def test_ml_vectorised_and_continuous_across_regimes():
    x = -np.geomspace(0.5, 500, 2000)
    v = ml_function(0.6, 1.0, x)
    assert v.shape == x.shape
    # neighbouring points never jump more than the smooth local variation allows
    rel = np.abs(np.diff(np.log(v))) / np.abs(np.diff(np.log(-x)))
    assert rel.max() < 1.5


def test_ml_monotone_in_negative_argument():
    x = -np.geomspace(1e-3, 1e3, 300)
    v = ml_function(0.4, 1.0, x)
    assert np.all(np.diff(v) < 0)
    assert np.all(v > 0)


def test_invert_laplace_exponential():
    t = np.array([0.5, 1.0, 3.0])
    assert np.allclose(invert_laplace(lambda s: 1 / (s + 2.0), t), np.exp(-2 * t), rtol=1e-10)


def test_stable_laplace_transform(rng):
    z = sample_one_sided_stable(0.5, rng, 100_000)
    assert np.all(z > 0)
    for lam, ref in ((1.0, math.exp(-1)), (4.0, math.exp(-2))):
        x = np.exp(-lam * z)
        assert abs(x.mean() - ref) < 3 * x.std() / math.sqrt(x.size)


def test_stable_cdf_matches_levy():
    # alpha = 1/2 with Laplace exp(-sqrt(lam)) is Levy with scale 1/2
    x = np.geomspace(1e-3, 1e3, 50)
    assert np.allclose(stable_cdf(x, 0.5), sc.erfc(1 / (2 * np.sqrt(x))), rtol=1e-11, atol=1e-14)
    assert np.allclose(stable_sf(x, 0.5) + stable_cdf(x, 0.5), 1.0, atol=1e-13)
    pdf = stable_pdf(x, 0.5)
    ref = np.exp(-1 / (4 * x)) / (2 * math.sqrt(math.pi) * x**1.5)
    assert np.allclose(pdf, ref, rtol=1e-10)
