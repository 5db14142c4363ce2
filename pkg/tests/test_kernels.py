import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from hawkes_flt.errors import DomainError, IndeterminateError
from hawkes_flt.kernels import (
    ConstantScale,
    Exponential,
    ExponentialMixture,
    MittagLeffler,
    MixedMittagLeffler,
    ParetoScale,
    RVProfile,
    ScaledStable,
    Tabulated,
    TwoPointScale,
    kernel_from_dict,
)

E_HALF_MINUS_2 = 0.255395676310505744  # exp(4) erfc(2)


def _table(t_end=40.0, n=4001, rate=1.0, m=0.5):
    t = np.linspace(0, t_end, n)
    v = m * rate * np.exp(-rate * t)
    return Tabulated(t, v, float(integrate.trapezoid(v, t)))


ALL_KERNELS = [
    Exponential(0.5, 1.0),
    ExponentialMixture((0.5, 0.5), (1.0, 0.1)),
    MittagLeffler(0.5, 1.0),
    MittagLeffler(0.3, 2.0),
    MixedMittagLeffler(0.4, 0.7, 1.0, 2.0),
    ScaledStable(0.5),
    ScaledStable(0.6, TwoPointScale(0.5, 2.0, 0.3)),
    ScaledStable(0.5, ParetoScale(1.5, 1.0)),
    _table(),
]
IDS = ["exp", "mix", "ml05", "ml03", "mixed", "stable", "stable2pt", "stablepareto", "table"]


def test_phi_values():
    assert Exponential(0.5, 1.0).phi(0.0) == 0.5
    ml = MittagLeffler(0.5, 1.0)
    t = 1e-8
    assert ml.phi(t) * math.sqrt(t) * math.gamma(0.5) == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
def test_phi_vanishes_on_negative_axis(k):
    assert k.phi(-1.0) == 0.0


def test_tabulated_out_of_range():
    k = _table()
    with pytest.raises(DomainError):
        k.phi(41.0)
    assert k.support_phi(41.0) == 0.0


def test_big_phi_examples():
    assert Exponential(0.5, 1.0).big_phi(0.0) == 0.5
    ml = MittagLeffler(0.5, 1.0)
    assert ml.big_phi(0.0) == pytest.approx(1.0)
    assert ml.big_phi(4.0) == pytest.approx(E_HALF_MINUS_2, rel=1e-10)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
def test_big_phi_starts_at_m_and_decreases(k):
    t = np.geomspace(1e-3, 30, 60)
    bp = k.big_phi(t)
    assert k.big_phi(0.0) == pytest.approx(k.branching_ratio, rel=1e-6)
    assert np.all(np.diff(bp) <= 1e-14)
    assert np.all(bp >= -1e-14)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
def test_derivative_of_tail_is_phi(k):
    t = np.geomspace(0.05, 20, 25)
    if isinstance(k, Tabulated):
        t = t + 0.5 * (k.t[1] - k.t[0])  # stay off the interpolation kinks
    d = 1e-5 * t
    num = -(k.big_phi(t + d) - k.big_phi(t - d)) / (2 * d)
    assert np.allclose(num, k.phi(t), rtol=1e-4, atol=1e-12)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
def test_psi_moments_monotone(k):
    t = np.geomspace(0.01, 10, 12)
    p = k.psi_k(t, 1)
    assert np.all(np.diff(p) > 0)
    assert k.psi_k(np.inf, 0) == pytest.approx(k.branching_ratio, rel=1e-6)


def test_psi_examples():
    assert Exponential(1.0, 2.0).psi_k(np.inf, 1) == pytest.approx(0.5)
    assert MittagLeffler(0.5, 1.0).dispersion_sigma() == math.inf


def test_dispersion_examples():
    assert Exponential(1.0, 1.0).dispersion_sigma() == pytest.approx(1.0)
    assert Exponential(0.5, 2.0).dispersion_sigma() == pytest.approx(0.25)
    assert ExponentialMixture((0.5, 0.5), (1.0, 0.1)).dispersion_sigma() == pytest.approx(5.5)
    for k in (MixedMittagLeffler(0.4, 0.7, 1.0, 2.0), ScaledStable(0.5)):
        assert k.dispersion_sigma() == math.inf


def test_tabulated_dispersion_decisions():
    # a decade-based rule needs the grid to reach well past the decay scale
    light = _table(t_end=100.0, n=10001)
    assert light.dispersion_sigma() == pytest.approx(1.0 * light.m, rel=1e-3)
    t = np.linspace(0, 1000, 100_001)
    heavy_v = 0.5 * (1 + t) ** -1.5
    heavy = Tabulated(t, heavy_v, float(integrate.trapezoid(heavy_v, t)))
    assert heavy.dispersion_sigma() == math.inf
    short = Tabulated(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.0]), 1.0)
    with pytest.raises(IndeterminateError):
        short.dispersion_sigma()


def test_tabulated_declared_mass_checked():
    t = np.linspace(0, 10, 101)
    with pytest.raises(ValueError):
        Tabulated(t, np.exp(-t), 0.5)


def test_laplace_examples():
    assert MittagLeffler(0.5, 1.0).laplace_big_phi(1.0) == pytest.approx(0.5)
    assert Exponential(0.5, 1.0).laplace_big_phi(1e12) == pytest.approx(0.5)
    for k in ALL_KERNELS:
        assert abs(k.laplace_big_phi(1e-10)) < 1e-3


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_laplace_matches_quadrature(k, lam):
    f = lambda t: -math.expm1(-lam * t) * float(k.support_phi(t))  # noqa: E731
    pts = [0, 1e-6, 1e-3, 0.1, 1, 10, 100]
    direct = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
    direct += integrate.quad(f, 100, np.inf, limit=200)[0] if not isinstance(k, Tabulated) else 0.0
    # heavy tails leave a slowly decaying remainder beyond the quadrature: compare loosely there
    tol = 1e-6 if isinstance(k, (Exponential, ExponentialMixture, Tabulated)) else 1e-5
    if isinstance(k, Tabulated):
        tol = 1e-4  # trapezoid on the refined table
    assert float(k.laplace_big_phi(lam)) == pytest.approx(direct, abs=tol)


@pytest.mark.parametrize("a,b,lam", [(a, b, lam) for a in (0.3, 0.5, 0.8)
                                      for b in (0.5, 1.0, 2.0) for lam in (0.5, 1.0, 2.0)])
def test_ml_distribution_identity(a, b, lam):
    k = MittagLeffler(a, b)
    f = lambda t: lam * math.exp(-lam * t) * float(k.cum_phi(t))  # noqa: E731
    val = sum(integrate.quad(f, lo, hi, limit=200)[0]
              for lo, hi in ((0, 1e-4), (1e-4, 1), (1, 20), (20, np.inf)))
    assert val == pytest.approx(b / (b + lam**a), abs=1e-6)


def test_delay_samplers_examples(rng):
    d = Exponential(0.5, 1.0).sample_delay(rng, 100_000)
    assert abs(d.mean() - 1.0) < 3 * d.std() / math.sqrt(d.size)
    d = MittagLeffler(0.5, 1.0).sample_delay(rng, 100_000)
    p = (d > 4).mean()
    assert abs(p - E_HALF_MINUS_2) < 3 * math.sqrt(p * (1 - p) / d.size)
    d = ScaledStable(0.5).sample_delay(rng, 100_000)
    x = np.exp(-d)
    assert abs(x.mean() - math.exp(-1)) < 3 * x.std() / math.sqrt(x.size)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=IDS)
def test_delay_cdf_within_dkw_band(k, rng):
    n = 100_000
    d = np.sort(k.sample_delay(rng, n))
    q = d[np.linspace(0.025 * n, 0.975 * n, 20).astype(int)]
    emp = np.searchsorted(d, q, side="right") / n
    theo = 1 - k.big_phi(q) / k.branching_ratio
    eps = math.sqrt(math.log(2 / 0.01) / (2 * n))
    assert np.max(np.abs(emp - theo)) < eps


def test_rv_profile_checks_auxiliary():
    RVProfile(1.5, -0.5, lambda t: t**-0.5)
    with pytest.raises(ValueError):
        RVProfile(1.5, -0.5, lambda t: 1.0 + 0 * t)
    with pytest.raises(ValueError):
        RVProfile(1.5, 0.5)


@given(m=st.floats(0.05, 1.0), beta=st.floats(0.1, 10.0), scale=st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_exponential_time_rescaling(m, beta, scale):
    k1, k2 = Exponential(m, beta), Exponential(m, beta * scale)
    t = np.array([0.1, 1.0, 5.0])
    assert np.allclose(k2.big_phi(t / scale), k1.big_phi(t))
    assert k2.dispersion_sigma() == pytest.approx(k1.dispersion_sigma() / scale)


def test_dict_round_trip(tmp_path):
    for k in ALL_KERNELS[:8]:
        k2 = kernel_from_dict(k.to_dict())
        assert np.allclose(k2.big_phi([0.5, 2.0]), k.big_phi([0.5, 2.0]))
    path = tmp_path / "phi.csv"
    path.write_text("t,phi\n0,1\n1,0.5\n2,0\n")
    k = kernel_from_dict({"family": "tabulated", "path": "phi.csv", "m": 1.0}, tmp_path)
    assert k.cum_phi(2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        kernel_from_dict({"family": "nope"})
    with pytest.raises(ValueError):
        kernel_from_dict({"family": "exponential", "m": 1.0})
