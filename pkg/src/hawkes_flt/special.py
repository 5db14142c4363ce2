"""Special functions and elementary samplers used by the kernel families.

Contents
--------
* ``ml_function`` -- two-parameter Mittag-Leffler function ``E_{a,k}(x)`` on the
  real line (vectorised).
* ``invert_laplace`` -- numerical inverse Laplace transform on a parabolic
  Talbot-type contour; used for the middle range of ``ml_function`` and for
  kernels whose time-domain form is only known through its transform.
* one-sided stable law with Laplace transform ``exp(-lam**a)``: sampler
  (Kanter's representation), distribution function and density.
"""
from __future__ import annotations

import numpy as np
from scipy.special import rgamma

__all__ = [
    "MLConvergenceError",
    "ml_function",
    "invert_laplace",
    "sample_one_sided_stable",
    "stable_cdf",
    "stable_sf",
    "stable_pdf",
    "kanter_a",
]


class MLConvergenceError(ArithmeticError):
    """Raised when a Mittag-Leffler evaluation fails to reach its tolerance."""


# Taylor series is used while E_a(|x|) ~ exp(|x|**(1/a)) stays below ~e**4, so
# that cancellation costs at most ~2 digits.
_TAYLOR_EXP_LIMIT = 4.0
_TAYLOR_MAX_TERMS = 2000
_ASYMPTOTIC_MAX_TERMS = 80
_ASYMPTOTIC_RTOL = 1e-14

# Parabolic contour s(theta) = N/t * (a0 + a2*theta**2 + i*b1*theta), see
# Trefethen, Weideman & Schmelzer, BIT 46 (2006).  Error ~ 2.85**-N.
_CONTOUR_N = 32
_P_A0, _P_A2, _P_B1 = 0.1309, -0.1194, 0.2500


def _contour_nodes(n: int = _CONTOUR_N):
    # only the upper half of the symmetric contour is needed for real signals
    theta = -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)
    theta = theta[theta > 0]
    s = n * (_P_A0 + _P_A2 * theta**2 + 1j * _P_B1 * theta)
    ds = n * (2 * _P_A2 * theta + 1j * _P_B1)
    return s, ds, 2 * np.pi / n


def invert_laplace(transform, t, n: int = _CONTOUR_N) -> np.ndarray:
    """Inverse Laplace transform of a real function at times ``t > 0``.

    ``transform`` maps a complex array ``s`` (any shape) to ``F(s)``; it must
    be analytic off the negative real axis and satisfy ``F(conj s) =
    conj F(s)``.  The result is ``f(t) = (1/2 pi i) int e^{st} F(s) ds`` on a
    parabolic contour wrapped around the branch cut.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("inverse Laplace transform needs t > 0")
    s0, ds0, dtheta = _contour_nodes(n)
    tt = t[..., None]
    s = s0 / tt
    vals = np.exp(s * tt) * transform(s) * (ds0 / tt)
    # 2 Re of the upper-half sum, times dtheta / (2 pi i)
    return (dtheta / np.pi) * np.imag(vals.sum(axis=-1))


def _ml_taylor(alpha: float, kappa: float, x: np.ndarray) -> np.ndarray:
    total = np.zeros_like(x)
    comp = np.zeros_like(x)  # Kahan compensation
    power = np.ones_like(x)
    for k in range(_TAYLOR_MAX_TERMS):
        term = power * rgamma(alpha * k + kappa)
        y = term - comp
        tmp = total + y
        comp = (tmp - total) - y
        total = tmp
        if k > 2 and np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            return total
        power = power * x
    raise MLConvergenceError(
        f"Taylor series for E_{{{alpha},{kappa}}} did not converge in "
        f"{_TAYLOR_MAX_TERMS} terms (max |x| = {np.max(np.abs(x)):.3g})"
    )


def _ml_asymptotic(alpha: float, kappa: float, x: np.ndarray):
    """Asymptotic series for x -> -inf, truncated at its smallest term.

    Returns the partial sums and a mask telling where the smallest omitted
    term is below the relative tolerance.
    """
    total = np.zeros_like(x)
    best = np.zeros_like(x)
    best_term = np.full_like(x, np.inf)
    done = np.zeros(x.shape, dtype=bool)
    inv = 1.0 / x
    power = np.ones_like(x)
    for k in range(1, _ASYMPTOTIC_MAX_TERMS + 1):
        power = power * inv
        arg = kappa - alpha * k
        if arg <= 0 and abs(arg - round(arg)) < 1e-9:
            continue  # 1/Gamma vanishes at its poles; skip without judging convergence
        term = -power * rgamma(arg)
        mag = np.abs(term)
        done |= (mag > best_term) & ~done
        upd = ~done
        total = np.where(upd, total + term, total)
        best_term = np.where(upd, np.minimum(best_term, mag), best_term)
        best = np.where(upd, total, best)
    ok = best_term <= _ASYMPTOTIC_RTOL * np.abs(best)
    return best, ok


def _ml_contour(alpha: float, kappa: float, x: np.ndarray) -> np.ndarray:
    # E_{a,k}(-x) = L^{-1}[ s^(a-k) / (s^a + x) ](1) for x > 0, 0 < a < 1
    xx = x[..., None]

    def transform(s):
        sa = s**alpha
        return sa * s ** (-kappa) / (sa + xx)

    return invert_laplace(transform, np.ones(x.shape), n=_CONTOUR_N)


def ml_function(alpha: float, kappa, x) -> np.ndarray | float:
    """Two-parameter Mittag-Leffler function ``sum_k x**k / Gamma(alpha*k + kappa)``.

    Parameters
    ----------
    alpha : float in (0, 1]
    kappa : float > 0
    x : array_like of reals

    Notes
    -----
    Three regimes: Taylor series (Kahan-compensated) while ``|x|**(1/alpha) <=
    4`` or ``x >= 0``; the algebraic asymptotic series for large negative
    ``x`` wherever its smallest term is below ``1e-14`` relative; a contour
    inversion of ``s**(alpha-kappa)/(s**alpha - x)`` in between.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)

    if alpha == 1.0 and kappa == 1.0:
        out = np.exp(x)
        return float(out[0]) if scalar else out

    small = (x >= 0) | (np.abs(x) ** (1.0 / alpha) <= _TAYLOR_EXP_LIMIT)
    if np.any(small):
        out[small] = _ml_taylor(alpha, kappa, x[small])
    rest = ~small
    if np.any(rest):
        xr = x[rest]
        asym, ok = _ml_asymptotic(alpha, kappa, xr)
        vals = asym
        if not np.all(ok):
            if alpha == 1.0:
                raise MLConvergenceError(
                    f"E_{{1,{kappa}}}(x) for x = {xr[~ok].min():.3g} is outside "
                    "the supported range"
                )
            vals = np.where(ok, asym, 0.0)
            vals[~ok] = _ml_contour(alpha, kappa, -xr[~ok])
        out[rest] = vals
    if not np.all(np.isfinite(out)):
        bad = x[~np.isfinite(out)]
        raise MLConvergenceError(
            f"non-finite Mittag-Leffler value for alpha={alpha}, kappa={kappa} at x={bad[:3]}"
        )
    return float(out[0]) if scalar else out


# --- one-sided stable law --------------------------------------------------

def kanter_a(theta, alpha: float) -> np.ndarray:
    """Kanter's function A(theta) on (0, pi)."""
    theta = np.asarray(theta, dtype=float)
    sa = np.sin(alpha * theta)
    return (sa / np.sin(theta)) ** (1.0 / (1.0 - alpha)) * np.sin((1.0 - alpha) * theta) / sa


def sample_one_sided_stable(alpha: float, rng: np.random.Generator, size=None):
    """Draws with Laplace transform ``exp(-lam**alpha)``, ``0 < alpha < 1``.

    Kanter's representation ``(A(U)/E)**((1-alpha)/alpha)`` with ``U`` uniform
    on ``(0, pi)`` and ``E`` standard exponential (the skewed Chambers-Mallows-
    Stuck formula in this parameterisation).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u = rng.uniform(0.0, np.pi, size=size)
    e = rng.standard_exponential(size=size)
    return (kanter_a(u, alpha) / e) ** ((1.0 - alpha) / alpha)


# Composite Gauss-Legendre rule on (0, pi) in theta, graded towards pi where
# A(theta) blows up and the tail mass concentrates.
def _theta_rule(alpha: float, order: int = 48):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.pi * (1.0 - np.geomspace(1.0, 1e-9, 13))
    edges = np.concatenate(([0.0], edges[1:-1], [np.pi]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * wg)
    theta = np.concatenate(nodes)
    w = np.concatenate(weights)
    return kanter_a(theta, alpha), w / np.pi


_RULES: dict[float, tuple[np.ndarray, np.ndarray]] = {}


def _rule(alpha: float):
    if alpha not in _RULES:
        _RULES[alpha] = _theta_rule(alpha)
    return _RULES[alpha]


def _stable_parts(x, alpha):
    x = np.asarray(x, dtype=float)
    a = alpha / (1.0 - alpha)
    A, w = _rule(alpha)
    with np.errstate(divide="ignore", over="ignore"):
        z = np.where(x > 0, x, np.inf)[..., None] ** (-a) * A
    return x, a, z, w


def stable_cdf(x, alpha: float) -> np.ndarray:
    """Distribution function of the one-sided stable law (Kanter integral)."""
    x, _, z, w = _stable_parts(x, alpha)
    return np.where(x > 0, (np.exp(-z) * w).sum(axis=-1), 0.0)


def stable_sf(x, alpha: float) -> np.ndarray:
    """Survival function ``1 - stable_cdf`` without cancellation."""
    x, _, z, w = _stable_parts(x, alpha)
    return np.where(x > 0, (-np.expm1(-z) * w).sum(axis=-1), 1.0)


def stable_pdf(x, alpha: float) -> np.ndarray:
    """Density of the one-sided stable law."""
    x, a, z, w = _stable_parts(x, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = (a * z * np.exp(-z) * w).sum(axis=-1) / np.where(x > 0, x, 1.0)
    return np.where(x > 0, dens, 0.0)

