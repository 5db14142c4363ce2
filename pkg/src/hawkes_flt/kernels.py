"""Excitation kernel families.

A kernel is a frozen dataclass exposing the quantities the solvers and the
simulator need: the density ``phi``, its tail ``big_phi`` and integral
``cum_phi``, truncated moments, the transform of the tail, a delay sampler and
the cell moments used by product integration.

Families: ``Exponential``, ``ExponentialMixture``, ``MittagLeffler``,
``MixedMittagLeffler``, ``ScaledStable`` (with ``ConstantScale``,
``ParetoScale``, ``TwoPointScale``) and ``Tabulated``.
"""
from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammainc

from .errors import DomainError, IndeterminateError
from .special import (
    invert_laplace,
    ml_function,
    sample_one_sided_stable,
    stable_pdf,
    stable_sf,
)

__all__ = [
    "Kernel",
    "RVProfile",
    "IndeterminateError",
    "Exponential",
    "ExponentialMixture",
    "MittagLeffler",
    "MixedMittagLeffler",
    "ScaledStable",
    "ConstantScale",
    "ParetoScale",
    "TwoPointScale",
    "Tabulated",
    "KERNEL_FAMILIES",
    "kernel_from_dict",
]

_GL8 = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class RVProfile:
    """Regular-variation data of a function ``g`` at infinity.

    ``g(t) ~ t**index * l(t)`` and ``(g(tx)/g(t) - x**index)/A(t)`` converges
    with second-order index ``second_order_rho <= 0``.  ``auxiliary_A`` must
    vanish at infinity; it is ``None`` when the second-order index is
    ``-inf`` (no second-order term).
    """

    index: float
    second_order_rho: float
    auxiliary_A: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.second_order_rho > 0:
            raise ValueError("second-order index must be <= 0")
        if self.auxiliary_A is not None:
            grid = np.geomspace(1e2, 1e12, 11)
            vals = np.abs([float(self.auxiliary_A(t)) for t in grid])
            if not (np.all(np.isfinite(vals)) and vals[-1] < vals[0]
                    and np.all(np.diff(vals) <= 1e-12 * vals[0])):
                raise ValueError("auxiliary function A does not decay at infinity")


def _as_array(t):
    return np.asarray(t, dtype=float)


class Kernel(ABC):
    """Common interface.  Subclasses are frozen dataclasses."""

    #: branching ratio; a dataclass field or a class constant in each family
    m: float

    # --- required ---------------------------------------------------------

    @abstractmethod
    def phi(self, t): ...

    @abstractmethod
    def cum_phi(self, t):
        """``int_0^t phi``."""

    @abstractmethod
    def sample_delay(self, rng: np.random.Generator, size): ...

    @abstractmethod
    def laplace_big_phi(self, lam):
        """``int_0^inf (1 - exp(-lam t)) phi(t) dt``."""

    @property
    @abstractmethod
    def time_scale(self) -> float:
        """A characteristic delay, used to cap step sizes."""

    # --- defaults ---------------------------------------------------------
    @property
    def branching_ratio(self) -> float:
        return float(self.m)

    def big_phi(self, t):
        """Tail ``int_t^inf phi``."""
        return self.branching_ratio - self.cum_phi(t)

    # leading behaviour phi(t) ~ c t**(p-1) at 0, or None when phi(0) finite
    leading_power: tuple[float, float] | None = None

    @property
    def phi_finite_at_zero(self) -> bool:
        return self.leading_power is None or self.leading_power[1] >= 1.0

    #: True when phi is non-increasing (thinning simulation is allowed)
    nonincreasing: bool = False

    def support_phi(self, t):
        """``phi`` on the whole line (identical to ``phi`` except for tables)."""
        return self.phi(t)

    def laplace_phi(self, lam):
        """``int_0^inf exp(-lam t) phi(t) dt``."""
        return self.branching_ratio - self.laplace_big_phi(lam)

    def psi1(self, t):
        """``int_0^t s phi(s) ds``."""
        return self.psi_k(t, 1)

    def psi_k(self, t, order: int):
        """Truncated moment ``int_0^t s**order phi(s) ds`` by adaptive quadrature."""
        if order < 0:
            raise ValueError("order must be >= 0")
        if order == 0:
            return self.cum_phi(t)
        t = _as_array(t)
        out = np.empty(t.shape)
        for idx, tv in np.ndenumerate(t):
            out[idx] = self._quad_moment(float(tv), order)
        return out if out.ndim else float(out)

    def _quad_moment(self, t: float, order: int) -> float:
        if t <= 0:
            return 0.0
        f = lambda s: s**order * float(self.phi(s))  # noqa: E731
        if np.isinf(t):
            return integrate.quad(f, 0, np.inf, limit=400)[0]
        pts = np.geomspace(max(t * 1e-6, 1e-300), t, 8)
        total, lo = 0.0, 0.0
        for hi in pts:
            total += integrate.quad(f, lo, hi, limit=200)[0]
            lo = hi
        return total

    def dispersion_sigma(self) -> float:
        """``int_0^inf t phi(t) dt`` (possibly ``inf``)."""
        return float(self.psi_k(np.inf, 1))

    def cell_moments(self, h: float, n: int):
        """Cell integrals for product integration on the grid ``j*h``.

        Returns ``A`` and ``C`` of length ``n`` with
        ``A[d] = int_{dh}^{(d+1)h} phi`` and
        ``C[d] = (1/h) int_{dh}^{(d+1)h} (u - dh) phi(u) du``.
        """
        nodes = h * np.arange(n + 1)
        A = np.diff(self.cum_phi(nodes))
        C = np.empty(n)
        x, w = _GL8
        left = nodes[:-1, None]
        u = left + 0.5 * h * (x + 1.0)
        if self.phi_finite_at_zero:
            C[:] = (0.5 * h * w * (u - left) / h * self.phi(u)).sum(axis=1)
        else:
            C[0] = float(self.psi1(h)) / h
            if n > 1:
                C[1:] = (0.5 * h * w * (u[1:] - left[1:]) / h * self.phi(u[1:])).sum(axis=1)
        return A, C

    def i2r_profile(self) -> RVProfile | None:
        """Regular-variation profile of the resolvent double integral, if known."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


# --- exponential sums ------------------------------------------------------

def _one_minus_exp_1px(x):
    """``1 - exp(-x)(1 + x)`` for ``x >= 0``, accurate for small x."""
    x = _as_array(x)
    small = x < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs**2 / 2 - xs**3 / 3 + xs**4 / 8 - xs**5 / 30
    return np.where(small, series, -np.expm1(-x) - x * np.exp(-x))


class _ExpSum(Kernel):
    nonincreasing = True

    @abstractmethod
    def components(self) -> tuple[np.ndarray, np.ndarray]:
        """Weights and rates of ``phi = sum w_i b_i exp(-b_i t)``."""

    @property
    def time_scale(self) -> float:
        return float(1.0 / np.max(self.components()[1]))

    def _bcast(self, t):
        w, b = self.components()
        return _as_array(t)[..., None], w, b

    def phi(self, t):
        t, w, b = self._bcast(t)
        return np.where(t >= 0, (w * b * np.exp(-b * np.maximum(t, 0))), 0.0).sum(axis=-1)

    def cum_phi(self, t):
        t, w, b = self._bcast(t)
        return (w * -np.expm1(-b * np.maximum(t, 0))).sum(axis=-1)

    def big_phi(self, t):
        t, w, b = self._bcast(t)
        return (w * np.exp(-b * np.maximum(t, 0))).sum(axis=-1)

    def psi_k(self, t, order: int):
        if order < 0:
            raise ValueError("order must be >= 0")
        t, w, b = self._bcast(t)
        full = math.factorial(order) / b**order
        part = np.where(np.isinf(t), 1.0, gammainc(order + 1, b * np.where(np.isinf(t), 0, t)))
        return (w * full * part).sum(axis=-1)

    def psi1(self, t):
        t, w, b = self._bcast(t)
        return (w / b * _one_minus_exp_1px(b * np.maximum(t, 0))).sum(axis=-1)

    def dispersion_sigma(self) -> float:
        w, b = self.components()
        return float(np.sum(w / b))

    def laplace_big_phi(self, lam):
        lam = np.asarray(lam)[..., None]
        w, b = self.components()
        return (w * lam / (b + lam)).sum(axis=-1)

    def laplace_phi(self, lam):
        lam = np.asarray(lam)[..., None]
        w, b = self.components()
        return (w * b / (b + lam)).sum(axis=-1)

    def sample_delay(self, rng, size):
        w, b = self.components()
        if len(w) == 1:
            return rng.exponential(1.0 / b[0], size=size)
        comp = rng.choice(len(w), size=size, p=w / w.sum())
        return rng.exponential(1.0, size=size) / b[comp]

    def cell_moments(self, h: float, n: int):
        w, b = self.components()
        d = np.arange(n)[:, None]
        decay = np.exp(-b * d * h)
        A = (w * decay * -np.expm1(-b * h)).sum(axis=1)
        C = (w * decay * _one_minus_exp_1px(b * h) / (b * h)).sum(axis=1)
        return A, C

    def resolvent_closed_form(self, t):
        """Exact resolvent ``R`` by partial fractions of the transform."""
        w, b = self.components()
        # R^(s) = phi^/(1 - phi^), phi^ = sum w b/(b+s); poles are the roots of
        # 1 - phi^(s) = 0, i.e. of prod(b+s) - sum w_i b_i prod_{j!=i}(b_j+s).
        den = np.poly1d([1.0])
        for bi in b:
            den = den * np.poly1d([1.0, bi])
        num = np.poly1d([0.0])
        for i in range(len(b)):
            term = np.poly1d([w[i] * b[i]])
            for j in range(len(b)):
                if j != i:
                    term = term * np.poly1d([1.0, b[j]])
            num = num + term
        char = den - num
        roots = np.roots(char.coeffs)
        dchar = char.deriv()
        t = _as_array(t)
        out = np.zeros(t.shape, dtype=complex)
        for r in roots:
            out += num(r) / dchar(r) * np.exp(r * t)
        return out.real

    def resolvent_integral_closed_form(self, t):
        """Exact ``I_R`` from the same partial fractions."""
        w, b = self.components()
        t = _as_array(t)
        # integrate each exponential mode; a zero root integrates to c*t
        den = np.poly1d([1.0])
        for bi in b:
            den = den * np.poly1d([1.0, bi])
        num = np.poly1d([0.0])
        for i in range(len(b)):
            term = np.poly1d([w[i] * b[i]])
            for j in range(len(b)):
                if j != i:
                    term = term * np.poly1d([1.0, b[j]])
            num = num + term
        char = den - num
        dchar = char.deriv()
        out = np.zeros(t.shape, dtype=complex)
        for r in np.roots(char.coeffs):
            c = num(r) / dchar(r)
            if abs(r) < 1e-12:
                out += c * t
            else:
                out += c * np.expm1(r * t) / r
        return out.real


@dataclass(frozen=True)
class Exponential(_ExpSum):
    """``phi(t) = m * beta * exp(-beta t)``."""

    m: float
    beta: float

    def __post_init__(self):
        if not (self.m >= 0 and math.isfinite(self.m)):
            raise ValueError(f"branching ratio must be finite and >= 0, got {self.m}")
        if not self.beta > 0:
            raise ValueError(f"rate must be positive, got {self.beta}")

    def components(self):
        return np.array([self.m]), np.array([self.beta])

    def i2r_profile(self):
        if abs(self.m - 1.0) < 1e-12:
            # I2_R(t) = t^2/(2 sigma) + t/sigma ... exact quadratic growth
            return RVProfile(2.0, -1.0, lambda t: 1.0 / t)
        return None

    def to_dict(self):
        return {"family": "exponential", "m": self.m, "beta": self.beta}


@dataclass(frozen=True)
class ExponentialMixture(_ExpSum):
    """``phi(t) = sum_i w_i b_i exp(-b_i t)`` with ``m = sum w_i``."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(x) for x in self.weights))
        object.__setattr__(self, "rates", tuple(float(x) for x in self.rates))
        if len(self.weights) != len(self.rates) or not self.weights:
            raise ValueError("weights and rates must be non-empty and of equal length")
        if any(w < 0 for w in self.weights) or any(b <= 0 for b in self.rates):
            raise ValueError("weights must be >= 0 and rates > 0")

    def components(self):
        return np.array(self.weights), np.array(self.rates)

    @property
    def m(self) -> float:  # type: ignore[override]
        return float(sum(self.weights))

    def to_dict(self):
        return {"family": "exponential_mixture", "weights": list(self.weights),
                "rates": list(self.rates)}


# --- Mittag-Leffler ---------------------------------------------------------

@dataclass(frozen=True)
class MittagLeffler(Kernel):
    """Mittag-Leffler density with tail ``E_alpha(-beta t**alpha)``; ``m = 1``, ``sigma = inf``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    m = 1.0

    @property
    def leading_power(self):
        return (self.beta / math.gamma(self.alpha), self.alpha)

    @property
    def time_scale(self) -> float:
        return self.beta ** (-1.0 / self.alpha)

    def _x(self, t):
        return self.beta * np.maximum(_as_array(t), 0.0) ** self.alpha

    def phi(self, t):
        t = _as_array(t)
        with np.errstate(divide="ignore"):
            tp = np.where(t > 0, t, 1.0)
            val = self.beta * tp ** (self.alpha - 1) * ml_function(
                self.alpha, self.alpha, -self._x(tp))
        return np.where(t > 0, val, np.where(t == 0, np.inf, 0.0))

    def cum_phi(self, t):
        x = self._x(t)
        with np.errstate(invalid="ignore"):
            val = x * ml_function(self.alpha, self.alpha + 1, -x)
        return np.where(np.isinf(x), 1.0, val)

    def big_phi(self, t):
        return ml_function(self.alpha, 1.0, -self._x(t))

    def psi1(self, t):
        t = np.maximum(_as_array(t), 0.0)
        x = self._x(t)
        a = self.alpha
        small = x < 1.0
        out = np.empty(np.shape(x))
        if np.any(small):
            xs = x[small]
            out[small] = t[small] * xs * (ml_function(a, a + 1, -xs) - ml_function(a, a + 2, -xs))
        big = ~small
        if np.any(big):
            xb = x[big]
            out[big] = t[big] * (ml_function(a, 2.0, -xb) - ml_function(a, 1.0, -xb))
        return out if out.ndim else float(out)

    def dispersion_sigma(self) -> float:
        return math.inf

    def laplace_big_phi(self, lam):
        la = np.asarray(lam) ** self.alpha
        return la / (self.beta + la)

    def laplace_phi(self, lam):
        return self.beta / (self.beta + np.asarray(lam) ** self.alpha)

    def sample_delay(self, rng, size):
        s = sample_one_sided_stable(self.alpha, rng, size)
        e = rng.standard_exponential(size=size)
        return self.beta ** (-1.0 / self.alpha) * s * e ** (1.0 / self.alpha)

    def resolvent_integral(self, t):
        """Closed form ``beta t**alpha / Gamma(alpha+1)``."""
        return self.beta * np.maximum(_as_array(t), 0) ** self.alpha / math.gamma(self.alpha + 1)

    def resolvent_double_integral(self, t):
        return self.beta * np.maximum(_as_array(t), 0) ** (self.alpha + 1) / math.gamma(self.alpha + 2)

    def i2r_profile(self):
        return RVProfile(self.alpha + 1.0, -math.inf, None)

    def to_dict(self):
        return {"family": "mittag_leffler", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class MixedMittagLeffler(Kernel):
    """Convolution of two Mittag-Leffler densities."""

    alpha1: float
    alpha2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        for a in (self.alpha1, self.alpha2):
            if not 0 < a < 1:
                raise ValueError(f"alpha must lie in (0, 1), got {a}")
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")

    m = 1.0

    @property
    def leading_power(self):
        p = self.alpha1 + self.alpha2
        return (self.beta1 * self.beta2 / math.gamma(p), p)

    @property
    def time_scale(self) -> float:
        return max(self.beta1 ** (-1 / self.alpha1), self.beta2 ** (-1 / self.alpha2))

    def _hat(self, s):
        return self.beta1 * self.beta2 / ((self.beta1 + s**self.alpha1) * (self.beta2 + s**self.alpha2))

    def _tail_hat(self, s):
        # (1 - phi^(s)) without cancellation
        a = s**self.alpha1
        b = s**self.alpha2
        return (a * b + self.beta1 * b + self.beta2 * a) / ((self.beta1 + a) * (self.beta2 + b))

    def phi(self, t):
        t = _as_array(t)
        tp = np.where(t > 0, t, 1.0)
        val = invert_laplace(self._hat, tp)
        p = self.alpha1 + self.alpha2
        at0 = np.inf if p < 1 else (self.beta1 * self.beta2 if p == 1 else 0.0)
        return np.where(t > 0, val, np.where(t == 0, at0, 0.0))

    def cum_phi(self, t):
        t = _as_array(t)
        tp = np.where((t > 0) & np.isfinite(t), t, 1.0)
        val = np.where(t > 0, invert_laplace(lambda s: self._hat(s) / s, tp), 0.0)
        return np.where(np.isposinf(t), 1.0, val)

    def big_phi(self, t):
        t = _as_array(t)
        tp = np.where((t > 0) & np.isfinite(t), t, 1.0)
        val = np.where(t > 0, invert_laplace(lambda s: self._tail_hat(s) / s, tp), 1.0)
        return np.where(np.isposinf(t), 0.0, val)

    def psi1(self, t):
        a1, a2, b1, b2 = self.alpha1, self.alpha2, self.beta1, self.beta2

        def neg_dhat_over_s(s):
            u, v = s**a1, s**a2
            dd = (a1 * u / s) / (b1 + u) + (a2 * v / s) / (b2 + v)
            return self._hat(s) * dd / s

        t = _as_array(t)
        tp = np.where(t > 0, t, 1.0)
        return np.where(t > 0, invert_laplace(neg_dhat_over_s, tp), 0.0)

    def dispersion_sigma(self) -> float:
        return math.inf

    def laplace_big_phi(self, lam):
        return self._tail_hat(np.asarray(lam, dtype=float))

    def laplace_phi(self, lam):
        return self._hat(np.asarray(lam, dtype=float))

    def sample_delay(self, rng, size):
        k1 = MittagLeffler(self.alpha1, self.beta1)
        k2 = MittagLeffler(self.alpha2, self.beta2)
        return k1.sample_delay(rng, size) + k2.sample_delay(rng, size)

    def i2r_profile(self):
        a1, a2, b1, b2 = self.alpha1, self.alpha2, self.beta1, self.beta2
        a = min(a1, a2)
        if a1 == a2:
            # I_R^ = b1 b2 / (s^a (s^a + b1 + b2)); leading s^-a, next s^0
            return RVProfile(a + 1.0, -a, lambda t: t ** (-a))
        big = max(a1, a2)
        return RVProfile(a + 1.0, a - big, lambda t: t ** (a - big))

    def to_dict(self):
        return {"family": "mixed_mittag_leffler", "alpha1": self.alpha1,
                "alpha2": self.alpha2, "beta1": self.beta1, "beta2": self.beta2}


# --- scaled stable ----------------------------------------------------------

_GL64 = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class ConstantScale:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("scale must be positive")

    def rule(self):
        return np.array([self.value]), np.array([1.0])

    def sample(self, rng, size):
        return np.full(size, self.value, dtype=float)

    def laplace(self, s):
        return np.exp(-s * self.value)

    def one_minus_laplace(self, s):
        return -np.expm1(-s * self.value)

    def to_dict(self):
        return {"law": "constant", "value": self.value}


@dataclass(frozen=True)
class TwoPointScale:
    low: float
    high: float
    p_low: float

    def __post_init__(self):
        if not (0 < self.low and 0 < self.high and 0 <= self.p_low <= 1):
            raise ValueError("two-point law needs positive atoms and p_low in [0, 1]")

    def rule(self):
        return np.array([self.low, self.high]), np.array([self.p_low, 1 - self.p_low])

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p_low, self.low, self.high)

    def laplace(self, s):
        return self.p_low * np.exp(-s * self.low) + (1 - self.p_low) * np.exp(-s * self.high)

    def one_minus_laplace(self, s):
        return -(self.p_low * np.expm1(-s * self.low) + (1 - self.p_low) * np.expm1(-s * self.high))

    def to_dict(self):
        return {"law": "two_point", "low": self.low, "high": self.high, "p_low": self.p_low}


@dataclass(frozen=True)
class ParetoScale:
    """Pareto law ``P(xi > x) = (scale/x)**tail`` for ``x >= scale``, ``1 < tail < 2``."""

    tail: float
    scale: float

    def __post_init__(self):
        if not 1 < self.tail < 2:
            raise ValueError("Pareto tail index must lie in (1, 2)")
        if not self.scale > 0:
            raise ValueError("Pareto scale must be positive")

    def rule(self):
        # quantile transform xi = scale * u**(-1/tail), with u = v**4 grading the
        # nodes towards the heavy end
        x, w = _GL64
        v = 0.5 * (x + 1.0)
        u = v**4
        return self.scale * u ** (-1.0 / self.tail), 0.5 * w * 4 * v**3

    def sample(self, rng, size):
        return self.scale * (1.0 - rng.random(size)) ** (-1.0 / self.tail)

    def laplace(self, s):
        return 1.0 - self.one_minus_laplace(s)

    def one_minus_laplace(self, s):
        xi, w = self.rule()
        return (-np.expm1(-np.asarray(s)[..., None] * xi) * w).sum(axis=-1)

    def to_dict(self):
        return {"law": "pareto", "tail": self.tail, "scale": self.scale}


_SCALE_LAWS = {"constant": ConstantScale, "two_point": TwoPointScale, "pareto": ParetoScale}


@dataclass(frozen=True)
class ScaledStable(Kernel):
    """Law of ``Z * xi**(1/alpha)`` with ``Z`` one-sided stable and ``xi`` independent."""

    alpha: float
    xi: ConstantScale | TwoPointScale | ParetoScale = field(default_factory=lambda: ConstantScale(1.0))

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    m = 1.0

    @property
    def time_scale(self) -> float:
        xi, w = self.xi.rule()
        return float(np.sum(w * xi)) ** (1.0 / self.alpha)

    def _mix(self, t, fn):
        t = _as_array(t)
        xi, w = self.xi.rule()
        out = np.zeros(t.shape)
        for c, wi in zip(xi ** (-1.0 / self.alpha), w):
            out += wi * fn(t * c, c)
        return out

    def phi(self, t):
        t = _as_array(t)
        return np.where(t > 0, self._mix(np.maximum(t, 0), lambda x, c: c * stable_pdf(x, self.alpha)), 0.0)

    def big_phi(self, t):
        return self._mix(np.maximum(_as_array(t), 0), lambda x, c: stable_sf(x, self.alpha))

    def cum_phi(self, t):
        return 1.0 - self.big_phi(t)

    def dispersion_sigma(self) -> float:
        return math.inf

    def laplace_big_phi(self, lam):
        return self.xi.one_minus_laplace(np.asarray(lam, dtype=float) ** self.alpha)

    def laplace_phi(self, lam):
        return self.xi.laplace(np.asarray(lam, dtype=float) ** self.alpha)

    def sample_delay(self, rng, size):
        z = sample_one_sided_stable(self.alpha, rng, size)
        return z * self.xi.sample(rng, size) ** (1.0 / self.alpha)

    def i2r_profile(self):
        if isinstance(self.xi, ConstantScale):
            # I_R^(s) = c^-1 s^-a - 1/2 + ...: second-order index -alpha
            return RVProfile(self.alpha + 1.0, -self.alpha, lambda t: t ** (-self.alpha))
        if isinstance(self.xi, TwoPointScale):
            return RVProfile(self.alpha + 1.0, -self.alpha, lambda t: t ** (-self.alpha))
        b = self.xi.tail
        rho = self.alpha * (1.0 - b)
        return RVProfile(self.alpha + 1.0, rho, lambda t: t ** rho)

    def to_dict(self):
        return {"family": "scaled_stable", "alpha": self.alpha, "xi": self.xi.to_dict()}


# --- tabulated --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tabulated(Kernel):
    """Kernel given on a grid, linearly interpolated and zero beyond the last node.

    ``m`` is the declared branching ratio; it must agree with the trapezoid
    integral of the table to ``rtol``.
    """

    t: np.ndarray
    values: np.ndarray
    m: float
    rtol: float = 1e-3

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError("table needs matching one-dimensional t and phi columns")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("table times must start at 0 and be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("table values must be finite and non-negative")
        total = float(integrate.trapezoid(v, t))
        if abs(total - self.m) > self.rtol * max(abs(self.m), 1e-300):
            raise ValueError(f"declared m={self.m} but the table integrates to {total:.6g}")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        # cumulative integrals of the interpolant at the nodes
        dt = np.diff(t)
        c0 = np.concatenate(([0.0], np.cumsum(0.5 * dt * (v[:-1] + v[1:]))))
        # int s*phi over each segment for linear phi: dt*(t0(2v0+v1)+t1(v0+2v1))/6
        seg1 = dt * (t[:-1] * (2 * v[:-1] + v[1:]) + t[1:] * (v[:-1] + 2 * v[1:])) / 6.0
        c1 = np.concatenate(([0.0], np.cumsum(seg1)))
        object.__setattr__(self, "_c0", c0)
        object.__setattr__(self, "_c1", c1)
        object.__setattr__(self, "_mass", c0[-1])

    @classmethod
    def from_csv(cls, path: str | Path, m: float, rtol: float = 1e-3) -> "Tabulated":
        """Read a table with header ``t,phi``."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.startswith("#"))
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "phi"]:
                raise ValueError(f"{path}: expected header 't,phi'")
            rows = [(float(r["t"]), float(r["phi"])) for r in reader]
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1], m, rtol)

    @property
    def nonincreasing(self) -> bool:  # type: ignore[override]
        return bool(np.all(np.diff(self.values) <= 0))

    @property
    def time_scale(self) -> float:
        return float(self._c1[-1] / self._c0[-1]) if self._c0[-1] > 0 else float(self.t[-1])

    def _normalised(self):
        # the interpolant is rescaled to carry exactly the declared mass
        return self.m / self._mass if self._mass > 0 else 0.0

    def phi(self, t):
        t = _as_array(t)
        if np.any(t > self.t[-1] * (1 + 1e-12)):
            raise DomainError(f"tabulated kernel queried beyond its grid end {self.t[-1]:g}")
        return self.support_phi(t)

    def support_phi(self, t):
        """``phi`` extended by zero beyond the table."""
        return self._normalised() * np.interp(_as_array(t), self.t, self.values, left=0.0, right=0.0)

    def _segment(self, t):
        t = np.clip(_as_array(t), 0.0, self.t[-1])
        i = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        t0 = self.t[i]
        v0 = self.values[i]
        slope = (self.values[i + 1] - v0) / (self.t[i + 1] - t0)
        return t, i, t0, v0, slope

    def cum_phi(self, t):
        t, i, t0, v0, slope = self._segment(t)
        d = t - t0
        return self._normalised() * (self._c0[i] + v0 * d + 0.5 * slope * d**2)

    def psi1(self, t):
        t, i, t0, v0, slope = self._segment(t)
        d = t - t0
        # int_t0^t s (v0 + slope (s - t0)) ds
        part = v0 * (t**2 - t0**2) / 2 + slope * (d**3 / 3 + t0 * d**2 / 2)
        return self._normalised() * (self._c1[i] + part)

    def psi_k(self, t, order: int):
        if order == 1:
            return self.psi1(np.minimum(_as_array(t), self.t[-1]))
        return super().psi_k(np.minimum(_as_array(t), self.t[-1]), order)

    def cell_moments(self, h: float, n: int):
        nodes = h * np.arange(n + 1)
        A = np.diff(self.cum_phi(nodes))
        C = (np.diff(self.psi1(nodes)) - nodes[:-1] * A) / h
        return A, C

    def dispersion_sigma(self) -> float:
        """First moment, or ``inf`` when the table looks heavy-tailed.

        A table is always finite, so the decision is made from the share of
        the first moment carried by the last decade of the grid: at most
        ``1e-3`` reads as finite, above ``1e-2`` as infinite, and anything in
        between (or a grid spanning less than one decade) is indeterminate.
        """
        t_end = self.t[-1]
        start = t_end / 10.0
        if self.t[1] > start:
            raise IndeterminateError("grid spans less than one decade; cannot judge the tail")
        total = float(self._c1[-1])
        share = (total - float(self.psi1(start))) / total if total > 0 else 0.0
        if share <= 1e-3:
            return total * self._normalised()
        if share > 1e-2:
            return math.inf
        raise IndeterminateError(
            f"the last decade of the table carries {share:.2%} of the first moment"
        )

    def laplace_big_phi(self, lam):
        lam = np.asarray(lam, dtype=float)
        # refine the table so the exponential factor is resolved
        fine = np.unique(np.concatenate([self.t, np.linspace(0, self.t[-1], 20001)]))
        integrand = -np.expm1(-lam[..., None] * fine) * self.support_phi(fine)
        return integrate.trapezoid(integrand, fine, axis=-1)

    def sample_delay(self, rng, size):
        if self.m <= 0:
            raise ValueError("cannot sample delays from a kernel with zero mass")
        u = rng.random(size) * self._mass
        # invert the piecewise-quadratic cumulative integral
        i = np.clip(np.searchsorted(self._c0, u, side="right") - 1, 0, len(self.t) - 2)
        t0 = self.t[i]
        v0 = self.values[i]
        slope = (self.values[i + 1] - v0) / (self.t[i + 1] - t0)
        r = u - self._c0[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = (-v0 + np.sqrt(np.maximum(v0**2 + 2 * slope * r, 0.0))) / slope
            lin = r / v0
        d = np.where(np.abs(slope) > 1e-14, quad, lin)
        return np.clip(t0 + np.nan_to_num(d), t0, self.t[i + 1])

    def to_dict(self):
        return {"family": "tabulated", "t": self.t.tolist(), "phi": self.values.tolist(), "m": self.m}


# --- registry ---------------------------------------------------------------

KERNEL_FAMILIES = {
    "exponential": "m, beta",
    "exponential_mixture": "weights, rates",
    "mittag_leffler": "alpha, beta",
    "mixed_mittag_leffler": "alpha1, alpha2, beta1, beta2",
    "scaled_stable": "alpha, xi={law: constant|two_point|pareto, ...}",
    "tabulated": "path (CSV with header t,phi), m",
}


def kernel_from_dict(d: dict, base_dir: Path | None = None) -> Kernel:
    """Build a kernel from a JSON-style dictionary with a ``family`` key."""
    d = dict(d)
    fam = d.pop("family", None)
    try:
        if fam == "exponential":
            return Exponential(float(d["m"]), float(d["beta"]))
        if fam == "exponential_mixture":
            return ExponentialMixture(tuple(d["weights"]), tuple(d["rates"]))
        if fam == "mittag_leffler":
            return MittagLeffler(float(d["alpha"]), float(d["beta"]))
        if fam == "mixed_mittag_leffler":
            return MixedMittagLeffler(float(d["alpha1"]), float(d["alpha2"]),
                                      float(d["beta1"]), float(d["beta2"]))
        if fam == "scaled_stable":
            xi = dict(d.get("xi", {"law": "constant", "value": 1.0}))
            law = _SCALE_LAWS[xi.pop("law")]
            return ScaledStable(float(d["alpha"]), law(**{k: float(v) for k, v in xi.items()}))
        if fam == "tabulated":
            if "path" in d:
                path = Path(d["path"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                return Tabulated.from_csv(path, float(d["m"]), float(d.get("rtol", 1e-3)))
            return Tabulated(np.array(d["t"]), np.array(d["phi"]), float(d["m"]))
    except KeyError as exc:
        raise ValueError(f"kernel family {fam!r} is missing parameter {exc}") from None
    raise ValueError(f"unknown kernel family {fam!r}; known: {', '.join(KERNEL_FAMILIES)}")
