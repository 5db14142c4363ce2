"""Deterministic solvers: resolvent, Fourier-Laplace exponent and CIR Riccati equation.

All solvers work on a uniform grid ``t_j = j*h`` and use product integration:
the unknown is interpolated linearly between nodes and integrated exactly
against the kernel, whose cell moments come from ``Kernel.cell_moments``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

from .errors import BlowUpError, ConvergenceError, DomainError, RegimeError, StepSizeError
from .kernels import Kernel

__all__ = [
    "Grid",
    "ResolventTable",
    "FunctionalSpec",
    "ComplexVolterraSolution",
    "CIRRiccatiSolution",
    "ResolventGap",
    "solve_resolvent",
    "mean_count",
    "laplace_IR",
    "solve_fourier_laplace",
    "char_functional",
    "solve_cir_riccati",
    "cir_functional",
    "resolvent_gap",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``0, h, ..., n*h`` with ``n = ceil(T/h)``."""

    T: float
    h: float

    def __post_init__(self):
        if not (self.T > 0 and self.h > 0 and math.isfinite(self.T)):
            raise ValueError(f"grid needs T > 0 and h > 0, got T={self.T}, h={self.h}")
        if self.h > self.T:
            raise ValueError(f"step exceeds horizon (h={self.h}, T={self.T})")

    @property
    def n(self) -> int:
        return int(math.ceil(self.T / self.h - 1e-9))

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.n + 1)


# --- product-integration weights -------------------------------------------

def _pi_weights(A: np.ndarray, C: np.ndarray):
    """Convolution weights for a linearly interpolated unknown.

    ``int_0^{t_j} k(t_j - s) g(s) ds ~ w1[0] g_j + sum_{i=1}^{j-1} c[j-i] g_i + w0[j-1] g_0``
    where ``w0 = C`` multiplies the older node of a cell and ``w1 = A - C``
    the newer one; ``c[d] = w1[d] + w0[d-1]``.
    """
    w0 = C
    w1 = A - C
    c = np.empty_like(A)
    c[0] = w1[0]
    c[1:] = w1[1:] + w0[:-1]
    return w0, w1, c


def _convolve_known(w0, c, g):
    """Explicit product-integration convolution of a known sequence ``g`` (all nodes)."""
    n = len(g) - 1
    out = np.zeros(n + 1, dtype=np.result_type(g, float))
    if n == 0:
        return out
    # interior: sum_{i=1}^{j} c[j-i] g_i for j >= 1 (the i = j term uses c[0] = w1[0])
    full = fftconvolve(c[:n], g[1:], mode="full")[:n] if n > 1 else c[:1] * g[1:2]
    out[1:] = full + w0[:n] * g[0]
    return out


# --- resolvent --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ResolventTable:
    """Resolvent ``R``, its integrals and the mean intensity on a grid."""

    grid: Grid
    R: np.ndarray
    I_R: np.ndarray
    I2_R: np.ndarray
    mu0: float

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def H_mu(self) -> np.ndarray:
        return self.mu0 * (1.0 + self.I_R)

    def at(self, what: str, t):
        """Linear interpolation of ``R``, ``I_R``, ``I2_R`` or ``H_mu`` at times ``t``."""
        vals = getattr(self, what)
        return np.interp(t, self.t, vals)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "R", "I_R", "I2_R"])
            for row in zip(self.t, self.R, self.I_R, self.I2_R):
                wr.writerow([repr(float(v)) for v in row])


def _implicit_denominator(w1_0: float, h: float) -> float:
    den = 1.0 - w1_0
    if den <= 0:
        raise StepSizeError(
            f"step h={h:g} too large: the kernel puts {w1_0:.3g} >= 1 on the newest node"
        )
    return den


def solve_resolvent(kernel: Kernel, grid: Grid, mu0: float = 1.0) -> ResolventTable:
    """Solve ``I_R = cum_phi + phi * I_R`` and recover ``R`` and ``I2_R``.

    The integrated equation is regular even when ``phi`` is singular at 0,
    which keeps the scheme stable for Mittag-Leffler kernels.
    """
    if mu0 <= 0:
        raise ValueError("mu0 must be positive")
    n, h = grid.n, grid.h
    A, C = kernel.cell_moments(h, n)
    w0, w1, c = _pi_weights(A, C)
    den = _implicit_denominator(w1[0], h)
    F = np.concatenate(([0.0], np.cumsum(A)))
    # integrating once more gives I2_R = int F + phi * I2_R, and the cell
    # moments integrate F exactly: int_cell F = h (F_{d+1} - C_d)
    F2 = np.concatenate(([0.0], np.cumsum(h * (F[1:] - C))))
    forcing = np.stack([F, F2], axis=1)
    X = np.zeros((n + 1, 2))
    # X_0 = 0 so the w0[j-1] X_0 term drops out
    for j in range(1, n + 1):
        hist = c[j - 1:0:-1] @ X[1:j] if j > 1 else 0.0
        X[j] = (forcing[j] + hist) / den
    I, I2 = X[:, 0].copy(), X[:, 1].copy()
    dI = np.diff(I) / h
    conv = fftconvolve(dI, A)[: n] if n > 0 else np.zeros(0)
    R = np.empty(n + 1)
    phi_nodes = kernel.phi(grid.nodes)
    R[0] = phi_nodes[0]
    R[1:] = phi_nodes[1:] + conv
    return ResolventTable(grid, R, I, I2, float(mu0))


def mean_count(table: ResolventTable, mu0: float, t) -> np.ndarray:
    """``E N(t) = mu0 (t + I2_R(t))``."""
    t = np.asarray(t, dtype=float)
    if np.any(t > table.t[-1] + 1e-12):
        raise DomainError("t beyond the end of the resolvent table")
    return mu0 * (t + table.at("I2_R", t))


def laplace_IR(kernel: Kernel, lam) -> np.ndarray:
    """Laplace-Stieltjes transform of ``I_R``: ``(m - Phi^)/(1 - m + Phi^)``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("lambda must be positive")
    tail = kernel.laplace_big_phi(lam)
    m = kernel.branching_ratio
    den = 1.0 - m + tail
    if np.any(den <= 0):
        raise DomainError("1 - m + Phi^(lambda) vanishes; the transform is undefined")
    return (m - tail) / den


# --- Fourier-Laplace functional ---------------------------------------------

@dataclass(frozen=True)
class FunctionalSpec:
    """Test functions of the Fourier-Laplace functional on ``[0, T]``.

    ``nu = sum_i z_i delta_{s_i} + density(s) ds`` and ``f``; both must have
    non-positive real part.  ``atoms`` is a sequence of ``(location, weight)``.
    """

    T: float
    atoms: tuple[tuple[float, complex], ...] = ()
    density: Callable[[np.ndarray], np.ndarray] | None = None
    f: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(s), complex(z)) for s, z in self.atoms))
        if self.T <= 0:
            raise ValueError("T must be positive")
        for s, z in self.atoms:
            if not 0 <= s <= self.T:
                raise ValueError(f"atom location {s} outside [0, {self.T}]")
            if z.real > 1e-15:
                raise ValueError(f"atom weight {z} has positive real part")

    @classmethod
    def finite_dimensional(cls, T: float, times: Sequence[float], z: Sequence[complex],
                           u: Sequence[complex] = ()) -> "FunctionalSpec":
        """Spec for ``E exp(sum z_i Lambda(t_i) + sum u_i N(t_i))``.

        The atoms sit at ``T - t_i`` and ``f = sum u_i 1{T - t <= t_i}``.
        """
        atoms = tuple((T - ti, zi) for ti, zi in zip(times, z))
        u = tuple(complex(x) for x in u)
        if u:
            if len(u) != len(times):
                raise ValueError("u must match times")
            tt = np.asarray(times, dtype=float)
            uu = np.asarray(u)

            def f(s, tt=tt, uu=uu, T=T):
                s = np.asarray(s, dtype=float)
                return ((T - s)[..., None] <= tt + 1e-12).astype(complex) @ uu
        else:
            f = None
        return cls(T, atoms, None, f)

    def values(self, fn, t):
        if fn is None:
            return np.zeros(len(t), dtype=complex)
        v = np.asarray(fn(t), dtype=complex) * np.ones(len(t))
        if np.any(v.real > 1e-15):
            raise ValueError("test function has positive real part on the grid")
        return v


@dataclass(frozen=True, eq=False)
class ComplexVolterraSolution:
    grid: Grid
    V: np.ndarray
    W: np.ndarray
    forcing: np.ndarray  # the phi * nu (or R * nu) term
    f_values: np.ndarray
    density_values: np.ndarray
    spec: FunctionalSpec
    form: str

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "ReV", "ImV", "ReW", "ImW"])
            for t, v, w in zip(self.grid.nodes, self.V, self.W):
                wr.writerow([repr(float(t)), repr(v.real), repr(v.imag), repr(w.real), repr(w.imag)])


def _atom_forcing(values_at, cell_avg0: float, singular: bool, nodes, atoms):
    """``sum_i z_i k(t - s_i)`` on the nodes, for a kernel given by ``values_at``."""
    out = np.zeros(len(nodes), dtype=complex)
    h = nodes[1] - nodes[0] if len(nodes) > 1 else 1.0
    for s, z in atoms:
        lag = nodes - s
        ok = lag >= 0
        vals = np.zeros(len(nodes))
        pos = lag > 1e-12 * max(1.0, abs(s))
        vals[pos] = values_at(lag[pos])
        at0 = ok & ~pos
        # an atom on a node meets the kernel at lag 0; for a singular kernel
        # the value there is replaced by the first cell average
        vals[at0] = cell_avg0 if singular else values_at(np.zeros(at0.sum()))
        out += z * vals
    return out


def _picard(rhs_const: complex, a0: float, fj: complex, guess: complex, nonlin, where: float) -> complex:
    v = guess
    for it in range(200):
        new = rhs_const + a0 * nonlin(v, fj)
        if it >= 20:
            new = 0.5 * (new + v)
        if abs(new - v) <= 1e-12 * max(1.0, abs(new)):
            return new
        v = new
    raise ConvergenceError(f"fixed-point iteration did not converge at t={where:g}")


def solve_fourier_laplace(kernel: Kernel, spec: FunctionalSpec, grid: Grid,
                          form: str = "phi", table: ResolventTable | None = None
                          ) -> ComplexVolterraSolution:
    """Solve for the exponent ``V`` on ``[0, spec.T]``.

    ``form="phi"``:  ``V = phi * dnu + phi * (exp(V + f) - 1)``.
    ``form="resolvent"``: ``V = R * dnu + R * (exp(V + f) - 1 - V)``, which
    needs a resolvent ``table`` on the same grid.
    """
    if abs(grid.n * grid.h - spec.T) > 1e-9 * spec.T:
        raise ValueError("the grid must end exactly at spec.T (choose h dividing T)")
    nodes = grid.nodes
    n, h = grid.n, grid.h
    fv = spec.values(spec.f, nodes)
    dv = spec.values(spec.density, nodes)

    if form == "phi":
        A, C = kernel.cell_moments(h, n)
        singular = not kernel.phi_finite_at_zero
        values_at = kernel.phi

        def nonlin(v, f):
            return np.expm1(v + f)
    elif form == "resolvent":
        if table is None:
            table = solve_resolvent(kernel, grid)
        if table.grid != grid:
            raise ValueError("resolvent table grid differs from the solve grid")
        A = np.diff(table.I_R)
        C = table.I_R[1:] - np.diff(table.I2_R) / h
        singular = not np.isfinite(table.R[0])

        def values_at(lag):
            return np.interp(lag, table.t, np.where(np.isfinite(table.R), table.R, 0.0))

        def nonlin(v, f):
            return np.expm1(v + f) - v
    else:
        raise ValueError("form must be 'phi' or 'resolvent'")

    w0, w1, c = _pi_weights(A, C)
    forcing = _atom_forcing(values_at, A[0] / h, singular, nodes, spec.atoms)
    if spec.density is not None:
        forcing = forcing + _convolve_known(w0, c, dv)

    V = np.zeros(n + 1, dtype=complex)
    G = np.zeros(n + 1, dtype=complex)
    V[0] = forcing[0]
    G[0] = nonlin(V[0], fv[0])
    for j in range(1, n + 1):
        hist = w0[j - 1] * G[0]
        if j > 1:
            hist += np.dot(c[j - 1:0:-1], G[1:j])
        V[j] = _picard(forcing[j] + hist, w1[0], fv[j], V[j - 1], nonlin, nodes[j])
        G[j] = nonlin(V[j], fv[j])
    W = np.expm1(V + fv) - V
    return ComplexVolterraSolution(grid, V, W, forcing, fv, dv, spec, form)


def char_functional(sol: ComplexVolterraSolution, table: ResolventTable, mu0: float) -> complex:
    """``E exp(Lambda * dnu(T) + f * dN(T)) = exp(H * dnu(T) + H * W(T))``."""
    spec = sol.spec
    nodes = sol.grid.nodes
    H = mu0 * (1.0 + table.I_R)
    if len(table.I_R) != len(nodes):
        raise ValueError("resolvent table and solution grids differ")
    T = nodes[-1]
    total = 0j
    for s, z in spec.atoms:
        total += z * mu0 * (1.0 + np.interp(T - s, table.t, table.I_R))
    total += trapezoid(H[::-1] * sol.density_values, nodes)
    total += trapezoid(H[::-1] * sol.W, nodes)
    return complex(np.exp(total))


# --- CIR Riccati ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CIRRiccatiSolution:
    grid: Grid
    V_star: np.ndarray
    I_V: np.ndarray
    sigma: float


def solve_cir_riccati(w: FunctionalSpec, g: Callable | None, sigma: float,
                      grid: Grid) -> CIRRiccatiSolution:
    """Solve ``V = I_w / sigma + I_{(V + g)^2} / (2 sigma)``.

    ``w`` supplies the measure (atoms and density, real part <= 0); ``g`` is
    purely imaginary.  Between atoms the ODE ``V' = w'/sigma + (V+g)^2/(2 sigma)``
    is integrated with classical RK4; atoms add jumps ``z / sigma``.
    The running integral ``I_V`` is carried as a second state.
    """
    if not (sigma > 0 and math.isfinite(sigma)):
        raise RegimeError("the CIR limit needs a finite positive dispersion sigma")
    if w.f is not None:
        raise ValueError("the CIR driver takes its second test function through g")
    nodes = grid.nodes
    gfun = g if g is not None else (lambda t: np.zeros(np.shape(t), dtype=complex))
    dens = w.density if w.density is not None else (lambda t: np.zeros(np.shape(t), dtype=complex))
    probe = np.asarray(gfun(nodes), dtype=complex) * np.ones(len(nodes))
    if np.any(np.abs(probe.real) > 1e-15):
        raise ValueError("g must be purely imaginary")
    dprobe = np.asarray(dens(nodes), dtype=complex) * np.ones(len(nodes))
    if np.any(dprobe.real > 1e-15):
        raise ValueError("the density of w must have non-positive real part")
    bound = 1e3 * (1.0 + np.max(np.abs(dprobe)) * grid.T + sum(abs(z) for _, z in w.atoms)
                   + np.max(np.abs(probe)) ** 2 * grid.T) / min(sigma, 1.0)

    def rhs(t, y):
        v = y[0]
        gv = complex(np.asarray(gfun(np.array([t])))[0])
        dv = complex(np.asarray(dens(np.array([t])))[0])
        return np.array([dv / sigma + (v + gv) ** 2 / (2 * sigma), v])

    jumps = sorted(w.atoms)
    V = np.zeros(len(nodes), dtype=complex)
    IV = np.zeros(len(nodes), dtype=complex)
    y = np.zeros(2, dtype=complex)
    k = 0
    while k < len(jumps) and jumps[k][0] <= 0:
        y[0] += jumps[k][1] / sigma
        k += 1
    V[0] = y[0]
    for j in range(1, len(nodes)):
        t, t1 = nodes[j - 1], nodes[j]
        while k < len(jumps) and jumps[k][0] <= t1 + 1e-12:
            loc, z = jumps[k]
            y = _rk4(rhs, t, loc, y)
            y[0] += z / sigma
            t = loc
            k += 1
        y = _rk4(rhs, t, t1, y)
        if not np.all(np.isfinite(y)) or abs(y[0]) > bound:
            raise BlowUpError(f"Riccati solution left its bound near t={t1:g}")
        V[j], IV[j] = y
    return CIRRiccatiSolution(grid, V, IV, float(sigma))


def _rk4(rhs, a: float, b: float, y: np.ndarray) -> np.ndarray:
    h = b - a
    if h <= 0:
        return y
    k1 = rhs(a, y)
    k2 = rhs(a + h / 2, y + h / 2 * k1)
    k3 = rhs(a + h / 2, y + h / 2 * k2)
    k4 = rhs(b, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def cir_functional(sol: CIRRiccatiSolution, mu0: float, T: float | None = None) -> complex:
    """``E exp(Lambda* * dw(T) + g * dI_Lambda*(T)) = exp(mu0 I_V(T))``."""
    iv = sol.I_V[-1] if T is None else np.interp(T, sol.grid.nodes, sol.I_V.real) + \
        1j * np.interp(T, sol.grid.nodes, sol.I_V.imag)
    return complex(np.exp(mu0 * iv))


# --- weakly critical convergence of the rescaled resolvent -------------------

@dataclass(frozen=True)
class ResolventGap:
    n: float
    sup_gap: float
    l2_gap: float
    step: float = field(default=float("nan"))


def resolvent_gap(kernel: Kernel, n: float, grid: Grid, max_step: float | None = None) -> ResolventGap:
    """Distance of ``R(n .)`` to the constant ``1/sigma`` on ``[0, grid.T]``.

    ``sup_gap = sup_t |I_R(nt)/n - t/sigma|`` and ``l2_gap`` is the L2 norm of
    ``R(n t) - 1/sigma``.  The resolvent is solved in original time with step
    ``min(n*h, max_step)``; ``max_step`` defaults to ``0.05 * kernel.time_scale``.
    """
    m = kernel.branching_ratio
    if abs(m - 1.0) > 1e-12:
        raise RegimeError(f"needs a critical kernel (m = 1), got m = {m:g}")
    sigma = kernel.dispersion_sigma()
    if not math.isfinite(sigma):
        raise RegimeError("needs a kernel with finite first moment sigma")
    if max_step is None:
        max_step = 0.05 * kernel.time_scale
    T_orig = n * grid.T
    step = min(n * grid.h, max_step)
    steps = int(math.ceil(T_orig / step - 1e-9))
    step = T_orig / steps
    table = solve_resolvent(kernel, Grid(T_orig, step))
    s = table.t
    sup_gap = float(np.max(np.abs(table.I_R / n - s / (n * sigma))))
    R = table.R
    l2 = math.sqrt(trapezoid((R - 1.0 / sigma) ** 2, s) / n)
    return ResolventGap(float(n), sup_gap, l2, step)
