"""Regime classification, rescaling and limit-theorem diagnostics.

Every report compares a Monte Carlo (or deterministic) statistic with its
limit target and returns ``ReportRow`` records; ``write_report`` stores them
as CSV with a schema header.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import IndeterminateError, RegimeError
from .kernels import (
    Exponential,
    Kernel,
    MittagLeffler,
    RVProfile,
    Tabulated,
    _ExpSum,
)
from .metrics import EmpiricalSample, wasserstein1
from .simulate import EventBatch, EventPath, simulate_cir_batch, simulate_cluster_batch
from .volterra import Grid, ResolventTable, mean_count, solve_resolvent

__all__ = [
    "RegimeLabel",
    "RescaledPath",
    "ScalingSpec",
    "ReportRow",
    "classify_regime",
    "rescale",
    "flln_report",
    "mean_flln_deviation",
    "fclt_sample",
    "fclt_variance_target",
    "exact_count_variance",
    "weakly_critical_report",
    "second_order_fclt_sample",
    "estimate_rv_index",
    "write_report",
    "trend_ok",
    "SCHEMA",
]

SCHEMA = 1
CRITICAL_TOL = 1e-12
TREND_SLACK = 0.10


# --- regimes --------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeLabel:
    """Regime of a kernel.

    ``kind`` is ``subcritical``, ``weakly_critical`` or ``strongly_critical``.
    Subcritical labels carry ``psi_star`` (limit of ``Psi_1(t)/sqrt(t)``; 0,
    finite or ``inf``) and, when it is infinite, the tail index ``alpha`` of
    ``Phi``.  Strongly critical labels carry the index ``alpha``.
    """

    kind: str
    m: float
    sigma: float
    psi_star: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("subcritical", "weakly_critical", "strongly_critical"):
            raise ValueError(f"unknown regime {self.kind!r}")
        expected = ("subcritical" if self.m < 1 - CRITICAL_TOL else
                    "weakly_critical" if math.isfinite(self.sigma) else "strongly_critical")
        if self.kind != expected:
            raise ValueError(f"regime {self.kind} inconsistent with m={self.m}, sigma={self.sigma}")


def _tail_index_from_table(k: Tabulated) -> float:
    t_end = k.t[-1]
    probes = np.geomspace(t_end / 100, t_end / 2, 8)
    vals = k.big_phi(probes)
    if np.any(vals <= 0):
        raise IndeterminateError("the tabulated tail vanishes before the last decade")
    return float(-np.polyfit(np.log(probes), np.log(vals), 1)[0])


def classify_regime(k: Kernel) -> RegimeLabel:
    """Classify by ``m`` and ``sigma``; supercritical kernels are rejected."""
    m = k.branching_ratio
    if m > 1 + CRITICAL_TOL:
        raise RegimeError(f"m = {m:g} > 1: supercritical processes are not covered")
    sigma = k.dispersion_sigma()
    if m < 1 - CRITICAL_TOL:
        if math.isfinite(sigma):
            return RegimeLabel("subcritical", m, sigma, psi_star=0.0)
        alpha = _tail_index_from_table(k) if isinstance(k, Tabulated) else None
        return RegimeLabel("subcritical", m, sigma, psi_star=math.inf, alpha=alpha)
    if math.isfinite(sigma):
        return RegimeLabel("weakly_critical", 1.0, sigma)
    alpha = getattr(k, "alpha", None)
    if alpha is None and hasattr(k, "alpha1"):
        alpha = min(k.alpha1, k.alpha2)
    if alpha is None and isinstance(k, Tabulated):
        alpha = _tail_index_from_table(k)
    return RegimeLabel("strongly_critical", 1.0, sigma, alpha=alpha)


# --- rescaling --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RescaledPath:
    """Rescaled coordinates of one path on a grid of rescaled times."""

    n: float
    mode: str
    t: np.ndarray
    values: dict


def _one_path_batch(p: EventPath) -> EventBatch:
    return EventBatch(p.T, p.events, np.zeros(p.events.size, dtype=int), np.array([p.truncated]))


def rescale(p: EventPath, k: Kernel, table: ResolventTable | None, n: float, label: RegimeLabel,
            grid: Grid, *, mu0: float) -> RescaledPath:
    """Rescale a path by ``n`` in the coordinates of its regime.

    subcritical: ``N(nt)/n``; weakly critical: ``Lambda(nt)/n``,
    ``I_Lambda(nt)/n**2``, ``N(nt)/n**2``, ``(N - I_Lambda)(nt)/n``; strongly
    critical: ``N(nt)/I2_R(n)`` and ``(N - I_Lambda)(nt)/sqrt(I2_R(n))``.
    """
    if p.T < n * grid.T * (1 - 1e-12):
        raise ValueError(f"path horizon {p.T:g} shorter than n*T = {n * grid.T:g}")
    b = _one_path_batch(p)
    t = grid.nodes
    N = np.array([b.counts(n * s)[0] for s in t])
    comp = np.array([b.compensator(k, mu0, n * s)[0] for s in t])
    if label.kind == "subcritical":
        vals = {"N": N / n}
    elif label.kind == "weakly_critical":
        lam = np.array([b.intensity(k, mu0, n * s)[0] for s in t])
        vals = {"Lambda": lam / n, "I_Lambda": comp / n**2, "N": N / n**2, "Ntilde": (N - comp) / n}
    else:
        if table is None or table.t[-1] < n * (1 - 1e-12):
            raise ValueError("strongly critical rescaling needs a resolvent table reaching n")
        norm = float(table.at("I2_R", n))
        vals = {"N": N / norm, "Ntilde": (N - comp) / math.sqrt(norm)}
    return RescaledPath(float(n), label.kind, t, vals)


# --- report rows --------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    n: float
    t: float
    statistic: str
    estimate: float
    target: float
    stderr: float
    passed: bool | None = None

    def as_list(self):
        flag = "" if self.passed is None else str(bool(self.passed)).lower()
        return [_fmt(self.n), _fmt(self.t), self.statistic, _fmt(self.estimate),
                _fmt(self.target), _fmt(self.stderr), flag]


def _fmt(x) -> str:
    return "nan" if x is None else repr(float(x))


def write_report(rows: Iterable[ReportRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "t", "statistic", "estimate", "target", "stderr", "pass"])
        for r in rows:
            wr.writerow(r.as_list())


def trend_ok(values: Sequence[float], slack: float = TREND_SLACK) -> list[bool]:
    """Non-increasing check with relative slack, element-wise against the predecessor."""
    out = [True]
    for prev, cur in zip(values[:-1], values[1:]):
        out.append(cur <= prev * (1.0 + slack) + 1e-15)
    return out


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


def _var_stderr(x: np.ndarray) -> tuple[float, float]:
    v = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt(max(m4 - v**2, 0.0) / x.size)


# --- FLLN ------------------------------------------------------------------------------

def _limit_curve(k: Kernel, mu0: float, label: RegimeLabel) -> Callable[[np.ndarray], np.ndarray]:
    if label.kind == "subcritical":
        return lambda t: mu0 * t / (1.0 - label.m)
    if label.kind == "strongly_critical":
        if label.alpha is None:
            raise RegimeError("the strongly critical limit needs the regular-variation index")
        return lambda t: mu0 * np.asarray(t) ** (label.alpha + 1.0)
    raise RegimeError(
        "weakly critical processes have no deterministic law-of-large-numbers limit; "
        "their rescaled counts converge to a random CIR functional"
    )


def _sup_step_deviation(times: np.ndarray, replica: np.ndarray, n_rep: int, scale: float,
                        norm: float, T: float, curve) -> np.ndarray:
    """``sup_{t<=T} |N(nt)/norm - curve(t)|`` per replica for step paths.

    The curve is non-decreasing, so the supremum is attained next to a jump
    (left or right limit) or at ``T``.
    """
    s = times / scale
    inside = s <= T
    s, r = s[inside], replica[inside]
    # rank of each event within its replica (events are sorted by replica, time)
    starts = np.searchsorted(r, np.arange(n_rep))
    rank = np.arange(r.size) - starts[r] + 1
    L = curve(s)
    dev = np.maximum(np.abs(rank / norm - L), np.abs((rank - 1) / norm - L))
    out = np.zeros(n_rep)
    np.maximum.at(out, r, dev)
    last = np.bincount(r, minlength=n_rep) / norm
    return np.maximum(out, np.abs(last - curve(np.array(T))))


def flln_report(k: Kernel, mu0: float, ns: Sequence[float], replicas: int, T: float,
                seed: int, threads: int = 1, h: float | None = None) -> list[ReportRow]:
    """Monte Carlo ``E sup_{t<=T} |rescaled count - limit curve|`` per scale ``n``."""
    label = classify_regime(k)
    curve = _limit_curve(k, mu0, label)
    rows = []
    for i, n in enumerate(ns):
        norm = float(n) if label.kind == "subcritical" else _i2r_at(k, n, h)

        def reducer(batch, n=n, norm=norm):
            return _sup_step_deviation(batch.times, batch.replica, batch.n_replicas, n, norm, T, curve)

        dev = simulate_cluster_batch(k, mu0, n * T, replicas, seed + i, reducer, threads=threads)
        est, se = _mean_stderr(dev)
        rows.append(ReportRow(n, T, "E sup|rescaled N - limit|", est, 0.0, se))
    flags = trend_ok([r.estimate for r in rows])
    return [ReportRow(r.n, r.t, r.statistic, r.estimate, r.target, r.stderr, f) for r, f in zip(rows, flags)]


def _i2r_at(k: Kernel, n: float, h: float | None = None) -> float:
    if isinstance(k, MittagLeffler):
        return float(k.resolvent_double_integral(n))
    step = h if h is not None else min(1e-2, n * 1e-3)
    return float(solve_resolvent(k, Grid(float(n), step)).I2_R[-1])


def mean_flln_deviation(k: Kernel, mu0: float, n: float, T: float = 1.0, h: float | None = None,
                        points: int = 2001) -> float:
    """Deterministic ``sup_{t<=T} |E N(nt)/I2_R(n) - mu0 t^(alpha+1)|`` via the mean formula."""
    label = classify_regime(k)
    if label.kind != "strongly_critical":
        raise RegimeError("the mean-level check applies to strongly critical kernels")
    step = h if h is not None else n * T / 10_000
    table = solve_resolvent(k, Grid(n * T, step))
    norm = float(table.at("I2_R", n))
    t = np.linspace(0.0, T, points)
    EN = mean_count(table, mu0, n * t)
    return float(np.max(np.abs(EN / norm - mu0 * t ** (label.alpha + 1.0))))


# --- FCLT ---------------------------------------------------------------------------------

def exact_count_variance(table: ResolventTable, mu0: float, t: float) -> float:
    """``Var N(t) = mu0 int_0^t (1 + I_R(u))^2 (1 + I_R(t - u)) du`` (cluster second moment)."""
    u = table.t[table.t <= t + 1e-12]
    a = 1.0 + table.I_R[: u.size]
    b = 1.0 + np.interp(t - u, table.t, table.I_R)
    return float(mu0 * integrate.trapezoid(a**2 * b, u))


def _fclt_scaling(k: Kernel, label: RegimeLabel, n: float) -> float:
    if label.kind == "subcritical":
        return n ** -0.5
    if label.kind == "strongly_critical":
        return n * _i2r_at(k, n) ** -1.5
    raise RegimeError(
        "the weakly critical regime has a CIR limit rather than a Gaussian one; "
        "use the weakly critical report"
    )


def fclt_sample(k: Kernel, mu0: float, n: float, t: float, replicas: int, seed: int,
                threads: int = 1, h: float | None = None) -> EmpiricalSample:
    """Replicas of the normalised centred count at rescaled time ``t``.

    subcritical: ``n^(-1/2) (N(nt) - E N(nt))``; strongly critical:
    ``n I2_R(n)^(-3/2) (N(nt) - E N(nt))``.  The mean is the deterministic
    value from the resolvent, never a Monte Carlo average.
    """
    label = classify_regime(k)
    c = _fclt_scaling(k, label, n)
    if t == 0:
        return EmpiricalSample(np.zeros(replicas))
    horizon = n * t
    if isinstance(k, MittagLeffler):
        mean = mu0 * (horizon + float(k.resolvent_double_integral(horizon)))
    elif isinstance(k, _ExpSum):
        mean = mu0 * (horizon + _expsum_i2r(k, horizon))
    else:
        step = h if h is not None else horizon / 20_000
        mean = float(mean_count(solve_resolvent(k, Grid(horizon, step)), mu0, horizon))
    counts = simulate_cluster_batch(k, mu0, horizon, replicas, seed,
                                    lambda b: b.counts(horizon), threads=threads)
    return EmpiricalSample(c * (counts - mean))


def _expsum_i2r(k: _ExpSum, t: float) -> float:
    # integrate the closed-form I_R with a fine Gauss rule
    val, _ = integrate.quad(lambda s: float(k.resolvent_integral_closed_form(s)), 0, t, limit=200)
    return val


def fclt_variance_target(label: RegimeLabel, mu0: float, t: float = 1.0) -> float:
    """Limit variance at time ``t`` as stated for each regime.

    subcritical ``mu0 (1-m)^-3 t``; strongly critical
    ``mu0 (alpha+1) int_0^t (t-s)^(2 alpha) s^alpha ds``.
    """
    if label.kind == "subcritical":
        return mu0 * t / (1 - label.m) ** 3
    if label.kind == "strongly_critical":
        a = label.alpha
        return mu0 * (a + 1) * t ** (3 * a + 1) * special.beta(2 * a + 1, a + 1)
    raise RegimeError("no Gaussian limit in the weakly critical regime")


def strongly_critical_variance_asymptotic(alpha: float, mu0: float, t: float = 1.0) -> float:
    """Large-n limit of ``Var[n I2_R(n)^(-3/2) N(nt)]`` from the cluster second moment.

    Uses ``I_R(t) ~ c t^alpha`` so that ``I2_R(n) ~ c n^(alpha+1)/(alpha+1)``;
    this gives ``mu0 (alpha+1)^3 B(2 alpha+1, alpha+1) t^(3 alpha+1)``.
    """
    return mu0 * (alpha + 1) ** 3 * t ** (3 * alpha + 1) * special.beta(2 * alpha + 1, alpha + 1)


# --- weakly critical -----------------------------------------------------------------------

def weakly_critical_report(k: Kernel, mu0: float, ns: Sequence[float], replicas: int, T: float,
                           seed: int, threads: int = 1, window: float = 0.01,
                           cir_steps_per_unit: int = 10_000,
                           mean_tol: float = 0.10, var_tol: float = 0.15) -> list[ReportRow]:
    """Moments of ``Lambda^(n)(T)``, ``N^(n)(T)`` against the CIR limit, and the
    Wasserstein distance between ``N^(n)(T)`` and ``int_0^T Lambda*``.

    ``Lambda^(n)(T)`` is read off the compensator: ``(I_Lambda(nT) -
    I_Lambda(n(T - window))) / (n^2 window)``.
    """
    label = classify_regime(k)
    if label.kind != "weakly_critical":
        raise RegimeError(
            f"{label.kind} kernel: the CIR approximation requires m = 1 and a finite first moment"
        )
    sigma = label.sigma
    steps = max(1, int(round(cir_steps_per_unit * T)))
    _, cir_int = simulate_cir_batch(mu0, sigma, T, steps, replicas, seed + 10_000, threads)
    cir_sample = EmpiricalSample(cir_int)
    targets = {
        "E Lambda^(n)(T)": mu0 * T / sigma,
        "Var Lambda^(n)(T)": mu0 * T**2 / (2 * sigma**3),
        "E N^(n)(T)": mu0 * T**2 / (2 * sigma),
        "Var N^(n)(T)": mu0 * T**4 / (12 * sigma**3),
    }
    rows: list[ReportRow] = []
    w1_rows: list[ReportRow] = []
    for i, n in enumerate(ns):
        def reducer(b, n=n):
            hi = b.compensator(k, mu0, n * T)
            lo = b.compensator(k, mu0, n * (T - window))
            return np.stack([(hi - lo) / (n**2 * window), b.counts(n * T) / n**2], axis=1)

        out = simulate_cluster_batch(k, mu0, n * T, replicas, seed + i, reducer, threads=threads)
        lam, cnt = out[:, 0], out[:, 1]
        for name, x, kind in (("Lambda^(n)(T)", lam, None), ("N^(n)(T)", cnt, None)):
            m_est, m_se = _mean_stderr(x)
            v_est, v_se = _var_stderr(x)
            mt, vt = targets["E " + name], targets["Var " + name]
            rows.append(ReportRow(n, T, "E " + name, m_est, mt, m_se, abs(m_est - mt) <= mean_tol * mt))
            rows.append(ReportRow(n, T, "Var " + name, v_est, vt, v_se, abs(v_est - vt) <= var_tol * vt))
        w1_rows.append(ReportRow(n, T, "W1(N^(n)(T), int Lambda*)", wasserstein1(cnt, cir_sample), 0.0,
                                 float("nan")))
    flags = trend_ok([r.estimate for r in w1_rows])
    rows += [ReportRow(r.n, r.t, r.statistic, r.estimate, r.target, r.stderr, f)
             for r, f in zip(w1_rows, flags)]
    return rows


# --- second-order FCLT -----------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingSpec:
    """Normalisation of the second-order limit theorem.

    ``S_n(t) = scale * gamma(n) * (N(nt)/I2_R(n) - mu0 t^(alpha+1))`` converges to
    ``scale * [mu0 (g1 t + g2 t^(alpha+1) int_1^t u^(rho-1) du) + g3 G(t)]`` with
    ``G(t) = sqrt(mu0 (alpha+1)) int_0^t (t-s)^alpha s^(alpha/2) dB``.
    ``scale`` only rescales the output (it is ``beta/Gamma(alpha+2)`` for
    the Mittag-Leffler normalisation by ``n^(alpha+1)``).
    """

    alpha: float
    gamma: Callable[[float], float]
    gamma1: float
    gamma2: float
    gamma3: float
    rho: float = -math.inf
    A: Callable[[float], float] | None = None
    scale: float = 1.0

    def __post_init__(self):
        for g in (self.gamma1, self.gamma2, self.gamma3):
            if not math.isfinite(g):
                raise ValueError("limit coefficients must be finite")
        if self.gamma1 == 0 and self.gamma2 == 0 and self.gamma3 == 0:
            raise ValueError("at least one limit coefficient must be non-zero")

    @classmethod
    def mittag_leffler(cls, alpha: float, beta: float) -> "ScalingSpec":
        e = min((1 - alpha) / 2, alpha)
        c = beta / math.gamma(alpha + 2)
        g1 = 1.0 / c if alpha <= 1 / 3 else 0.0
        g3 = math.sqrt(c) if alpha >= 1 / 3 else 0.0
        return cls(alpha, lambda n: n**e, g1, 0.0, g3, -math.inf, None, c)

    def limit_mean(self, mu0: float, t: float) -> float:
        drift = self.gamma1 * t
        if self.gamma2 != 0.0:
            inner = math.log(t) if self.rho == 0 else (t**self.rho - 1) / self.rho
            drift += self.gamma2 * t ** (self.alpha + 1) * inner
        return self.scale * mu0 * drift

    def limit_variance(self, mu0: float, t: float) -> float:
        """Variance of the Gaussian part with the stated ``G``."""
        a = self.alpha
        var_g = mu0 * (a + 1) * t ** (3 * a + 1) * special.beta(2 * a + 1, a + 1)
        return (self.scale * self.gamma3) ** 2 * var_g


def second_order_fclt_sample(k: Kernel, mu0: float, spec: ScalingSpec | None, n: float, t: float,
                             replicas: int, seed: int, threads: int = 1) -> EmpiricalSample:
    """Replicas of ``scale * gamma(n) (N(nt)/I2_R(n) - mu0 t^(alpha+1))``."""
    if spec is None:
        raise ValueError("a ScalingSpec is required for the second-order statistic")
    label = classify_regime(k)
    if label.kind != "strongly_critical":
        raise RegimeError("second-order fluctuations are defined for strongly critical kernels")
    if t == 0:
        return EmpiricalSample(np.zeros(replicas))
    norm = _i2r_at(k, n)
    counts = simulate_cluster_batch(k, mu0, n * t, replicas, seed,
                                    lambda b: b.counts(n * t), threads=threads)
    vals = spec.scale * spec.gamma(n) * (counts / norm - mu0 * t ** (spec.alpha + 1))
    return EmpiricalSample(vals)


# --- regular variation --------------------------------------------------------------------------

def estimate_rv_index(F: Callable[[np.ndarray], np.ndarray], probes: Sequence[float]) -> RVProfile:
    """Log-log least-squares slope of ``F`` over the probe scales.

    The second-order index is ``-inf`` when the fit is exact to rounding;
    otherwise it is estimated from the decay of successive local slopes.
    """
    x = np.asarray(probes, dtype=float)
    if x.size < 2 or np.any(x <= 0):
        raise ValueError("need at least two positive probe scales")
    y = np.asarray(F(x), dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("F must be positive and finite at the probes")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    rho = -math.inf
    if x.size >= 4 and np.max(np.abs(resid)) > 1e-6:
        local = np.diff(ly) / np.diff(lx)
        d = np.abs(np.diff(local))
        mid = 0.5 * (lx[1:-1] + lx[2:])
        ok = d > 0
        if ok.sum() >= 2:
            rho = min(0.0, float(np.polyfit(mid[ok], np.log(d[ok]), 1)[0]))
    return RVProfile(float(slope), rho, None)
