"""Monte Carlo samplers.

Hawkes paths come from the cluster (branching) representation, expanded one
generation at a time for a whole block of replicas at once, or from Ogata
thinning for monotone kernels.  The module also samples the CIR diffusion
without mean reversion and the Gaussian limit processes.

Randomness: a root ``numpy.random.SeedSequence`` is spawned into one Philox
stream per block of ``BLOCK`` replicas, so a batch is reproducible from its
seed whatever the number of worker threads.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import UnsupportedError
from .kernels import Kernel, _ExpSum
from .volterra import Grid

__all__ = [
    "BLOCK",
    "DEFAULT_EVENT_CAP",
    "EventPath",
    "EventBatch",
    "CIRPath",
    "GaussianLimitPath",
    "block_rngs",
    "simulate_cluster",
    "simulate_cluster_batch",
    "simulate_thinning",
    "path_statistics",
    "batch_statistics_csv",
    "simulate_cir",
    "simulate_cir_batch",
    "simulate_limit_gaussian",
    "map_blocks",
]

BLOCK = 256
DEFAULT_EVENT_CAP = 10**7


def block_rngs(seed: int, n_blocks: int) -> list[np.random.Generator]:
    """Independent Philox generators, one per replica block."""
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


# --- event containers ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EventPath:
    """Sorted event times of one path on ``(0, T]``."""

    T: float
    events: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=float)
        if ev.size and (ev[0] <= 0 or ev[-1] > self.T or np.any(np.diff(ev) <= 0)):
            raise ValueError("events must be strictly increasing in (0, T]")
        object.__setattr__(self, "events", ev)

    def count(self, t) -> np.ndarray:
        return np.searchsorted(self.events, t, side="right")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "time"])
            for i, t in enumerate(self.events):
                wr.writerow([i, repr(float(t))])


@dataclass(frozen=True, eq=False)
class EventBatch:
    """Events of many replicas, stored flat and sorted by (replica, time)."""

    T: float
    times: np.ndarray
    replica: np.ndarray
    truncated: np.ndarray

    @property
    def n_replicas(self) -> int:
        return len(self.truncated)

    def path(self, i: int) -> EventPath:
        lo, hi = np.searchsorted(self.replica, [i, i + 1])
        return EventPath(self.T, self.times[lo:hi], bool(self.truncated[i]))

    def counts(self, t: float) -> np.ndarray:
        """``N(t)`` per replica."""
        sel = self.times <= t
        return np.bincount(self.replica[sel], minlength=self.n_replicas).astype(float)

    def compensator(self, kernel: Kernel, mu0: float, t: float) -> np.ndarray:
        """``I_Lambda(t) = mu0 t + sum_{tau <= t} int_0^{t - tau} phi`` per replica."""
        sel = self.times <= t
        w = kernel.cum_phi(t - self.times[sel])
        return mu0 * t + np.bincount(self.replica[sel], weights=w, minlength=self.n_replicas)

    def intensity(self, kernel: Kernel, mu0: float, t: float) -> np.ndarray:
        """Left limit ``Lambda(t-) = mu0 + sum_{tau < t} phi(t - tau)`` per replica."""
        sel = self.times < t
        w = kernel.support_phi(t - self.times[sel])
        return mu0 + np.bincount(self.replica[sel], weights=w, minlength=self.n_replicas)


# --- cluster representation ----------------------------------------------------

def _cluster_block(kernel: Kernel, mu0: float, T: float, n_rep: int,
                   rng: np.random.Generator, event_cap: int) -> EventBatch:
    counts = rng.poisson(mu0 * T, size=n_rep)
    rep = np.repeat(np.arange(n_rep), counts)
    t = rng.uniform(0.0, T, size=rep.size)
    total = counts.astype(np.int64)
    truncated = total > event_cap
    parts_t, parts_r = [t], [rep]
    m = kernel.branching_ratio
    gen_t, gen_r = t, rep
    while gen_t.size and m > 0:
        kids = rng.poisson(m, size=gen_t.size)
        parent_t = np.repeat(gen_t, kids)
        child_r = np.repeat(gen_r, kids)
        child_t = parent_t + kernel.sample_delay(rng, parent_t.size)
        keep = child_t <= T
        gen_t, gen_r = child_t[keep], child_r[keep]
        if gen_t.size == 0:
            break
        total += np.bincount(gen_r, minlength=n_rep)
        over = total > event_cap
        if np.any(over):
            truncated |= over
            alive = ~over[gen_r]
            gen_t, gen_r = gen_t[alive], gen_r[alive]
        parts_t.append(gen_t)
        parts_r.append(gen_r)
    times = np.concatenate(parts_t)
    reps = np.concatenate(parts_r)
    # immigrants of a truncated replica may already exceed the cap
    if np.any(truncated):
        keep = np.ones(times.size, dtype=bool)
        for i in np.flatnonzero(truncated):
            idx = np.flatnonzero(reps == i)
            keep[idx[event_cap:]] = False
        times, reps = times[keep], reps[keep]
    order = np.lexsort((times, reps))
    times, reps = times[order], reps[order]
    # strictly positive, strictly increasing per replica (ties have probability 0)
    return EventBatch(T, times, reps, truncated)


def map_blocks(fn: Callable[[int, int, np.random.Generator], object], replicas: int,
               seed: int, threads: int = 1) -> list:
    """Apply ``fn(block_index, block_size, rng)`` to each replica block in order."""
    n_blocks = max(1, math.ceil(replicas / BLOCK))
    sizes = [min(BLOCK, replicas - b * BLOCK) for b in range(n_blocks)]
    rngs = block_rngs(seed, n_blocks)
    args = list(zip(range(n_blocks), sizes, rngs))
    if threads <= 1 or n_blocks == 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda a: fn(*a), args))


def simulate_cluster_batch(kernel: Kernel, mu0: float, T: float, replicas: int, seed: int,
                           reducer: Callable[[EventBatch], np.ndarray] | None = None,
                           event_cap: int = DEFAULT_EVENT_CAP, threads: int = 1):
    """Simulate ``replicas`` independent paths and reduce each block.

    With ``reducer=None`` the list of per-block ``EventBatch`` objects is
    returned; otherwise the reducer outputs are concatenated along axis 0,
    in replica order.
    """
    _check_sim_args(mu0, T)

    def run(b, size, rng):
        batch = _cluster_block(kernel, mu0, T, size, rng, event_cap)
        return batch if reducer is None else reducer(batch)

    out = map_blocks(run, replicas, seed, threads)
    return out if reducer is None else np.concatenate(out, axis=0)


def simulate_cluster(kernel: Kernel, mu0: float, T: float, rng: np.random.Generator,
                     event_cap: int = DEFAULT_EVENT_CAP) -> EventPath:
    """One path from the cluster representation."""
    _check_sim_args(mu0, T)
    if event_cap <= 0:
        raise ValueError("event_cap must be positive")
    return _cluster_block(kernel, mu0, T, 1, rng, event_cap).path(0)


def _check_sim_args(mu0, T):
    if not (mu0 > 0 and T > 0):
        raise ValueError("mu0 and T must be positive")


# --- thinning ------------------------------------------------------------------

def simulate_thinning(kernel: Kernel, mu0: float, T: float, rng: np.random.Generator) -> EventPath:
    """Ogata thinning; requires a non-increasing kernel finite at 0."""
    _check_sim_args(mu0, T)
    if not (kernel.nonincreasing and kernel.phi_finite_at_zero):
        raise UnsupportedError(
            f"thinning needs a non-increasing kernel bounded at 0; {type(kernel).__name__} is not"
        )
    if isinstance(kernel, _ExpSum):
        return _thinning_expsum(kernel, mu0, T, rng)
    events: list[float] = []
    t = 0.0
    while True:
        past = np.asarray(events)
        bound = mu0 + float(np.sum(kernel.support_phi(t - past))) if events else mu0
        t += rng.exponential(1.0 / bound)
        if t > T:
            break
        lam = mu0 + float(np.sum(kernel.support_phi(t - past))) if events else mu0
        if rng.random() * bound <= lam:
            events.append(t)
    return EventPath(T, np.array(events))


def _thinning_expsum(kernel: _ExpSum, mu0: float, T: float, rng) -> EventPath:
    w, b = kernel.components()
    excite = np.zeros_like(b)  # per-component excitation just after the last update
    events = []
    t = 0.0
    while True:
        bound = mu0 + excite.sum()
        dt = rng.exponential(1.0 / bound)
        t += dt
        if t > T:
            break
        excite = excite * np.exp(-b * dt)
        if rng.random() * bound <= mu0 + excite.sum():
            events.append(t)
            excite = excite + w * b
    return EventPath(T, np.array(events))


# --- path statistics ---------------------------------------------------------------

def path_statistics(p: EventPath, kernel: Kernel, mu0: float, t: float):
    """``(N(t), I_Lambda(t), N(t) - I_Lambda(t))`` for one path."""
    if t > p.T + 1e-12:
        raise ValueError("t beyond the path horizon")
    ev = p.events[p.events <= t]
    n = float(ev.size)
    comp = mu0 * t + float(np.sum(kernel.cum_phi(t - ev))) if ev.size else mu0 * t
    return n, comp, n - comp


def batch_statistics_csv(batches: Iterable[EventBatch], kernel: Kernel, mu0: float,
                         times: Iterable[float], path: str | Path) -> None:
    """Write ``replica,t,N,I_Lambda,Ntilde`` rows."""
    times = list(times)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["replica", "t", "N", "I_Lambda", "Ntilde"])
        offset = 0
        for batch in batches:
            cols = [(t, batch.counts(t), batch.compensator(kernel, mu0, t)) for t in times]
            for i in range(batch.n_replicas):
                for t, n, c in cols:
                    wr.writerow([offset + i, repr(float(t)), int(n[i]), repr(float(c[i])),
                                 repr(float(n[i] - c[i]))])
            offset += batch.n_replicas


# --- CIR diffusion ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CIRPath:
    grid: Grid
    values: np.ndarray


def _cir_euler(mu0, sigma, T, steps, rng, replicas, keep_path):
    if not (sigma > 0 and mu0 > 0 and T > 0 and steps > 0):
        raise ValueError("mu0, sigma, T and steps must be positive")
    h = T / steps
    x = np.zeros(replicas)
    integral = np.zeros(replicas)
    path = [x.copy()] if keep_path else None
    drift = mu0 / sigma * h
    vol = math.sqrt(h) / sigma
    for _ in range(steps):
        xp = np.maximum(x, 0.0)
        new = x + drift + vol * np.sqrt(xp) * rng.standard_normal(replicas)
        integral += 0.5 * h * (xp + np.maximum(new, 0.0))
        x = new
        if keep_path:
            path.append(np.maximum(x, 0.0))
    return np.maximum(x, 0.0), integral, path


def simulate_cir(mu0: float, sigma: float, T: float, steps: int, rng: np.random.Generator) -> CIRPath:
    """Full-truncation Euler path of ``d L = (mu0/sigma) dt + (1/sigma) sqrt(L) dB``."""
    _, _, path = _cir_euler(mu0, sigma, T, steps, rng, 1, True)
    return CIRPath(Grid(T, T / steps), np.array([p[0] for p in path]))


def simulate_cir_batch(mu0: float, sigma: float, T: float, steps: int, replicas: int,
                       seed: int, threads: int = 1):
    """Terminal values and time integrals (trapezoid) of many CIR paths."""

    def run(b, size, rng):
        term, integral, _ = _cir_euler(mu0, sigma, T, steps, rng, size, False)
        return np.stack([term, integral], axis=1)

    out = np.concatenate(map_blocks(run, replicas, seed, threads), axis=0)
    return out[:, 0], out[:, 1]


# --- Gaussian limits ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianLimitPath:
    """Replicas (rows) of a Gaussian limit process on ``grid.nodes``."""

    grid: Grid
    values: np.ndarray


def simulate_limit_gaussian(kind: dict, mu0: float, grid: Grid, rng: np.random.Generator,
                            replicas: int = 1) -> GaussianLimitPath:
    """Sample a limit process from one sequence of Brownian increments per replica.

    ``kind`` is ``{"kind": "subcritical", "m": m, "psi_star": c}`` for
    ``sqrt(mu0 (1-m)^-3) B(t) - mu0 c (1-m)^-2 sqrt(t)``, or
    ``{"kind": "strongly_critical", "alpha": a}`` for
    ``sqrt(mu0 (a+1)) int_0^t (t-s)^a s^(a/2) dB(s)`` (left-point sums).
    """
    nodes = grid.nodes
    h = grid.h
    dB = rng.standard_normal((replicas, grid.n)) * math.sqrt(h)
    name = kind.get("kind")
    if name == "subcritical":
        m = float(kind["m"])
        c = float(kind.get("psi_star", 0.0))
        if not 0 <= m < 1 or c < 0:
            raise ValueError("subcritical limit needs 0 <= m < 1 and psi_star >= 0")
        B = np.concatenate([np.zeros((replicas, 1)), np.cumsum(dB, axis=1)], axis=1)
        vals = math.sqrt(mu0 / (1 - m) ** 3) * B - mu0 * c / (1 - m) ** 2 * np.sqrt(nodes)
    elif name == "strongly_critical":
        a = float(kind["alpha"])
        if not 0 <= a <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        s = nodes[:-1]
        lag = nodes[None, :] - s[:, None]
        weights = np.where(lag > 0, np.maximum(lag, 0.0) ** a, 0.0) * (s ** (a / 2))[:, None]
        vals = math.sqrt(mu0 * (a + 1)) * (dB @ weights)
    else:
        raise ValueError(f"unknown limit kind {name!r}")
    return GaussianLimitPath(grid, vals)
