"""Command line entry point: ``hawkes-flt run|validate <config.json>`` and ``kernels list``."""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import BlowUpError, ConvergenceError, DomainError, IndeterminateError, RegimeError, StepSizeError
from .kernels import KERNEL_FAMILIES, Kernel, MittagLeffler, _ExpSum, kernel_from_dict
from .limits import (
    ReportRow,
    classify_regime,
    fclt_sample,
    fclt_variance_target,
    flln_report,
    mean_flln_deviation,
    trend_ok,
    weakly_critical_report,
    write_report,
)
from .simulate import simulate_cluster_batch
from .volterra import FunctionalSpec, Grid, char_functional, resolvent_gap, solve_fourier_laplace, solve_resolvent

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_REGIME = 0, 2, 3, 4

EXPERIMENTS = ("resolvent", "functional", "flln", "fclt", "weakly-critical", "strongly-critical", "rates")

# regimes each experiment accepts
_ALLOWED = {
    "resolvent": {"subcritical", "weakly_critical", "strongly_critical"},
    "functional": {"subcritical", "weakly_critical", "strongly_critical"},
    "flln": {"subcritical", "strongly_critical"},
    "fclt": {"subcritical", "strongly_critical"},
    "weakly-critical": {"weakly_critical"},
    "strongly-critical": {"strongly_critical"},
    "rates": {"weakly_critical"},
}

_WHY = {
    "flln": "a weakly critical process has a random (CIR) limit, not a deterministic one",
    "fclt": "a weakly critical process has a CIR limit rather than a Gaussian one",
    "weakly-critical": "the CIR approximation needs m = 1 and a finite dispersion sigma",
    "strongly-critical": "the strongly critical limits need m = 1 and an infinite dispersion sigma",
    "rates": "the rate of convergence to the CIR limit is defined only for m = 1 with finite sigma",
}

_REQUIRED = {
    "resolvent": ("h",),
    "functional": ("h", "u", "replicas"),
    "flln": ("ns", "replicas"),
    "fclt": ("ns", "replicas"),
    "weakly-critical": ("ns", "replicas"),
    "strongly-critical": ("ns", "h"),
    "rates": ("ns", "h", "replicas"),
}

_KNOWN = {"experiment", "kernel", "mu0", "T", "h", "ns", "replicas", "seed", "u", "times", "out"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    kernel: dict
    mu0: float
    T: float
    seed: int
    h: float | None = None
    ns: tuple[float, ...] = ()
    replicas: int | None = None
    u: float | None = None
    times: tuple[float, ...] = ()
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            experiment=d["experiment"], kernel=dict(d["kernel"]), mu0=float(d["mu0"]), T=float(d["T"]),
            seed=int(d["seed"]), h=None if d.get("h") is None else float(d["h"]),
            ns=tuple(float(n) for n in d.get("ns", ())),
            replicas=None if d.get("replicas") is None else int(d["replicas"]),
            u=None if d.get("u") is None else float(d["u"]),
            times=tuple(float(t) for t in d.get("times", ())), out=d.get("out"),
        )


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) and x > 0


def validate(config: dict, base_dir: Path | None = None) -> list[str]:
    """List every problem with a raw configuration dictionary (empty when valid)."""
    diags: list[str] = []
    if not isinstance(config, dict):
        return ["config: top level must be a JSON object"]
    for key in sorted(set(config) - _KNOWN):
        diags.append(f"{key}: unknown field")
    exp = config.get("experiment")
    if exp is None:
        diags.append("experiment: missing")
    elif exp not in EXPERIMENTS:
        diags.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
    for key in ("mu0", "T"):
        if key not in config:
            diags.append(f"{key}: missing")
        elif not _positive(config[key]):
            diags.append(f"{key}: must be a positive number")
    if "seed" not in config:
        diags.append("seed: missing")
    elif not isinstance(config["seed"], int) or isinstance(config["seed"], bool) or config["seed"] < 0:
        diags.append("seed: must be a non-negative integer")
    if exp in _REQUIRED:
        for key in _REQUIRED[exp]:
            if key not in config:
                diags.append(f"{key}: missing (required by experiment {exp})")
    if "h" in config:
        if not _positive(config["h"]):
            diags.append("h: must be a positive number")
        elif _positive(config.get("T")) and config["h"] > config["T"]:
            diags.append("h: step exceeds horizon")
    if "ns" in config:
        ns = config["ns"]
        if not isinstance(ns, list) or not ns or not all(_positive(n) for n in ns):
            diags.append("ns: must be a non-empty list of positive scales")
    if "replicas" in config:
        r = config["replicas"]
        if not isinstance(r, int) or isinstance(r, bool) or r < 2:
            diags.append("replicas: must be an integer >= 2")
    if "u" in config and not (isinstance(config["u"], (int, float)) and math.isfinite(config["u"])):
        diags.append("u: must be a finite number")
    if "times" in config:
        ts = config["times"]
        if not isinstance(ts, list) or not all(isinstance(t, (int, float)) and t >= 0 for t in ts):
            diags.append("times: must be a list of non-negative numbers")
    kernel = None
    if "kernel" not in config:
        diags.append("kernel: missing")
    else:
        try:
            kernel = kernel_from_dict(config["kernel"], base_dir)
        except (ValueError, TypeError, OSError) as exc:
            diags.append(f"kernel: {exc}")
    if kernel is not None and exp in _ALLOWED:
        try:
            label = classify_regime(kernel)
            if label.kind not in _ALLOWED[exp]:
                diags.append(f"experiment: {label.kind} kernel is incompatible with {exp}; {_WHY[exp]}")
        except RegimeError as exc:
            diags.append(f"kernel: {exc}")
        except IndeterminateError as exc:
            diags.append(f"kernel: regime indeterminate ({exc})")
    return diags


# --- experiments ------------------------------------------------------------------

def _closed_forms(k: Kernel):
    if isinstance(k, MittagLeffler):
        return k.resolvent_integral, k.resolvent_double_integral
    if isinstance(k, _ExpSum):
        return k.resolvent_integral_closed_form, None
    return None, None


def _exp_resolvent(cfg, k, threads):
    grid = Grid(cfg.T, cfg.h)
    table = solve_resolvent(k, grid, cfg.mu0)
    times = cfg.times or tuple(np.linspace(cfg.T / 10, cfg.T, 10))
    ir_exact, i2_exact = _closed_forms(k)
    rows = []
    for t in times:
        for name, exact in (("I_R", ir_exact), ("I2_R", i2_exact)):
            est = float(table.at(name, t))
            tgt = float(exact(t)) if exact is not None else math.nan
            ok = None if exact is None else abs(est - tgt) <= 1e-3 * max(abs(tgt), 1e-12)
            rows.append(ReportRow(1.0, t, name, est, tgt, 0.0, ok))
    return rows


def _exp_functional(cfg, k, threads):
    spec = FunctionalSpec.finite_dimensional(cfg.T, [cfg.T], [0.0], [1j * cfg.u])
    grid = Grid(cfg.T, cfg.h)
    table = solve_resolvent(k, grid, cfg.mu0)
    val = char_functional(solve_fourier_laplace(k, spec, grid, "phi", table), table, cfg.mu0)
    counts = simulate_cluster_batch(k, cfg.mu0, cfg.T, cfg.replicas, cfg.seed,
                                    lambda b: b.counts(cfg.T), threads=threads)
    z = np.exp(1j * cfg.u * counts)
    rows = []
    for part, f in (("Re", np.real), ("Im", np.imag)):
        x = f(z)
        se = float(x.std(ddof=1) / math.sqrt(x.size))
        est = float(f(val))
        rows.append(ReportRow(1.0, cfg.T, f"{part} E exp(iuN(T))", est, float(x.mean()), se,
                              abs(est - x.mean()) <= 3 * se + 1e-12))
    return rows


def _exp_flln(cfg, k, threads):
    return flln_report(k, cfg.mu0, cfg.ns, cfg.replicas, cfg.T, cfg.seed, threads, cfg.h)


def _exp_fclt(cfg, k, threads):
    label = classify_regime(k)
    rows = []
    for i, n in enumerate(cfg.ns):
        s = fclt_sample(k, cfg.mu0, n, cfg.T, cfg.replicas, cfg.seed + i, threads, cfg.h)
        v = s.values
        var = float(v.var(ddof=1))
        se = math.sqrt(max(np.mean((v - v.mean()) ** 4) - var**2, 0.0) / v.size)
        tgt = fclt_variance_target(label, cfg.mu0, cfg.T)
        rows.append(ReportRow(n, cfg.T, "Var normalised count", var, tgt, se, abs(var - tgt) <= 0.15 * tgt))
    return rows


def _exp_weakly(cfg, k, threads):
    return weakly_critical_report(k, cfg.mu0, cfg.ns, cfg.replicas, cfg.T, cfg.seed, threads)


def _exp_strongly(cfg, k, threads):
    devs = [mean_flln_deviation(k, cfg.mu0, n, cfg.T, cfg.h * n if cfg.h else None) for n in cfg.ns]
    flags = trend_ok(devs)
    return [ReportRow(n, cfg.T, "sup|E N(nt)/I2_R(n) - mu0 t^(alpha+1)|", d, 0.0, 0.0, f)
            for n, d, f in zip(cfg.ns, devs, flags)]


def _exp_rates(cfg, k, threads):
    grid = Grid(cfg.T, cfg.h)
    gaps = [resolvent_gap(k, n, grid) for n in cfg.ns]
    flags = trend_ok([g.sup_gap for g in gaps])
    rows = [ReportRow(g.n, cfg.T, "sup|I_R(nt)/n - t/sigma|", g.sup_gap, 0.0, 0.0, f)
            for g, f in zip(gaps, flags)]
    wc = weakly_critical_report(k, cfg.mu0, cfg.ns, cfg.replicas, cfg.T, cfg.seed, threads)
    return rows + [r for r in wc if r.statistic.startswith("W1")]


_RUNNERS = {
    "resolvent": _exp_resolvent,
    "functional": _exp_functional,
    "flln": _exp_flln,
    "fclt": _exp_fclt,
    "weakly-critical": _exp_weakly,
    "strongly-critical": _exp_strongly,
    "rates": _exp_rates,
}


def _plot(rows: list[ReportRow], path: Path, title: str) -> bool:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    matplotlib.rcParams["svg.hashsalt"] = "hawkes-flt"
    fig, ax = plt.subplots(figsize=(6, 4))
    by_stat: dict[str, list[ReportRow]] = {}
    for r in rows:
        by_stat.setdefault(r.statistic, []).append(r)
    for stat, rs in by_stat.items():
        use_t = len({r.n for r in rs}) == 1
        x = [r.t if use_t else r.n for r in rs]
        ax.plot(x, [r.estimate for r in rs], marker="o", label=stat)
        if any(math.isfinite(r.target) for r in rs):
            ax.plot(x, [r.target for r in rs], linestyle="--", color="grey")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def run(config: dict, out_dir: Path, threads: int, plot: bool = True, base_dir: Path | None = None) -> int:
    diags = validate(config, base_dir)
    if diags:
        regime = [d for d in diags if "incompatible" in d or "supercritical" in d]
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_REGIME if regime and len(regime) == len(diags) else EXIT_VALIDATION
    cfg = ExperimentConfig.from_dict(config)
    k = kernel_from_dict(cfg.kernel, base_dir)
    try:
        rows = _RUNNERS[cfg.experiment](cfg, k, threads)
    except RegimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (StepSizeError, ConvergenceError, BlowUpError, DomainError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report(rows, out_dir / "report.csv")
    meta = {
        "seed": cfg.seed,
        "versions": {"hawkes_flt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "config": config,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot and not _plot(rows, out_dir / "plot.svg", cfg.experiment):
        print("warning: matplotlib unavailable, plot skipped", file=sys.stderr)
    failed = [r for r in rows if r.passed is False]
    print(f"{len(rows)} rows written to {out_dir / 'report.csv'}; {len(failed)} failed checks")
    return EXIT_OK


def _load(path: str) -> tuple[dict | None, str | None]:
    try:
        with open(path) as fh:
            return json.load(fh), None
    except OSError as exc:
        return None, f"cannot read config: {exc}"
    except json.JSONDecodeError as exc:
        return None, f"config is not valid JSON: {exc}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hawkes-flt", description="Hawkes process scaling-limit experiments")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="replica-level worker threads")
    p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    p.add_argument("--no-plot", action="store_true", help="skip plot.svg")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("config")
    v = sub.add_parser("validate", help="list configuration problems")
    v.add_argument("config")
    kp = sub.add_parser("kernels", help="kernel families")
    kp.add_argument("action", choices=["list"])
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "kernels":
        for name, params in KERNEL_FAMILIES.items():
            print(f"{name}: {params}")
        return EXIT_OK
    config, err = _load(args.config)
    if err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    base = Path(args.config).resolve().parent
    if args.command == "validate":
        diags = validate(config, base)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_OK if not diags else EXIT_VALIDATION
    out = Path(args.out or (config.get("out") if isinstance(config, dict) else None) or "out")
    return run(config, out, args.threads, plot=not args.no_plot, base_dir=base)


if __name__ == "__main__":
    sys.exit(main())
