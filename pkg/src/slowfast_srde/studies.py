"""End-to-end studies: each returns a :class:`ResultTable` with fixed columns.

Replicas are split over a process pool (``SLOWFAST_WORKERS`` overrides the
worker count).  Every replica owns its random streams, so tables do not
depend on the number of workers with the compiled engine; the batched numpy
engine agrees across worker counts up to floating-point rounding.
"""
from __future__ import annotations

import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import __version__
from .config import RunConfig
from .ergodics import (AveragedModel, AveragedPath, average_functional, estimate_invariant_measure,
                       gaussian_fast_measure, solve_averaged_path, verify_measure_lipschitz,
                       verify_mixing_rate)
from .io import csv_body, write_table
from .model import ConfigError, Model, RegimeEntry, RegimeSchedule, check_hypotheses, check_regime
from .occupation import Cylinder, build_occupation, marginal_test
from .rate import (CylinderFeedback, EffectiveDiffusion, PathSpec, action_value,
                   cost_convergence_experiment)
from .rng import stream
from .simulator import SimParams, TrajectoryRecord, simulate, simulate_slow
from .spectral import sobolev_norm

log = logging.getLogger(__name__)

WORKERS_ENV = "SLOWFAST_WORKERS"
KINDS = ("averaging", "viable_pair", "laplace", "mixing", "hypcheck", "rate_eval", "measure", "cost",
         "lipschitz")
NEEDS_REGIME = ("averaging", "viable_pair", "cost")


def worker_count() -> int:
    v = os.environ.get(WORKERS_ENV)
    if v:
        try:
            n = int(v)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {v!r}") from None
        return max(1, n)
    return max(1, os.cpu_count() or 1)


@dataclass
class ExperimentPlan:
    kind: str
    config: RunConfig
    replicas: int = 1
    seed: int | None = None
    out: Path | None = None
    entries: list[int] | None = None
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.seed is None:
            self.seed = self.config.seed
        if self.kind in NEEDS_REGIME:
            if self.config.schedule is None:
                raise ConfigError(f"{self.kind} needs a [regime] schedule")
            rep = check_regime(self.config.schedule)
            if not rep.passed:
                raise ConfigError("schedule fails the regime check: " + "; ".join(rep.reasons))
        merged = self.config.section(_SECTION.get(self.kind, self.kind))
        merged.update(self.settings)
        self.settings = merged

    @property
    def model(self) -> Model:
        return self.config.model

    def schedule_entries(self) -> list[tuple[int, RegimeEntry]]:
        sched = self.config.schedule
        idx = range(len(sched)) if self.entries is None else self.entries
        return [(i, sched[i]) for i in idx]

    def get(self, key, default):
        return self.settings.get(key, default)


_SECTION = {"averaging": "averaging", "viable_pair": "viable", "laplace": "laplace",
            "mixing": "mixing", "measure": "measure", "cost": "cost", "rate_eval": "rate",
            "lipschitz": "lipschitz"}


@dataclass
class ResultTable:
    kind: str
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.checks.values()) and self.finite

    @property
    def finite(self) -> bool:
        """No NaN anywhere (inf is a legitimate value, e.g. an infeasible rate)."""
        return not any(isinstance(v, (float, np.floating)) and v != v
                       for r in self.rows for v in r)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def body(self) -> str:
        return csv_body(self.columns, self.rows)

    def write(self, path: str | Path) -> Path:
        meta = dict(self.meta)
        meta["checks"] = {k: bool(v) for k, v in self.checks.items()}
        return write_table(path, self.kind, self.columns, self.rows, meta)

    def gnuplot_stub(self, path: str | Path) -> str:
        """Gnuplot script: every estimate with an SE column, against epsilon (or column 1)."""
        cols = {c: i + 1 for i, c in enumerate(self.columns)}
        x = "epsilon" if "epsilon" in cols else self.columns[0]
        pairs = []
        for c in self.columns:
            if f"{c}_se" in cols:
                pairs.append((c, f"{c}_se"))
            elif c == "se" and cols[c] > 1:
                pairs.append((self.columns[cols[c] - 2], c))
        lines = ["# columns: " + ", ".join(f"{c}={i}" for c, i in cols.items()),
                 "set datafile separator ','", "set datafile commentschars '#'",
                 "set key autotitle columnhead"]
        if x == "epsilon":
            lines.append("set logscale x")
        if pairs:
            plots = [f"'{path}' using {cols[x]}:{cols[c]}:{cols[s]} with yerrorbars title '{c}'"
                     for c, s in pairs]
        else:
            plots = [f"'{path}' using {cols[x]}:{cols[c]} with linespoints title '{c}'"
                     for c in self.columns[1:2]]
        lines.append("plot " + ", \\\n     ".join(plots))
        return "\n".join(lines) + "\n"


def _meta(plan: ExperimentPlan, t0: float, **extra) -> dict:
    return {"kind": plan.kind, "version": __version__, "numpy": np.__version__,
            "python": platform.python_version(), "seed": plan.seed, "replicas": plan.replicas,
            "config": plan.config.source, "settings": plan.settings,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(t0)),
            "wall_seconds": round(time.time() - t0, 3), "workers": worker_count(), **extra}


def _fsum_mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if len(values) else math.nan


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    v = [float(x) for x in values]
    n = len(v)
    m = _fsum_mean(v)
    if n < 2:
        return m, math.inf
    var = math.fsum((x - m) ** 2 for x in v) / (n - 1)
    return m, math.sqrt(var / n)


def _non_increasing(vals, ses, n_se: float = 2.0) -> bool:
    return all(vals[i + 1] <= vals[i] + n_se * math.hypot(ses[i], ses[i + 1])
               for i in range(len(vals) - 1))


# --------------------------------------------------------------------------
# ensembles


def _sim_chunk(args):
    model, params, X0, Y0, T, seed, entry, reps, record_every, engine = args
    return simulate(model, params, X0, Y0, T, seed=seed, entry=entry, replicas=reps,
                    record_every=record_every, engine=engine)


def simulate_ensemble(model: Model, params: SimParams, X0, Y0, T: float, *, seed: int, entry: int,
                      replicas: int, record_every: int, engine: str = "auto",
                      workers: int | None = None) -> TrajectoryRecord:
    """:func:`simulate` over replicas ``0..R-1`` split across a process pool."""
    workers = min(workers or worker_count(), replicas)
    if workers <= 1:
        return _sim_chunk((model, params, X0, Y0, T, seed, entry, list(range(replicas)),
                           record_every, engine))
    splits = np.array_split(np.arange(replicas), workers)
    jobs = [(model, params, X0, Y0, T, seed, entry, [int(r) for r in s], record_every, engine)
            for s in splits if s.size]
    with ProcessPoolExecutor(max_workers=len(jobs)) as ex:
        parts = list(ex.map(_sim_chunk, jobs))
    first = parts[0]
    return TrajectoryRecord(first.times, np.concatenate([p.X for p in parts]),
                            np.concatenate([p.Y for p in parts]), None, seed, entry,
                            tuple(r for p in parts for r in p.replicas), first.params,
                            np.concatenate([np.atleast_1d(p.budget_used) for p in parts]),
                            np.concatenate([p.blowup_times for p in parts]))


class EnsembleCache:
    """Shares schedule-entry ensembles between the averaging and viable-pair studies."""

    def __init__(self):
        self._store: dict[tuple, tuple] = {}

    def get(self, key: tuple, model: Model, make: Callable):
        key = (id(model),) + key
        if key not in self._store:
            self._store[key] = (model, make())
        return self._store[key][1]


def _initial(plan: ExperimentPlan, averaged: AveragedModel | None = None):
    m = plan.model
    X0 = plan.config.X0 if plan.config.X0 is not None else np.zeros(m.sys1.mode_count)
    if plan.config.Y0 is not None:
        return X0, plan.config.Y0
    g = gaussian_fast_measure(m, X0)
    return X0, (g.means.copy() if g is not None else np.zeros(m.sys2.mode_count))


def _entry_grid(entry: RegimeEntry, T: float, stride: float) -> tuple[float, int, float, float]:
    """``(dt, record_every, Delta, horizon)`` on a common grid.

    The step is ``entry.dt`` (reduced to divide the stride), the recording
    stride is at least one step, and Delta is rounded to whole strides.
    """
    dt = entry.dt
    h = max(stride, dt)
    per = math.ceil(h / dt - 1e-9)
    dt = h / per
    nT = round(T / h)
    if abs(nT * h - T) > 1e-9 * T:
        raise ConfigError(f"horizon {T:g} is not a multiple of the recording stride {h:g}")
    m = max(1, round(entry.Delta / h))
    return dt, per, m * h, T + m * h


def _ensemble(plan: ExperimentPlan, k: int, entry: RegimeEntry, cache: EnsembleCache | None):
    T = float(plan.get("T", 1.0))
    stride = float(plan.get("stride", 1e-4))
    dt, per, Delta, horizon = _entry_grid(entry, T, stride)
    X0, Y0 = _initial(plan)
    params = SimParams(entry.epsilon, entry.delta, dt)
    key = (k, entry, plan.seed, plan.replicas, T, stride)

    def make():
        t0 = time.time()
        rec = simulate_ensemble(plan.model, params, X0, Y0, horizon, seed=plan.seed, entry=k,
                                replicas=plan.replicas, record_every=per)
        log.info("entry %d (eps=%g): %d replicas x %d steps in %.1fs", k, entry.epsilon,
                 plan.replicas, round(horizon / dt), time.time() - t0)
        return rec, dt, Delta, horizon

    if cache is None:
        return make()
    return cache.get(key, plan.model, make)


_PATHS: dict[tuple, tuple[Model, AveragedPath]] = {}


def _averaged_path(averaged: AveragedModel, X0, horizon: float, h: float) -> AveragedPath:
    # the model is kept alive alongside its path so the id in the key stays unique
    key = (id(averaged.model), tuple(np.asarray(X0, float)), round(horizon / h), h)
    if key not in _PATHS:
        _PATHS[key] = (averaged.model, solve_averaged_path(X0, horizon, h, averaged))
    return _PATHS[key][1]


# --------------------------------------------------------------------------
# studies


AVERAGING_COLUMNS = ["entry", "epsilon", "delta", "Delta", "dt", "replicas", "blowups",
                     "mean_sup_error", "se", "rms_sup_error", "rms_se"]


def run_averaging_study(plan: ExperimentPlan, cache: EnsembleCache | None = None) -> ResultTable:
    """``sup_{t<=T} |X(t) - psi(t)|_H`` per replica for each schedule entry."""
    t0 = time.time()
    model = plan.model
    averaged = AveragedModel(model, seed=plan.seed)
    T = float(plan.get("T", 1.0))
    X0, _ = _initial(plan)
    rows = []
    for k, e in plan.schedule_entries():
        rec, dt, Delta, horizon = _ensemble(plan, k, e, cache)
        h = rec.times[1] - rec.times[0]
        psi = _averaged_path(averaged, X0, horizon, h).fields
        upto = rec.times <= T * (1 + 1e-12)
        err = np.linalg.norm(rec.X[:, upto] - psi[None, upto], axis=-1).max(axis=1)
        ok = np.isfinite(err)
        m, se = _mean_se(err[ok])
        sq = err[ok] ** 2
        msq, sesq = _mean_se(sq)
        rms = math.sqrt(msq)
        rms_se = sesq / (2 * rms) if rms > 0 else 0.0
        rows.append((k, e.epsilon, e.delta, Delta, dt, int(ok.sum()), int((~ok).sum()),
                     m, se, rms, rms_se))
    table = ResultTable("averaging", AVERAGING_COLUMNS, rows)
    means, ses = table.column("mean_sup_error"), table.column("se")
    x0n = float(np.linalg.norm(X0))
    frac = float(plan.get("rms_fraction", 0.05))
    table.checks["monotone_within_2se"] = _non_increasing(means, ses)
    table.checks["finest_rms_below_fraction"] = rows[-1][9] < frac * x0n
    table.meta = _meta(plan, t0, x0_norm=x0n, rms_threshold=frac * x0n)
    return table


VIABLE_COLUMNS = ["entry", "epsilon", "delta", "Delta", "replicas", "sup_discrepancy", "se",
                  "sup_z", "negative_sup_z", "inconclusive_bins", "tightness"]


def run_viable_pair_study(plan: ExperimentPlan, cache: EnsembleCache | None = None) -> ResultTable:
    """Occupation-measure Y-marginals against ``mu^{psi(t)}`` along the schedule."""
    t0 = time.time()
    model = plan.model
    averaged = AveragedModel(model, seed=plan.seed)
    T = float(plan.get("T", 1.0))
    bins = int(plan.get("bins", 4))
    funcs = [Cylinder.parse(s) for s in plan.get("functionals", ["clip:0", "tanh:1", "ramp:0"])]
    shift = float(plan.get("shift", 1.0))
    theta = float(plan.get("theta", 0.25))
    if plan.replicas < 2:
        raise ConfigError("viable-pair study needs at least two replicas for its SE")
    X0, _ = _initial(plan)
    e0 = np.zeros(model.sys1.mode_count)
    e0[0] = shift
    rows, details = [], []
    for k, e in plan.schedule_entries():
        rec, dt, Delta, horizon = _ensemble(plan, k, e, cache)
        h = rec.times[1] - rec.times[0]
        path = _averaged_path(averaged, X0, horizon, h)
        lookup = {round(t / h): i for i, t in enumerate(path.times)}

        def at(s, off=0.0):
            return averaged.measure(path.fields[lookup[round(s / h)]] + off)

        good = [r for r in range(rec.X.shape[0]) if np.all(np.isfinite(rec.Y[r]))]
        occs = [build_occupation(rec.replica(r), Delta, T) for r in good]
        rep = marginal_test(occs, at, funcs, bins)
        neg = marginal_test(occs, lambda s: at(s, e0), funcs, bins)
        worst = max(rep.bins, key=lambda b: b.discrepancy)
        # occupation-weighted |Y|_{theta}^2, averaged over replicas
        tight = _fsum_mean([o.integrate(sobolev_norm(o.Y, theta, model.sys2) ** 2) / T
                             for o in occs])
        rows.append((k, e.epsilon, e.delta, Delta, len(good), worst.discrepancy, worst.se,
                     rep.sup_z, neg.sup_z, sum(b.inconclusive for b in rep.bins), tight))
        details.extend({"entry": k, "t0": b.t0, "t1": b.t1, "f": b.functional,
                        "occupation": b.occupation, "oracle": b.oracle, "se": b.se}
                       for b in rep.bins)
    table = ResultTable("viable_pair", VIABLE_COLUMNS, rows)
    d, s = table.column("sup_discrepancy"), table.column("se")
    table.checks["decreasing_within_2se"] = _non_increasing(d, s)
    table.checks["finest_within_3se"] = rows[-1][7] <= 3.0
    table.checks["negative_control_above_5se"] = rows[-1][8] > 5.0
    table.meta = _meta(plan, t0, bins=details)
    return table


# Laplace principle -----------------------------------------------------------


@dataclass(frozen=True)
class TerminalFunctional:
    """Bounded ``h(phi) = H(<phi(T), e_k>)``: zero, clipped quadratic or clipped linear."""

    kind: str = "clipped_quadratic"
    a: float = 0.1
    c: float = 0.05
    mode: int = 0

    def H(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "clipped_quadratic":
            return np.minimum(self.c, self.a * y * y)
        if self.kind == "clipped_linear":
            return np.clip(self.a * y, -self.c, self.c)
        raise ConfigError(f"unknown h functional {self.kind!r}")

    def __call__(self, X_T: np.ndarray) -> np.ndarray:
        return self.H(np.asarray(X_T)[..., self.mode])

    @classmethod
    def from_settings(cls, s: dict) -> "TerminalFunctional":
        h = s.get("h", {})
        return cls(h.get("kind", "clipped_quadratic"), float(h.get("a", 0.1)),
                   float(h.get("c", 0.05)), int(h.get("mode", 0)))


def laplace_estimate(h_vals: np.ndarray, eps: float) -> tuple[float, float, float]:
    """``-eps ln mean exp(-h/eps)`` with its jackknife SE and the effective sample size."""
    a = -np.asarray(h_vals, dtype=float) / eps
    R = a.size
    top = a.max()
    w = np.exp(a - top)
    S = math.fsum(w)
    value = -eps * (top + math.log(S / R))
    ess = S * S / math.fsum(w * w)
    if R < 2:
        return value, math.inf, ess
    loo = -eps * (top + np.log(np.maximum(S - w, 1e-300) / (R - 1)))
    se = math.sqrt((R - 1) / R * math.fsum((loo - loo.mean()) ** 2))
    return value, se, ess


def laplace_family_infimum(model: Model, X0, h: TerminalFunctional, T: float, dt: float = 1e-3,
                           averaged: AveragedModel | None = None) -> tuple[float, float]:
    """``inf_y S(psi_y) + H(y)`` over the minimal-energy family that ends at ``y`` in mode ``k``.

    ``psi_y = psi_0 + (y - psi_0(T)_k) sinh(r t) / sinh(r T) e_k`` with ``psi_0``
    the zero-control averaged path and ``r`` the mode-``k`` decay rate; the
    golden-section search runs on ``y`` after a coarse bracketing scan.
    """
    c = model.coeffs
    if c.slow_depends_on_y or c.b1.kind not in ("linear", "constant") or not c.sigma1.is_constant:
        raise ConfigError("the Laplace study needs b1 affine in X and independent of Y, "
                          "and a constant sigma1")
    averaged = averaged or AveragedModel(model)
    eff = EffectiveDiffusion(averaged, "sigma1_Y_independent")
    base = solve_averaged_path(X0, T, dt, averaged)
    k = h.mode
    a = c.b1.params[1] if c.b1.kind == "linear" else 0.0
    r = model.sys1.alphas[k] - a
    t = base.times
    shape = np.sinh(r * t) / math.sinh(r * T) if r != 0 else t / T
    m = base.fields[-1, k]

    def F(y):
        fields = base.fields.copy()
        fields[:, k] += (y - m) * shape
        return action_value(PathSpec(t, fields, base.fields[0]), eff).value + float(h.H(y))

    sd = math.sqrt(max(np.max(model.cov1.lambdas) ** 2 * c.sigma1.params[0] ** 2, 1e-12)
                   * (1 - math.exp(-2 * r * T)) / (2 * r) if r > 0 else T)
    grid = m + sd * np.linspace(-6, 6, 49)
    vals = [F(y) for y in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if i in (0, len(grid) - 1):
        return float(vals[i]), float(grid[i])
    res = optimize.minimize_scalar(F, bracket=(lo, grid[i], hi), method="golden",
                                   options={"xtol": 1e-10})
    return float(res.fun), float(res.x)


LAPLACE_COLUMNS = ["entry", "epsilon", "replicas", "lhs", "se", "rhs", "gap", "ess", "inconclusive"]


def run_laplace_study(plan: ExperimentPlan, h: TerminalFunctional | None = None) -> ResultTable:
    """Left side ``-eps ln E exp(-h(X)/eps)`` by Monte Carlo, right side ``inf (S + h)``."""
    t0 = time.time()
    model = plan.model
    h = h or TerminalFunctional.from_settings(plan.settings)
    T = float(plan.get("T", 1.0))
    dt_slow = float(plan.get("dt", 1e-3))
    X0, Y0 = _initial(plan)
    averaged = AveragedModel(model)
    rhs, y_star = laplace_family_infimum(model, X0, h, T, dt_slow, averaged)
    if h.kind == "zero":
        rhs = 0.0
    if "epsilons" in plan.settings:
        entries = [(i, None) for i in range(len(plan.settings["epsilons"]))]
        eps_list = [float(e) for e in plan.settings["epsilons"]]
    elif plan.config.schedule is not None:
        entries = plan.schedule_entries()
        eps_list = [e.epsilon for _, e in entries]
    else:
        raise ConfigError("laplace needs [laplace].epsilons or a [regime] schedule")
    rows = []
    for (k, e), eps in zip(entries, eps_list):
        if e is None and model.coeffs.slow_depends_on_y:
            raise ConfigError("Y-dependent slow coefficients need a [regime] schedule for delta")
        if not model.coeffs.slow_depends_on_y:
            rec = simulate_slow(model, eps, dt_slow, X0, T, seed=plan.seed, entry=k,
                                replicas=plan.replicas)
        else:
            rec = simulate_ensemble(model, SimParams(eps, e.delta, e.dt), X0, Y0, T,
                                    seed=plan.seed, entry=k, replicas=plan.replicas,
                                    record_every=round(T / e.dt))
        XT = rec.X[:, -1]
        ok = np.all(np.isfinite(XT), axis=1)
        lhs, se, ess = laplace_estimate(h(XT[ok]), eps)
        if h.kind == "zero":
            lhs, se = 0.0, 0.0
        rows.append((k, eps, int(ok.sum()), lhs, se, rhs, lhs - rhs, ess, int(ess < 50)))
    table = ResultTable("laplace", LAPLACE_COLUMNS, rows)
    fin, coarse = rows[-1], rows[0]
    table.checks["finest_gap_small"] = abs(fin[6]) <= max(0.15 * abs(fin[5]), 3 * fin[4])
    table.checks["finest_conclusive"] = fin[8] == 0
    if len(rows) > 1 and h.kind != "zero":
        table.checks["coarse_gap_nonzero"] = abs(coarse[6]) > 3 * coarse[4]
    table.meta = _meta(plan, t0, y_star=y_star, h=h.__dict__,
                       slow_only=not model.coeffs.slow_depends_on_y)
    return table


# mixing, invariant measure, hypotheses -------------------------------------


def _frozen_X(plan: ExperimentPlan) -> np.ndarray:
    X = plan.get("X_frozen", None)
    M1 = plan.model.sys1.mode_count
    if X is None:
        return plan.config.X0 if plan.config.X0 is not None else np.zeros(M1)
    out = np.zeros(M1)
    X = np.atleast_1d(np.asarray(X, dtype=float))
    out[: X.size] = X
    return out


def run_mixing_study(plan: ExperimentPlan) -> ResultTable:
    t0 = time.time()
    f = Cylinder.parse(plan.get("functional", "clip:0"))
    X = _frozen_X(plan)
    times = [float(t) for t in plan.get("times", [4, 16, 64, 256])]
    ref = None
    g = gaussian_fast_measure(plan.model, X)
    if g is not None:
        ref = g.expect_mode(f.g, f.mode)
    res = verify_mixing_rate(plan.model, X, f, times, plan.replicas, reference=ref,
                             dt=float(plan.get("dt", 0.05)), seed=plan.seed)
    rows = [(T, rms) for T, rms in zip(res.times, res.rms)]
    table = ResultTable("mixing", ["T", "rms_error"], rows)
    table.checks["slope_in_band"] = res.passed
    table.meta = _meta(plan, t0, slope=res.slope, reference=res.reference, band=list(res.band))
    return table


MEASURE_COLUMNS = ["mode", "mean", "mean_se", "variance", "variance_se", "oracle_mean",
                   "oracle_variance", "z_variance"]


def run_measure_study(plan: ExperimentPlan):
    """Sample ``mu^X`` at the frozen slow field and compare with the closed form."""
    t0 = time.time()
    model = plan.model
    X = _frozen_X(plan)
    lam = model.sys2.lam
    horizon = float(plan.get("horizon_relax", 2000.0)) / lam
    meas = estimate_invariant_measure(model, X, horizon=horizon, dt=float(plan.get("dt", 0.05)),
                                      thinning=int(plan.get("thinning", 1)), seed=plan.seed)
    g = gaussian_fast_measure(model, X)
    n_check = int(plan.get("check_modes", 8))
    rows = []
    for k in range(model.sys2.mode_count):
        m, mse = average_functional(meas, lambda Y, k=k: Y[:, k])
        center = g.means[k] if g is not None else m
        v, vse = average_functional(meas, lambda Y, k=k, c=center: (Y[:, k] - c) ** 2)
        om = g.means[k] if g is not None else math.nan
        ov = g.variances[k] if g is not None else math.nan
        z = (v - ov) / vse if g is not None and vse > 0 else math.nan
        rows.append((k, m, mse, v, vse, om, ov, z))
    table = ResultTable("measure", MEASURE_COLUMNS, rows)
    if g is not None:
        table.checks["variances_within_3se"] = all(abs(r[7]) <= 3.0 for r in rows[:n_check])
    table.meta = _meta(plan, t0, samples=int(meas.samples.shape[0]), iat_mode0=meas.iat,
                       horizon=horizon)
    return table, meas


LIPSCHITZ_COLUMNS = ["pair", "distance", "difference", "bound", "se", "passed", "inconclusive"]


def measure_lipschitz_constant(model: Model) -> float:
    """``Lip(b2 in X) / (lambda - Lip(b2 in Y))``: slope bound for ``X -> mu^X``."""
    b2 = model.coeffs.b2
    gap = model.sys2.lam - b2.lip_y
    if gap <= 0:
        raise ConfigError("the fast drift is not dissipative enough for a Lipschitz bound")
    return b2.lip_x / gap


def run_lipschitz_study(plan: ExperimentPlan) -> ResultTable:
    """``|F(X1) - F(X2)| <= L_f |X1 - X2|_H + 3 SE`` over random pairs in a box."""
    t0 = time.time()
    model = plan.model
    f = Cylinder.parse(plan.get("functional", "clip:0"))
    L_f = measure_lipschitz_constant(model)  # the cylinder functionals are 1-Lipschitz
    box = float(plan.get("box", 2.0))
    M1 = model.sys1.mode_count
    rng = stream(plan.seed, 0, 0, "aux")
    rows = []
    for i in range(int(plan.get("pairs", 10))):
        X1, X2 = rng.uniform(-box, box, (2, M1))
        v = verify_measure_lipschitz(model, X1, X2, f, L_f,
                                     horizon=float(plan.get("horizon", 2000.0)) / model.sys2.lam,
                                     dt=float(plan.get("dt", 0.05)),
                                     thinning=int(plan.get("thinning", 5)), seed=plan.seed + i)
        rows.append((i, float(np.linalg.norm(X1 - X2)), v.difference, v.bound, v.se,
                     int(v.passed), int(v.inconclusive)))
    table = ResultTable("lipschitz", LIPSCHITZ_COLUMNS, rows)
    table.checks["all_pairs_within_3se"] = all(r[5] for r in rows)
    table.meta = _meta(plan, t0, L_f=L_f)
    return table


def run_hypcheck(plan: ExperimentPlan) -> ResultTable:
    t0 = time.time()
    rep = check_hypotheses(plan.model, plan.config.hypotheses)
    rows = [(name, int(f.passed), f.margin, f.note) for name, f in rep.flags.items()]
    table = ResultTable("hypcheck", ["flag", "passed", "margin", "note"], rows)
    table.checks["hypotheses_1_to_3"] = rep.passed
    extra = rep.to_dict()
    if plan.config.schedule is not None:
        extra["regime"] = check_regime(plan.config.schedule).to_dict()
    table.meta = _meta(plan, t0, report=extra)
    return table


# cost convergence ----------------------------------------------------------


def _ramp(start, end, T: float, M: int):
    a = np.zeros(M)
    b = np.zeros(M)
    a[: len(start)] = start
    b[: len(end)] = end
    return lambda t: a + (b - a) * (t / T)


COST_COLUMNS = ["schedule", "entry", "epsilon", "delta", "Delta", "dt", "replicas", "mc_cost",
                "se", "reference", "gap"]


def run_cost_study(plan: ExperimentPlan) -> ResultTable:
    """Piecewise-frozen Monte-Carlo cost against the mu-averaged cost, plus a fixed-delta run."""
    t0 = time.time()
    model = plan.model
    averaged = AveragedModel(model, seed=plan.seed)
    T = float(plan.get("T", 1.0))
    M1 = model.sys1.mode_count
    psi = _ramp(plan.get("psi_start", [1.0]), plan.get("psi_end", [3.0]), T, M1)
    cyl = Cylinder.parse(plan.get("functional", "clip:0"))
    v = CylinderFeedback(cyl.g, cyl.mode, int(plan.get("direction", 0)),
                         width=model.control_width)
    main = cost_convergence_experiment(v, psi, plan.config.schedule, averaged, T=T,
                                       replicas=plan.replicas, seed=plan.seed)
    neg_delta = float(plan.get("negative_delta", 0.3))
    neg_Deltas = [float(d) for d in plan.get("negative_Deltas", [0.02, 0.01, 0.005])]
    eps = [e.epsilon for e in plan.config.schedule][: len(neg_Deltas)]
    if len(eps) < len(neg_Deltas):
        eps = [10.0 ** -i for i in range(1, len(neg_Deltas) + 1)]
    neg_sched = RegimeSchedule(tuple(
        RegimeEntry(ep, neg_delta, D, min(neg_delta**2 / 20, D / 10)) for ep, D in zip(eps, neg_Deltas)))
    neg_reps = int(plan.get("negative_replicas", 16 * plan.replicas))
    neg = cost_convergence_experiment(v, psi, neg_sched, averaged, T=T, replicas=neg_reps,
                                      seed=plan.seed + 1, require_regime=False,
                                      reference=main.rows[0].reference)
    rows = []
    for name, tab in (("regime", main), ("fixed_delta", neg)):
        for k, r in enumerate(tab.rows):
            rows.append((name, k, r.epsilon, r.delta, r.Delta, r.dt, r.replicas, r.mc_cost, r.se,
                         r.reference, r.gap))
    table = ResultTable("cost", COST_COLUMNS, rows)
    table.checks["regime_gap_decreasing_within_2se"] = main.decreasing(2.0)
    table.checks["fixed_delta_gap_stalls"] = neg.stalls()
    table.meta = _meta(plan, t0, negative_regime_reasons=neg.regime.reasons)
    return table


def run_rate_eval(plan: ExperimentPlan, path: PathSpec, mode: str = "sigma1_Y_independent"):
    averaged = AveragedModel(plan.model, seed=plan.seed)
    eff = EffectiveDiffusion(averaged, mode)
    return action_value(path, eff, averaged, mode)


STUDIES = {
    "averaging": run_averaging_study,
    "viable_pair": run_viable_pair_study,
    "laplace": run_laplace_study,
    "mixing": run_mixing_study,
    "hypcheck": run_hypcheck,
    "cost": run_cost_study,
    "lipschitz": run_lipschitz_study,
}
