"""Exponential-Euler integration of the slow-fast pair in eigen-coordinates.

Per mode the linear part is integrated exactly, the reaction terms are frozen
over a step (``phi1`` weighting) and the stochastic convolution uses its exact
per-step variance.  The fast equation runs with rates divided by ``delta^2``.

Two engines share one set of precomputed constants: a compiled single
trajectory loop (registry coefficients, zero or open-loop control) and a
numpy loop batched over replicas (custom callbacks, feedback controls,
per-step observers).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import _kernels
from .model import ConfigError, Model
from .rng import DEFAULT_CHUNK, NoisePair, stream
from .spectral import phi1

log = logging.getLogger(__name__)


class BlowUpError(RuntimeError):
    def __init__(self, t: float, replica: int | None = None):
        super().__init__(f"state norm exceeded the blow-up threshold at t={t:.6g}")
        self.t = t
        self.replica = replica


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SimParams:
    epsilon: float
    delta: float
    dt: float
    eps_scaling: bool = True
    blowup: float = 1e6

    def __post_init__(self):
        if min(self.epsilon, self.delta, self.dt) <= 0:
            raise ConfigError("epsilon, delta and dt must be positive")

    @property
    def eps_eff(self) -> float:
        return self.epsilon if self.eps_scaling else 1.0


# --------------------------------------------------------------------------
# controls (values are coordinates in U, see Model.control_width)


class ControlSignal(Protocol):
    width: int

    def value(self, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray | None: ...


@dataclass(frozen=True)
class ZeroControl:
    width: int = 0

    def value(self, t, X, Y):
        return None


@dataclass(frozen=True, eq=False)
class OpenLoopControl:
    """Piecewise-constant table: ``values[i]`` holds on ``[times[i], times[i+1])``.

    The last row holds up to ``end``; past ``end`` the control is zero.
    """

    times: np.ndarray
    values: np.ndarray
    end: float
    budget: float = math.inf

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if t.ndim != 1 or v.shape[0] != t.size or np.any(np.diff(t) <= 0):
            raise ConfigError("open-loop table needs increasing times and one row per time")
        if self.end < t[-1]:
            raise ConfigError("table end precedes its last time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if self.quadrature() > self.budget * (1 + 1e-12):
            raise BudgetExceeded(f"table cost {self.quadrature():.6g} exceeds budget {self.budget:.6g}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def quadrature(self) -> float:
        """Table value of ``int |u|_U^2 dt``."""
        widths = np.diff(np.append(self.times, self.end))
        return float(np.sum(np.sum(self.values**2, axis=1) * widths))

    def at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = self.values[np.clip(idx, 0, None)]
        out[(idx < 0) | (t >= self.end)] = 0.0
        return out

    def value(self, t, X, Y):
        u = self.at(np.array([t]))[0]
        return np.broadcast_to(u, X.shape[:-1] + (self.width,))


@dataclass(frozen=True, eq=False)
class FeedbackControl:
    """``u = fn(t, X, Y)`` evaluated on batched states, shape ``(R, width)``.

    ``envelope(t)`` bounds ``|u(t, .)|_U``; it feeds contraction estimates.
    """

    fn: Callable
    width: int
    envelope: Callable[[float], float] | None = None

    def value(self, t, X, Y):
        return np.asarray(self.fn(t, X, Y), dtype=float)


# --------------------------------------------------------------------------
# records


@dataclass
class SimState:
    t: float
    X: np.ndarray
    Y: np.ndarray
    budget_used: float = 0.0


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    X: np.ndarray  # (K, M1) or (R, K, M1)
    Y: np.ndarray
    u: np.ndarray | None = None
    seed: int = 0
    entry: int = 0
    replicas: tuple[int, ...] = (0,)
    params: dict = field(default_factory=dict)
    budget_used: np.ndarray | float = 0.0
    blowup_times: np.ndarray | None = None  # nan where no blow-up

    def replica(self, i: int) -> "TrajectoryRecord":
        if self.X.ndim == 2:
            return self
        bt = None if self.blowup_times is None else self.blowup_times[i : i + 1]
        return TrajectoryRecord(self.times, self.X[i], self.Y[i],
                                None if self.u is None else self.u[i], self.seed, self.entry,
                                (self.replicas[i],), self.params,
                                float(np.asarray(self.budget_used).reshape(-1)[i]), bt)


# --------------------------------------------------------------------------
# the stepper


def _steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, dt):
        raise ConfigError(f"horizon {T:g} is not an integer number of steps dt={dt:g}")
    return n


class Stepper:
    """Per-mode constants and projection matrices for one (model, params)."""

    def __init__(self, model: Model, params: SimParams, natural_fast: bool = False):
        self.model = model
        self.params = params
        s1, s2 = model.sys1, model.sys2
        c = model.coeffs
        dt = params.dt
        eps = params.eps_eff
        delta = params.delta
        a1 = s1.alphas
        r2 = s2.alphas / delta**2
        self.e1 = np.exp(-a1 * dt)
        self.f1 = phi1(a1 * dt) * dt
        self.s1 = math.sqrt(eps) * np.sqrt(dt * phi1(2 * a1 * dt))
        self.e2 = np.exp(-r2 * dt)
        self.f2 = phi1(r2 * dt) * dt / delta**2
        ratio = delta / math.sqrt(eps)
        if ratio < 1e-8:
            warnings.warn("delta/sqrt(epsilon) below 1e-8: fast control term clamped to zero")
            ctrl_scale = 0.0
        else:
            ctrl_scale = 1.0 / (delta * math.sqrt(eps))
        self.f2c = phi1(r2 * dt) * dt * ctrl_scale
        self.s2 = np.sqrt(dt * phi1(2 * r2 * dt)) / delta
        self.lam1 = model.cov1.lambdas
        self.lam2 = model.cov2.lambdas
        col1, col2 = model.col1, model.col2
        self.basis1, self.basis2 = col1.basis, col2.basis
        self.proj1 = np.ascontiguousarray(col1.basis * (col1.h / col1.gram))
        self.proj2 = np.ascontiguousarray(col2.basis * (col2.h / col2.gram))
        n = col1.n
        self.one1 = np.ones(n) @ self.proj1
        self.one2 = np.ones(n) @ self.proj2
        self.T12 = np.ascontiguousarray(self.proj1.T @ self.basis2)
        self.T21 = np.ascontiguousarray(self.proj2.T @ self.basis1)
        self.const_s1 = c.sigma1.is_constant
        self.const_s2 = c.sigma2.is_constant
        self.codes = np.array([max(f.code, 0) for _, f in c.items()], dtype=np.int64)
        self.packed = np.array([f.packed for _, f in c.items()])
        self.lin = np.array([_affine_part(c.b1), _affine_part(c.b2)])
        need_x = need_y = False
        for f, is_reaction in ((c.b1, True), (c.b2, True), (c.sigma1, False), (c.sigma2, False)):
            if is_reaction and f.kind in ("constant", "linear"):
                continue
            if not is_reaction and f.is_constant:
                continue
            dx, dy = _grid_dependence(f, is_reaction)
            need_x |= dx
            need_y |= dy
        self.need_xg, self.need_yg = need_x, need_y

    # numpy engine ---------------------------------------------------------

    def _reaction(self, f, which, X, Y, Xg, Yg):
        c, a, b = self.lin[which]
        if which == 0:
            out = c * self.one1 + a * X + b * (Y @ self.T12.T)
        else:
            out = c * self.one2 + a * (X @ self.T21.T) + b * Y
        if f.kind in ("constant", "linear"):
            return out
        proj = self.proj1 if which == 0 else self.proj2
        return out + _nonlinear_part(f, self.model.x, Xg, Yg) @ proj

    def _multiplier(self, f, const, which, w, Xg, Yg):
        lam = self.lam1 if which == 0 else self.lam2
        if const:
            return f.params[0] * lam * w
        basis, proj = (self.basis1, self.proj1) if which == 0 else (self.basis2, self.proj2)
        return (f(self.model.x, Xg, Yg) * ((lam * w) @ basis.T)) @ proj

    def step(self, X, Y, z1, z2, u1=None, u2=None, evolve_slow=True):
        """One step for batched states ``X (R, M1)``, ``Y (R, M2)``."""
        c = self.model.coeffs
        n = self.basis1.shape[0]
        Xg = X @ self.basis1.T if self.need_xg else np.zeros(X.shape[:-1] + (n,))
        Yg = Y @ self.basis2.T if self.need_yg else np.zeros(Y.shape[:-1] + (n,))
        if evolve_slow:
            d1 = self._reaction(c.b1, 0, X, Y, Xg, Yg)
            w1 = self._multiplier(c.sigma1, self.const_s1, 0, z1, Xg, Yg) * self.s1
            Xn = self.e1 * X + self.f1 * d1 + w1
            if u1 is not None:
                Xn = Xn + self.f1 * self._multiplier(c.sigma1, self.const_s1, 0, u1, Xg, Yg)
        else:
            Xn = X
        d2 = self._reaction(c.b2, 1, X, Y, Xg, Yg)
        w2 = self._multiplier(c.sigma2, self.const_s2, 1, z2, Xg, Yg) * self.s2
        Yn = self.e2 * Y + self.f2 * d2 + w2
        if u2 is not None:
            Yn = Yn + self.f2c * self._multiplier(c.sigma2, self.const_s2, 1, u2, Xg, Yg)
        return Xn, Yn

    # compiled engine ------------------------------------------------------

    def advance_compiled(self, X, Y, z1, z2, u1=None, u2=None, evolve_slow=True) -> int:
        has_u = u1 is not None
        if not has_u:
            u1 = u2 = _EMPTY
        return _kernels.advance(
            X, Y, z1, z2, u1, u2, has_u, evolve_slow,
            self.e1, self.f1, self.s1, self.e2, self.f2, self.f2c, self.s2, self.lam1, self.lam2,
            self.basis1, self.proj1, self.basis2, self.proj2, self.one1, self.one2,
            self.T12, self.T21, self.codes, self.packed, self.lin,
            self.const_s1, self.const_s2, self.need_xg, self.need_yg, self.params.blowup)


_EMPTY = np.zeros((1, 1))


def _affine_part(f) -> np.ndarray:
    """``(c, a, b)`` of the part of a reaction term handled in coefficient space."""
    p = f.params
    if f.kind == "constant":
        return np.array([p[0], 0.0, 0.0])
    if f.kind == "linear":
        return np.array(p[:3])
    if f.kind == "tanh":
        return np.array([p[0], p[1], 0.0])
    return np.zeros(3)


def _nonlinear_part(f, x, Xg, Yg):
    p = f.params
    if f.kind == "tanh":
        return p[2] * np.tanh(p[3] * Yg + p[4] * Xg)
    return f(x, Xg, Yg)


def _grid_dependence(f, is_reaction: bool) -> tuple[bool, bool]:
    """Whether the collocated part of ``f`` reads X and Y on the grid."""
    p = f.params
    if f.kind == "custom":
        return True, True
    if f.kind == "linear":
        return p[1] != 0, p[2] != 0
    if f.kind == "tanh":
        x_dep = p[4] != 0 or (not is_reaction and p[1] != 0)
        return x_dep, p[2] != 0 and p[3] != 0
    if f.kind == "sine":
        return p[3] != 0, p[2] != 0
    return False, False


# --------------------------------------------------------------------------
# drivers


def step_pair(state: SimState, model: Model, params: SimParams, z1: np.ndarray, z2: np.ndarray,
              control: ControlSignal | None = None, stepper: Stepper | None = None) -> SimState:
    """Single exponential-Euler step from ``state`` with given standard normals."""
    st = stepper or Stepper(model, params)
    X = np.atleast_2d(state.X)
    Y = np.atleast_2d(state.Y)
    u1 = u2 = None
    cost = 0.0
    if control is not None:
        u = control.value(state.t, X, Y)
        if u is not None:
            u1, u2 = model.split_control(u)
            cost = float(np.sum(np.asarray(u) ** 2)) * params.dt
    Xn, Yn = st.step(X, Y, np.atleast_2d(z1), np.atleast_2d(z2), u1, u2)
    shape_x, shape_y = np.shape(state.X), np.shape(state.Y)
    return SimState(state.t + params.dt, Xn.reshape(shape_x), Yn.reshape(shape_y),
                    state.budget_used + cost)


def _use_compiled(model: Model, control, observer, engine: str) -> bool:
    ok = model.coeffs.compiled_ok and not isinstance(control, FeedbackControl) and observer is None
    if engine == "compiled" and not ok:
        raise ConfigError("compiled engine needs registry coefficients and no feedback/observer")
    return ok if engine == "auto" else engine == "compiled"


def simulate(model: Model, params: SimParams, X0, Y0, T: float, *,
             control: ControlSignal | None = None, seed: int = 0, entry: int = 0,
             replicas: int | list[int] = 1, record_every: int = 1,
             evolve_slow: bool = True, slow_path: Callable[[int], np.ndarray] | None = None,
             slow_switch_every: int | None = None, observer: Callable | None = None,
             engine: str = "auto", chunk: int = DEFAULT_CHUNK,
             abort_on_blowup: bool = False) -> TrajectoryRecord:
    """Integrate an ensemble of trajectories on ``[0, T]``.

    ``replicas`` is a count or an explicit list of replica indices (each
    replica owns its noise streams).  States are recorded every
    ``record_every`` steps plus the final time.  With ``slow_path`` the slow
    argument is frozen and reset to ``slow_path(k)`` at the start of every
    block of ``slow_switch_every`` steps.  ``observer(t, X, Y)`` is called
    with batched states at every step start (numpy engine only).
    Blown-up replicas are kept with NaN states after their blow-up time
    unless ``abort_on_blowup``.
    """
    rep = list(range(replicas)) if isinstance(replicas, int) else list(replicas)
    R = len(rep)
    n_steps = _steps(T, params.dt)
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    control = control or ZeroControl()
    if slow_path is not None:
        evolve_slow = False
        if not slow_switch_every or slow_switch_every < 1:
            raise ConfigError("slow_path needs a positive slow_switch_every")
    stepper = Stepper(model, params)
    M1, M2 = model.sys1.mode_count, model.sys2.mode_count
    X = np.broadcast_to(np.asarray(X0, dtype=float), (R, M1)).copy()
    Y = np.broadcast_to(np.asarray(Y0, dtype=float), (R, M2)).copy()
    rec_idx = list(range(0, n_steps + 1, record_every))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    K = len(rec_idx)
    Xr = np.empty((R, K, M1))
    Yr = np.empty((R, K, M2))
    budget = np.zeros(R)
    blow = np.full(R, np.nan)
    noises = [NoisePair(seed, entry, r, M1, M2, model.cov1.coupling) for r in rep]
    open_loop = isinstance(control, OpenLoopControl)
    has_u = open_loop or isinstance(control, FeedbackControl)
    budget_cap = getattr(control, "budget", math.inf)

    # segment boundaries: records, slow switches, chunk limits
    marks = set(rec_idx)
    if slow_path is not None:
        marks.update(range(0, n_steps + 1, slow_switch_every))
    marks = sorted(marks)
    compiled = _use_compiled(model, control, observer, engine)
    dt = params.dt

    def set_slow(k_step):
        if slow_path is not None and k_step % slow_switch_every == 0 and k_step < n_steps:
            X[:] = np.asarray(slow_path(k_step // slow_switch_every), dtype=float)

    def segments():
        for a, b in zip(marks, marks[1:]):
            s = a
            while s < b:
                e = min(b, s + chunk)
                yield s, e
                s = e

    ri = 0
    if compiled:
        for i in range(R):
            x = X[i].copy()
            y = Y[i].copy()
            Xr[i, 0], Yr[i, 0] = x, y
            ri = 1
            dead = False
            for s, e in segments():
                if slow_path is not None and s % slow_switch_every == 0 and s < n_steps:
                    x[:] = np.asarray(slow_path(s // slow_switch_every), dtype=float)
                z1, z2 = noises[i].take(e - s, need_slow=evolve_slow)
                u1 = u2 = None
                if open_loop:
                    u = control.at(np.arange(s, e) * dt)
                    budget[i] += float(np.sum(u * u)) * dt
                    u1, u2 = (np.ascontiguousarray(a) for a in model.split_control(u))
                if not dead:
                    bad = stepper.advance_compiled(x, y, z1, z2, u1, u2, evolve_slow)
                    if bad >= 0:
                        dead = True
                        blow[i] = (s + bad + 1) * dt
                        if abort_on_blowup:
                            raise BlowUpError(blow[i], rep[i])
                        x[:] = np.nan
                        y[:] = np.nan
                if ri < K and e == rec_idx[ri]:
                    Xr[i, ri], Yr[i, ri] = x, y
                    ri += 1
            if budget[i] > budget_cap * (1 + 1e-12):
                raise BudgetExceeded(f"replica {rep[i]} used {budget[i]:.6g} > {budget_cap:.6g}")
    else:
        Xr[:, 0], Yr[:, 0] = X, Y
        ri = 1
        alive = np.ones(R, dtype=bool)
        thr = params.blowup
        for s, e in segments():
            zs = [noises[i].take(e - s, need_slow=evolve_slow) for i in range(R)]
            z1 = np.stack([a for a, _ in zs], axis=1)
            z2 = np.stack([b for _, b in zs], axis=1)
            for j in range(e - s):
                k = s + j
                set_slow(k)
                t = k * dt
                if observer is not None:
                    observer(t, X, Y)
                u1 = u2 = None
                if has_u:
                    u = np.array(control.value(t, X, Y), dtype=float)
                    if u.ndim == 1:
                        u = np.broadcast_to(u, (R, u.size))
                    budget += np.sum(u * u, axis=1) * dt
                    if np.any(budget > budget_cap * (1 + 1e-12)):
                        raise BudgetExceeded(f"control budget {budget_cap:.6g} exceeded at t={t:.6g}")
                    u1, u2 = model.split_control(u)
                Xn, Yn = stepper.step(X, Y, z1[j], z2[j], u1, u2, evolve_slow)
                with np.errstate(invalid="ignore", over="ignore"):
                    bad = alive & ~((np.sum(Xn * Xn, axis=1) <= thr * thr)
                                    & (np.sum(Yn * Yn, axis=1) <= thr * thr))
                if np.any(bad):
                    blow[bad] = (k + 1) * dt
                    if abort_on_blowup:
                        i = int(np.flatnonzero(bad)[0])
                        raise BlowUpError(blow[i], rep[i])
                    alive &= ~bad
                    Xn[~alive] = np.nan
                    Yn[~alive] = np.nan
                X, Y = Xn, Yn
            if ri < K and e == rec_idx[ri]:
                Xr[:, ri], Yr[:, ri] = X, Y
                ri += 1
    times = np.array(rec_idx, dtype=float) * dt
    pdict = {"epsilon": params.epsilon, "delta": params.delta, "dt": dt,
             "eps_scaling": params.eps_scaling, "T": T}
    return TrajectoryRecord(times, Xr, Yr, None, seed, entry, tuple(rep), pdict, budget, blow)


def run_pair(model: Model, params: SimParams, X0, Y0, T: float, *, control=None, seed: int = 0,
             entry: int = 0, replica: int = 0, record_every: int = 1, engine: str = "auto",
             abort_on_blowup: bool = True) -> TrajectoryRecord:
    """One trajectory of the (controlled) slow-fast pair; deterministic in ``seed``.

    Open-loop controls are written back into ``record.u`` at the recorded
    times.
    """
    rec = simulate(model, params, X0, Y0, T, control=control, seed=seed, entry=entry,
                   replicas=[replica], record_every=record_every, engine=engine,
                   abort_on_blowup=abort_on_blowup).replica(0)
    if isinstance(control, OpenLoopControl):
        rec.u = control.at(rec.times)
    return rec


def run_frozen_fast(model: Model, X_frozen, Y0, T: float, dt: float, *, seed: int = 0,
                    entry: int = 0, replicas: int | list[int] = 1, record_every: int = 1,
                    engine: str = "auto", observer=None) -> TrajectoryRecord:
    """Fast equation in its own time scale (delta = 1) with the slow field frozen."""
    params = SimParams(epsilon=1.0, delta=1.0, dt=dt)
    return simulate(model, params, X_frozen, Y0, T, seed=seed, entry=entry, replicas=replicas,
                    record_every=record_every, evolve_slow=False, engine=engine, observer=observer)


def run_piecewise_frozen_fast(model: Model, psi: Callable[[float], np.ndarray], Delta: float,
                              delta: float, T: float, dt: float, Y0, *, seed: int = 0,
                              entry: int = 0, replicas: int | list[int] = 1,
                              record_every: int = 1, engine: str = "auto",
                              observer=None) -> TrajectoryRecord:
    """Fast process driven by ``psi(floor(t/Delta) Delta)`` on ``[0, T]``.

    ``Delta`` must be a whole number of steps.
    """
    per = _steps(Delta, dt)
    if per < 1:
        raise ConfigError("Delta shorter than one step")
    params = SimParams(epsilon=1.0, delta=delta, dt=dt)
    X0 = np.asarray(psi(0.0), dtype=float)
    return simulate(model, params, X0, Y0, T, seed=seed, entry=entry, replicas=replicas,
                    record_every=record_every, slow_path=lambda k: psi(k * per * dt),
                    slow_switch_every=per, engine=engine, observer=observer)


def simulate_slow(model: Model, epsilon: float, dt: float, X0, T: float, *, seed: int = 0,
                  entry: int = 0, replicas: int | list[int] = 1, record_every: int | None = None,
                  eps_scaling: bool = True, chunk: int = DEFAULT_CHUNK) -> TrajectoryRecord:
    """Slow equation alone, for models whose slow coefficients ignore Y.

    Uses the slow noise stream of each replica, so paths coincide with the
    slow component of :func:`simulate` run with the same ``dt``.  The
    returned record has an empty fast state.
    """
    if model.coeffs.slow_depends_on_y:
        raise ConfigError("slow-only integration needs b1 and sigma1 independent of Y")
    rep = list(range(replicas)) if isinstance(replicas, int) else list(replicas)
    R = len(rep)
    n_steps = _steps(T, dt)
    record_every = record_every or n_steps
    params = SimParams(epsilon=epsilon, delta=1.0, dt=dt, eps_scaling=eps_scaling)
    st = Stepper(model, params)
    c = model.coeffs
    M1, M2 = model.sys1.mode_count, model.sys2.mode_count
    X = np.broadcast_to(np.asarray(X0, dtype=float), (R, M1)).copy()
    Y = np.zeros((R, M2))
    n = st.basis1.shape[0]
    gens = [stream(seed, entry, r, "slow_noise", model.cov1.coupling) for r in rep]
    rec_idx = list(range(0, n_steps + 1, record_every))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    Xr = np.empty((R, len(rec_idx), M1))
    Xr[:, 0] = X
    ri = 1
    s = 0
    while s < n_steps:
        e = min(n_steps, s + chunk)
        z = np.stack([g.standard_normal((e - s, M1)) for g in gens], axis=1)
        for j in range(e - s):
            Xg = X @ st.basis1.T if st.need_xg else np.zeros((R, n))
            d1 = st._reaction(c.b1, 0, X, Y, Xg, np.zeros((R, n)))
            w1 = st._multiplier(c.sigma1, st.const_s1, 0, z[j], Xg, np.zeros((R, n))) * st.s1
            X = st.e1 * X + st.f1 * d1 + w1
            k = s + j + 1
            if ri < len(rec_idx) and k == rec_idx[ri]:
                Xr[:, ri] = X
                ri += 1
        s = e
    times = np.array(rec_idx, dtype=float) * dt
    pdict = {"epsilon": epsilon, "delta": None, "dt": dt, "eps_scaling": eps_scaling, "T": T}
    return TrajectoryRecord(times, Xr, np.zeros((R, len(rec_idx), M2)), None, seed, entry,
                            tuple(rep), pdict, np.zeros(R), np.full(R, np.nan))
