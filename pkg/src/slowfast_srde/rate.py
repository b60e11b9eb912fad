"""Action functional of the averaged controlled dynamics and near-optimal controls.

For a path ``psi`` the forcing the control must supply is the residual
``g = psi' + A psi - Bbar(psi)``.  With ``Q1 = c I`` the minimal cost is
``S = 1/2 int <g, q^{-1} g> dt`` where ``q`` multiplies pointwise by
``qbar(x) = c^2 E sigma1^2``; the control realising it is the feedback
``v(t, Y)(x) = c sigma1(x, psi(t)(x), Y(x)) [q^{-1} g(t)](x)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ergodics import AveragedModel, AveragedPath, TrapezoidWeights, solve_averaged_path
from .model import ConfigError, Model, RegimeSchedule, check_regime
from .simulator import OpenLoopControl, FeedbackControl, ZeroControl, run_piecewise_frozen_fast, _steps

log = logging.getLogger(__name__)

MODES = ("general_d1", "sigma1_Y_independent")


class BoundViolation(ValueError):
    """``qbar`` dropped below its declared lower bound."""


class PicardError(RuntimeError):
    """No contraction even at the smallest admissible window."""


# --------------------------------------------------------------------------
# paths


@dataclass(eq=False)
class PathSpec:
    """Path on a uniform time grid, ``fields[i] = psi(times[i])``."""

    times: np.ndarray
    fields: np.ndarray
    X0: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.atleast_2d(np.asarray(self.fields, dtype=float))
        if self.fields.shape[0] != self.times.size or self.times.size < 3:
            raise ConfigError("a path needs at least three times and one field per time")
        d = np.diff(self.times)
        if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise ConfigError("path times must be uniform and increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def consistent(self) -> bool:
        """Whether ``psi(0) = X0`` (always true when no X0 is given)."""
        if self.X0 is None:
            return True
        return bool(np.allclose(self.fields[0], self.X0, rtol=0, atol=1e-12))

    @classmethod
    def from_function(cls, psi: Callable[[float], np.ndarray], T: float, dt: float, X0=None) -> "PathSpec":
        n = _steps(T, dt)
        t = np.arange(n + 1) * dt
        return cls(t, np.array([psi(s) for s in t]), None if X0 is None else np.asarray(X0, float))

    @classmethod
    def from_averaged(cls, path: AveragedPath) -> "PathSpec":
        return cls(path.times, path.fields, path.fields[0])


@dataclass
class Residual:
    times: np.ndarray
    g: np.ndarray  # (K, M1)
    diagnostics: dict = field(default_factory=dict)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.g, axis=1)


def residual(path: PathSpec, averaged: AveragedModel, sys1=None) -> Residual:
    """``g(t) = psi'(t) + A psi(t) - Bbar(psi(t))`` per retained mode.

    ``psi'`` uses central differences with second-order one-sided stencils at
    the two end points.
    """
    sys1 = sys1 or averaged.model.sys1
    dpsi = np.gradient(path.fields, path.dt, axis=0, edge_order=2)
    B = np.array([averaged.Bbar(p) for p in path.fields])
    g = dpsi + sys1.alphas * path.fields - B
    diag = {"one_sided_endpoints": [0, len(path.times) - 1], "stencil": "central, 2nd order",
            "psi0_matches_X0": path.consistent}
    return Residual(path.times, g, diag)


# --------------------------------------------------------------------------
# effective diffusion


class EffectiveDiffusion:
    """``qbar(x) = c^2 E_{mu^X} sigma1^2(x, X(x), Y(x))`` with bounds ``(c0, c1)``.

    ``c`` is the common eigenvalue of ``Q1`` on the retained modes.  When the
    eigenvalues differ only the sigma1-independent-of-Y case is handled, by a
    mode-space pseudo-inverse.
    """

    def __init__(self, averaged: AveragedModel, mode: str = "sigma1_Y_independent",
                 bounds: tuple[float, float] | None = None, tol: float = 1e-12):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        model = averaged.model
        s1 = model.coeffs.sigma1
        if mode == "sigma1_Y_independent" and s1.depends_on_y:
            raise ConfigError("sigma1 depends on Y; use mode general_d1")
        lam = model.cov1.lambdas
        self.uniform = bool(np.allclose(lam, lam[0], rtol=1e-12, atol=0)) and lam[0] > 0
        if not self.uniform and s1.depends_on_y:
            raise ConfigError("non-identity Q1 is only supported for sigma1 independent of Y")
        self.scale = float(lam[0]) if self.uniform else 1.0
        self.averaged = averaged
        self.mode = mode
        self.tol = tol
        if bounds is None:
            b = model.coeffs.sigma1_bounds_sq
            bounds = (0.0, math.inf) if b is None else (b[0] * self.scale**2, b[1] * self.scale**2)
        self.bounds = bounds

    @property
    def model(self) -> Model:
        return self.averaged.model

    def qbar(self, X: np.ndarray) -> np.ndarray:
        av = self.averaged
        s1 = self.model.coeffs.sigma1
        if self.mode == "sigma1_Y_independent":
            Xg = av.basis1 @ X
            q = s1(av.x, Xg, np.zeros_like(Xg)) ** 2
        else:
            q = av.qbar(X)
        q = np.broadcast_to(np.asarray(q, dtype=float), av.x.shape) * self.scale**2
        c0 = self.bounds[0]
        if np.any(q < c0 - self.tol) or np.any(q <= 0):
            i = int(np.argmin(q))
            raise BoundViolation(f"qbar={q[i]:.6g} at x={av.x[i]:.6g} is below c0={c0:.6g}")
        return q

    def solve(self, X: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``q^{-1} h`` on the grid and in mode coordinates."""
        av = self.averaged
        w = (av.basis1 @ h) / self.qbar(X)
        return w, w @ av.proj1

    def mode_matrix(self, X: np.ndarray) -> np.ndarray:
        """``A = P sigma1(X) Q1`` in mode coordinates (sigma1 independent of Y)."""
        av = self.averaged
        s1 = self.model.coeffs.sigma1
        Xg = av.basis1 @ X
        sig = np.broadcast_to(s1(av.x, Xg, np.zeros_like(Xg)), av.x.shape)
        return (av.proj1.T * sig) @ av.basis1 * self.model.cov1.lambdas


# --------------------------------------------------------------------------
# action value


@dataclass(eq=False)
class FeedbackDescriptor:
    """Tabulated minimal control ``v(t, Y)(x) = c sigma1(x, psi(t)(x), Y(x)) w(t, x)``.

    ``w`` is ``q^{-1} g`` on the collocation grid.  The value at ``t`` is the
    one tabulated at the last grid time not after ``t``.
    """

    times: np.ndarray
    psi: np.ndarray  # (K, M1)
    w: np.ndarray  # (K, n)
    scale: float
    model: Model

    def __post_init__(self):
        col = self.model.col1
        self._basis1 = col.basis
        self._proj1 = col.basis * (col.h / col.gram)
        self._basis2 = self.model.col2.basis
        self._psig = self.psi @ self._basis1.T

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t + 1e-12 * max(1.0, abs(t)), side="right") - 1)
        return min(max(i, 0), len(self.times) - 1)

    def grid_values(self, t: float, Y: np.ndarray) -> np.ndarray:
        i = self.index(t)
        s1 = self.model.coeffs.sigma1
        Yg = np.asarray(Y, dtype=float) @ self._basis2.T
        psig = self._psig[i]
        return self.scale * s1(self.model.x, psig, Yg) * self.w[i]

    def __call__(self, t: float, X, Y: np.ndarray) -> np.ndarray:
        """Control coordinates in U (slow block only; fast block zero)."""
        v = self.grid_values(t, Y) @ self._proj1
        if v.ndim == 1:
            v = v[None, :]
        width = self.model.control_width
        out = np.zeros(v.shape[:-1] + (width,))
        out[..., : v.shape[-1]] = v
        return out

    def envelope(self) -> np.ndarray:
        """``sup_Y |v(t, .)|_H`` per tabulated time (``|sigma1| <= sup`` bound)."""
        s1 = self.model.coeffs.sigma1
        col = self.model.col1
        if s1.depends_on_y:
            hi = max(abs(b) for b in s1.bounds) if s1.bounds else math.inf
            mult = np.full_like(self.w, hi)
        else:
            mult = np.abs(s1(self.model.x, self._psig, np.zeros_like(self._psig)))
            mult = np.broadcast_to(mult, self.w.shape)
        return self.scale * np.sqrt(np.sum((mult * self.w) ** 2, axis=1) * col.h)

    def to_control(self) -> FeedbackControl:
        env = self.envelope()
        return FeedbackControl(self, self.model.control_width,
                               envelope=lambda t: float(env[self.index(t)]))

    def table(self, Y=None) -> tuple[np.ndarray, np.ndarray]:
        """``(times, grid values)``; Y defaults to zero (exact when sigma1 ignores Y)."""
        M2 = self.model.sys2.mode_count
        Y = np.zeros(M2) if Y is None else Y
        return self.times, np.array([self.grid_values(t, Y) for t in self.times])


@dataclass
class RateResult:
    value: float
    times: np.ndarray
    g: np.ndarray
    integrand: np.ndarray
    feedback: FeedbackDescriptor | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)

    def to_dict(self) -> dict:
        return {"value": self.value, "feasible": self.feasible,
                "times": self.times.tolist(),
                "residual_norms": np.linalg.norm(self.g, axis=1).tolist(),
                "diagnostics": self.diagnostics}


def _trapezoid(y: np.ndarray, dt: float) -> float:
    return float(dt * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def action_value(path: PathSpec, eff: EffectiveDiffusion, averaged: AveragedModel | None = None,
                 mode: str | None = None, *, null_tol: float = 1e-10) -> RateResult:
    """``S(psi) = 1/2 int <g, q^{-1} g> dt`` by grid division and the trapezoid rule."""
    averaged = averaged or eff.averaged
    mode = mode or eff.mode
    if mode != eff.mode:
        eff = EffectiveDiffusion(averaged, mode, eff.bounds, eff.tol)
    res = residual(path, averaged)
    K = len(path.times)
    dt = path.dt
    diag = dict(res.diagnostics)
    diag["mode"] = mode
    if not eff.uniform:
        # mode-space route: q = A A^T, pseudo-inverse, null directions infeasible
        integ = np.empty(K)
        for i in range(K):
            A = eff.mode_matrix(path.fields[i])
            U, s, _ = np.linalg.svd(A)
            keep = s > null_tol * max(s.max(), 1.0)
            coeff = U.T @ res.g[i]
            if np.any(np.abs(coeff[~keep]) > null_tol * max(1.0, np.abs(coeff).max())):
                diag["infeasible_time"] = float(path.times[i])
                return RateResult(math.inf, res.times, res.g, np.full(K, math.inf), None, diag)
            integ[i] = float(np.sum(coeff[keep] ** 2 / s[keep] ** 2))
        value = 0.5 * _trapezoid(integ, dt)
        diag["quadrature_error_estimate"] = abs(value - 0.5 * _trapezoid(integ[::2], 2 * dt)) / 3 \
            if K % 2 == 1 else None
        return RateResult(value, res.times, res.g, integ, None, diag)

    col = averaged.model.col1
    W = np.empty((K, col.n))
    integ = np.empty(K)
    qmin = math.inf
    for i in range(K):
        q = eff.qbar(path.fields[i])
        qmin = min(qmin, float(q.min()))
        w = (averaged.basis1 @ res.g[i]) / q
        W[i] = w
        integ[i] = float(res.g[i] @ (w @ averaged.proj1))
    value = 0.5 * _trapezoid(integ, dt)
    diag["qbar_min"] = qmin
    diag["c0"] = eff.bounds[0]
    if K % 2 == 1:
        diag["quadrature_error_estimate"] = abs(value - 0.5 * _trapezoid(integ[::2], 2 * dt)) / 3
    fb = FeedbackDescriptor(path.times, path.fields, W, eff.scale, averaged.model)
    # realised cost of v against the identity <g, q^{-1} g>
    diag["identity_gap"] = _identity_gap(fb, averaged, path, integ, mode)
    return RateResult(max(value, 0.0), res.times, res.g, integ, fb, diag)


def _identity_gap(fb: FeedbackDescriptor, averaged: AveragedModel, path: PathSpec,
                  integ: np.ndarray, mode: str) -> float:
    """``max_t |int |v(t, Y)|^2 mu(dY) - <g, q^{-1} g>|`` over a few sample times."""
    col = averaged.model.col1
    s1 = averaged.model.coeffs.sigma1
    idx = np.unique(np.linspace(0, len(path.times) - 1, 5).astype(int))
    gap = 0.0
    for i in idx:
        psi = path.fields[i]
        Xg = averaged.basis1 @ psi
        if mode == "sigma1_Y_independent" or not s1.depends_on_y:
            sq = s1(averaged.x, Xg, np.zeros_like(Xg)) ** 2
        else:
            sq = averaged.expect_grid(psi, lambda x, Xg, Yg: s1(x, Xg, Yg) ** 2)
        realised = float(np.sum(fb.scale**2 * sq * fb.w[i] ** 2) * col.h)
        gap = max(gap, abs(realised - integ[i]))
    return gap


# --------------------------------------------------------------------------
# Picard solver for the controlled averaged equation


@dataclass
class PicardResult:
    path: AveragedPath
    windows: list[tuple[float, float]]
    iterations: list[int]
    contraction: list[float]
    constant: float


def _forcing(averaged: AveragedModel, v):
    """``F(i, t, psi) = Bbar(psi) + P E_{mu^psi}[sigma1(psi) Q1 v(t, Y)]``."""
    model = averaged.model
    s1 = model.coeffs.sigma1
    lam1 = model.cov1.lambdas
    x = averaged.x

    if v is None or isinstance(v, ZeroControl):
        return lambda i, t, psi: averaged.Bbar(psi)

    if isinstance(v, OpenLoopControl):
        def F(i, t, psi):
            u1, _ = model.split_control(v.at(np.array([t]))[0])
            Xg = averaged.basis1 @ psi
            sig = s1(x, Xg, np.zeros_like(Xg))
            return averaged.Bbar(psi) + (sig * (averaged.basis1 @ (lam1 * u1))) @ averaged.proj1
        return F

    if isinstance(v, FeedbackDescriptor):
        c2 = v.scale**2

        def F(i, t, psi):
            Xg = averaged.basis1 @ psi
            ps = v._psig[i]
            if not s1.depends_on_y:
                m = s1(x, Xg, np.zeros_like(Xg)) * s1(x, ps, np.zeros_like(ps))
            else:
                def f(xx, XX, YY):
                    p = ps.reshape(np.shape(xx)) if np.ndim(xx) == 2 else ps
                    return s1(xx, XX, YY) * s1(xx, p, YY)
                m = averaged.expect_grid(psi, f)
            return averaged.Bbar(psi) + (c2 * m * v.w[i]) @ averaged.proj1
        return F

    raise ConfigError("v must be zero, an open-loop table or a FeedbackDescriptor")


def contraction_constant(model: Model) -> float:
    """Lipschitz constant of the mild map's integrand used for window sizing."""
    c = model.coeffs
    lam = float(np.max(model.cov1.lambdas))
    s_hi = max(abs(b) for b in c.sigma1.bounds) if c.sigma1.bounds else 1.0
    return max(c.b1.lip_x + c.b1.lip_y, lam * (c.sigma1.lip_x + c.sigma1.lip_y + s_hi))


def picard_solve_control_path(X0, v, averaged: AveragedModel, horizon: float, tol: float, *,
                              dt: float = 1e-3, max_iter: int = 500,
                              envelope: np.ndarray | Callable[[float], float] | None = None,
                              min_steps: int = 4) -> PicardResult:
    """Solve the controlled averaged mild equation by windowed Picard iteration.

    Each window ``[t0, t0 + T0]`` is halved until the estimate
    ``C (sqrt(T0) + |gamma|_{L2[t0, t0+T0]}) < 1/2``, floored at ``min_steps``
    steps.  Inside a window the whole discrete path (exponential trapezoid
    rule, as in :func:`solve_averaged_path`) is iterated until successive
    iterates differ by less than ``tol`` in sup norm.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    model = averaged.model
    n = _steps(horizon, dt)
    times = np.arange(n + 1) * dt
    if isinstance(v, FeedbackDescriptor):
        if len(v.times) != n + 1 or not np.allclose(v.times, times, rtol=0, atol=1e-12):
            raise ConfigError("feedback table must share the solver time grid")
        gamma = v.envelope()
    elif envelope is not None:
        gamma = envelope if isinstance(envelope, np.ndarray) else np.array([envelope(t) for t in times])
    elif isinstance(v, OpenLoopControl):
        gamma = np.linalg.norm(v.at(times), axis=1)
    else:
        gamma = np.zeros(n + 1)
    if not np.all(np.isfinite(gamma)):
        raise ConfigError("control envelope must be finite")
    C = contraction_constant(model)
    W = TrapezoidWeights.build(model.sys1.alphas, dt)
    F = _forcing(averaged, v)
    out = np.empty((n + 1, model.sys1.mode_count))
    out[0] = np.asarray(X0, dtype=float)
    g2 = np.concatenate([[0.0], np.cumsum(0.5 * (gamma[1:] ** 2 + gamma[:-1] ** 2) * dt)])

    def factor(a, m):
        return C * (math.sqrt(m * dt) + math.sqrt(max(g2[a + m] - g2[a], 0.0)))

    windows, iters, facs = [], [], []
    k0 = 0
    while k0 < n:
        m = n - k0
        while factor(k0, m) >= 0.5 and m > min_steps:
            m = max(min_steps, m // 2)
        fac = factor(k0, m)
        if fac >= 0.5 and C > 0:
            raise PicardError(f"no contraction at window {m * dt:g} from t={k0 * dt:g}: "
                              f"C={C:.4g}, |gamma|_L2={math.sqrt(g2[k0 + m] - g2[k0]):.4g}, "
                              f"factor={fac:.4g}")
        idx = np.arange(k0, k0 + m + 1)
        cur = np.repeat(out[k0][None, :], m + 1, axis=0)
        for it in range(1, max_iter + 1):
            Fv = np.array([F(i, times[i], cur[j]) for j, i in enumerate(idx)])
            new = np.empty_like(cur)
            new[0] = out[k0]
            for j in range(m):
                new[j + 1] = W.apply(new[j], Fv[j], Fv[j + 1])
            diff = float(np.max(np.abs(new - cur)))
            cur = new
            if diff < tol:
                break
        else:
            raise PicardError(f"window from t={k0 * dt:g} did not converge in {max_iter} iterations")
        out[idx] = cur
        windows.append((k0 * dt, (k0 + m) * dt))
        iters.append(it)
        facs.append(fac)
        k0 += m
    return PicardResult(AveragedPath(times, out, sum(iters)), windows, iters, facs, C)


# --------------------------------------------------------------------------
# cost convergence for piecewise-frozen fast processes


@dataclass(frozen=True)
class CylinderFeedback:
    """``v(t, Y) = amplitude(t) g(<Y, e_k>) e_j`` in the slow block of U."""

    g: Callable[[np.ndarray], np.ndarray]
    mode: int = 0
    direction: int = 0
    amplitude: Callable[[float], float] = lambda t: 1.0
    width: int = 1

    def __call__(self, t: float, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        out = np.zeros((Y.shape[0], self.width))
        out[:, self.direction] = self.amplitude(t) * self.g(Y[:, self.mode])
        return out

    def mu_sq(self, t: float, measure) -> float:
        """``int |v(t, Y)|^2 mu(dY)``."""
        a = self.amplitude(t)
        return a * a * measure.expect_mode(lambda y: self.g(y) ** 2, self.mode)


@dataclass
class CostRow:
    epsilon: float
    delta: float
    Delta: float
    dt: float
    mc_cost: float
    se: float
    reference: float
    replicas: int

    @property
    def gap(self) -> float:
        return self.mc_cost - self.reference


@dataclass
class CostTable:
    rows: list[CostRow]
    regime: object = None

    @property
    def gaps(self) -> np.ndarray:
        return np.array([abs(r.gap) for r in self.rows])

    @property
    def ses(self) -> np.ndarray:
        return np.array([r.se for r in self.rows])

    def decreasing(self, n_se: float = 2.0) -> bool:
        """Each |gap| is at most the previous one plus ``n_se`` combined SE."""
        g, s = self.gaps, self.ses
        return all(g[i + 1] <= g[i] + n_se * math.hypot(s[i], s[i + 1]) for i in range(len(g) - 1))

    def stalls(self, n_se: float = 3.0, keep: float = 0.5) -> bool:
        """The last |gap| stays significant and above ``keep`` times the first."""
        g, s = self.gaps, self.ses
        return bool(g[-1] > n_se * s[-1] and g[-1] >= keep * g[0])


def mu_averaged_cost(vtilde, psi: Callable[[float], np.ndarray], averaged: AveragedModel, T: float,
                     nodes: int = 2001, samples: int = 20000, seed: int = 0) -> float:
    """``1/2 int_0^T int |v(t, Y)|^2 mu^{psi(t)}(dY) dt`` (trapezoid in t)."""
    t = np.linspace(0.0, T, nodes)
    rng = np.random.default_rng(seed)
    vals = np.empty(nodes)
    for i, s in enumerate(t):
        meas = averaged.measure(np.asarray(psi(s), dtype=float))
        if hasattr(vtilde, "mu_sq"):
            vals[i] = vtilde.mu_sq(s, meas)
        else:
            Ys = meas.sample(samples, rng) if hasattr(meas, "sample") else meas.samples
            vals[i] = float(np.mean(np.sum(np.asarray(vtilde(s, Ys)) ** 2, axis=1)))
    return 0.5 * _trapezoid(vals, t[1] - t[0])


def cost_convergence_experiment(vtilde, psi_tilde: Callable[[float], np.ndarray],
                                schedule: RegimeSchedule, averaged: AveragedModel, *, T: float = 1.0,
                                replicas: int = 64, seed: int = 0, require_regime: bool = True,
                                reference: float | None = None) -> CostTable:
    """Monte-Carlo ``E 1/2 int |v([t/Delta] Delta, Y(t))|^2 dt`` for each schedule entry.

    The fast process is driven by ``psi_tilde`` frozen on windows of length
    Delta.  Step sizes are the largest ``dt <= entry.dt`` dividing ``T``;
    Delta is rounded to a whole number of steps.
    """
    regime = check_regime(schedule)
    if require_regime and not regime.passed:
        raise ConfigError("schedule is outside the regime: " + "; ".join(regime.reasons))
    model = averaged.model
    if reference is None:
        reference = mu_averaged_cost(vtilde, psi_tilde, averaged, T)
    rows = []
    for k, e in enumerate(schedule):
        n = math.ceil(T / e.dt - 1e-9)
        dt = T / n
        per = max(1, int(round(e.Delta / dt)))
        Delta = per * dt
        meas0 = averaged.measure(np.asarray(psi_tilde(0.0), dtype=float))
        Y0 = np.asarray(meas0.mean(), dtype=float)
        acc = np.zeros(replicas)

        def observer(t, X, Y, acc=acc, Delta=Delta, dt=dt):
            tf = math.floor(t / Delta + 1e-9) * Delta
            u = np.asarray(vtilde(tf, Y))
            acc += 0.5 * np.sum(u * u, axis=1) * dt

        run_piecewise_frozen_fast(model, psi_tilde, Delta, e.delta, T, dt, Y0, seed=seed, entry=k,
                                  replicas=replicas, record_every=n, engine="numpy",
                                  observer=observer)
        se = float(acc.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
        rows.append(CostRow(e.epsilon, e.delta, Delta, dt, float(acc.mean()), se, reference, replicas))
        log.info("cost entry %d: eps=%g gap=%.4g se=%.2g", k, e.epsilon, rows[-1].gap, se)
    return CostTable(rows, regime)
