"""Frozen-slow invariant measures, averaged coefficients and the averaged flow."""
from __future__ import annotations

import logging
import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .model import Model
from .simulator import ControlSignal, OpenLoopControl, ZeroControl, run_frozen_fast, _steps
from .spectral import phi1

log = logging.getLogger(__name__)

# Gauss-Hermite rule for N(0, 1), probabilists' weights normalised to 1
_GH_X, _GH_W = hermegauss(48)
_GH_W = _GH_W / _GH_W.sum()


def normal_expect(g: Callable, mean, std, nodes: int = 48) -> np.ndarray:
    """``E g(Z)`` for ``Z ~ N(mean, std^2)``, elementwise over broadcast arrays."""
    if nodes == 48:
        x, w = _GH_X, _GH_W
    else:
        x, w = hermegauss(nodes)
        w = w / w.sum()
    mean = np.asarray(mean, dtype=float)[..., None]
    std = np.asarray(std, dtype=float)[..., None]
    return np.sum(g(mean + std * x) * w, axis=-1)


def integrated_autocorr_time(series: np.ndarray, c: float = 5.0) -> float:
    """Sokal's self-consistent window estimate of the IAT (>= 1)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n] / (n * var)
    tau = 2.0 * np.cumsum(acf) - 1.0
    for w in range(1, n):
        if w >= c * tau[w]:
            return max(float(tau[w]), 1.0)
    return max(float(tau[-1]), 1.0)


# --------------------------------------------------------------------------
# measures


@dataclass(eq=False)
class EmpiricalMeasure:
    """Weighted sample of fast fields (rows of ``samples``)."""

    samples: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)
    iat: float = 1.0  # integrated autocorrelation time of mode 0, in samples

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if self.samples.shape[0] < 1 or w.shape != (self.samples.shape[0],) or np.any(w < 0):
            raise ValueError("need at least one sample and one non-negative weight per sample")
        self.weights = w / w.sum()

    @classmethod
    def uniform(cls, samples, **kw) -> "EmpiricalMeasure":
        samples = np.atleast_2d(samples)
        return cls(samples, np.full(samples.shape[0], 1.0 / samples.shape[0]), **kw)

    def mean(self) -> np.ndarray:
        return self.weights @ self.samples

    def variance(self) -> np.ndarray:
        d = self.samples - self.mean()
        return self.weights @ (d * d)

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
        return average_functional(self, f)

    def expect_grid(self, f: Callable, x: np.ndarray, Xg: np.ndarray, basis: np.ndarray) -> np.ndarray:
        """``E f(x, X(x), Y(x))`` on the grid."""
        Yg = self.samples @ basis.T
        return self.weights @ f(x, Xg, Yg)


@dataclass(eq=False)
class GaussianMeasure:
    """Product Gaussian law of the fast modes (linear fast drift, constant sigma2)."""

    means: np.ndarray
    variances: np.ndarray

    def mean(self) -> np.ndarray:
        return self.means

    def variance(self) -> np.ndarray:
        return self.variances

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.means + np.sqrt(self.variances) * rng.standard_normal((n, self.means.size))

    def expect_mode(self, g: Callable, k: int) -> float:
        return float(normal_expect(g, self.means[k], math.sqrt(self.variances[k])))

    def expect_grid(self, f: Callable, x: np.ndarray, Xg: np.ndarray, basis: np.ndarray) -> np.ndarray:
        """Per grid point ``Y(x) ~ N(sum m_k e_k(x), sum v_k e_k(x)^2)``."""
        m = basis @ self.means
        s = np.sqrt((basis**2) @ self.variances)
        return normal_expect(lambda y: f(x[:, None], Xg[:, None], y), m, s)


def gaussian_fast_measure(model: Model, X: np.ndarray) -> GaussianMeasure | None:
    """Closed-form mu^X when b2 = c + a X + b Y (b < 0 allowed) and sigma2 is constant."""
    c = model.coeffs
    if c.b2.kind not in ("linear", "constant") or not c.sigma2.is_constant:
        return None
    p = c.b2.params
    const, a, b = (p[0], 0.0, 0.0) if c.b2.kind == "constant" else p
    col1, col2 = model.col1, model.col2
    proj2 = col2.basis * (col2.h / col2.gram)
    rate = model.sys2.alphas - b
    if np.any(rate <= 0):
        return None
    drift = const * (np.ones(col2.n) @ proj2) + a * (proj2.T @ (col1.basis @ np.asarray(X, dtype=float)))
    s = c.sigma2.params[0]
    return GaussianMeasure(drift / rate, (s * model.cov2.lambdas) ** 2 / (2.0 * rate))


def average_functional(measure, f: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """Weighted mean of ``f`` and its autocorrelation-corrected standard error.

    ``f`` maps an ``(N, M)`` array of fields to ``N`` values.  The SE uses
    the integrated autocorrelation time of the ``f`` series itself.
    """
    if isinstance(measure, GaussianMeasure):
        raise TypeError("use expect_mode/expect_grid for closed-form measures")
    vals = np.asarray(f(measure.samples), dtype=float).reshape(-1)
    w = measure.weights
    mean = float(np.sum(w * vals))
    n = vals.size
    if n < 2 or np.ptp(vals) == 0:
        return mean, 0.0
    var = float(np.sum(w * (vals - mean) ** 2))
    n_eff = 1.0 / float(np.sum(w * w))
    tau = integrated_autocorr_time(vals)
    return mean, math.sqrt(var * tau / n_eff)


def estimate_invariant_measure(model: Model, X_frozen, *, horizon: float, burn_in: float | None = None,
                               thinning: int = 1, dt: float = 0.05, seed: int = 0, entry: int = 0,
                               replica: int = 0, Y0=None) -> EmpiricalMeasure:
    """Sample mu^X from one long frozen-slow run in fast natural time.

    ``burn_in`` defaults to 20 / lambda.  Samples are the states every
    ``thinning`` steps after burn-in.
    """
    lam = model.sys2.lam
    if burn_in is None:
        burn_in = 20.0 / lam
    if burn_in < 10.0 / lam:
        warnings.warn(f"burn-in {burn_in:g} is shorter than 10 relaxation times ({10.0 / lam:g})")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    M2 = model.sys2.mode_count
    Y0 = np.zeros(M2) if Y0 is None else np.asarray(Y0, dtype=float)
    n_burn = _steps(burn_in, dt) if burn_in > 0 else 0
    n_main = _steps(horizon, dt)
    rec = run_frozen_fast(model, X_frozen, Y0, (n_burn + n_main) * dt, dt, seed=seed, entry=entry,
                          replicas=[replica], record_every=thinning).replica(0)
    keep = rec.times > n_burn * dt * (1 + 1e-12)
    samples = rec.Y[keep]
    tau = integrated_autocorr_time(samples[:, 0])
    prov = {"X_frozen": np.asarray(X_frozen, dtype=float).tolist(), "burn_in": burn_in,
            "horizon": horizon, "thinning": thinning, "dt": dt, "seed": seed}
    return EmpiricalMeasure.uniform(samples, provenance=prov, iat=tau)


# --------------------------------------------------------------------------
# mixing diagnostics


@dataclass
class MixingResult:
    times: np.ndarray
    rms: np.ndarray
    slope: float
    reference: float
    replicas: int

    band: tuple[float, float] = (-0.65, -0.4)

    @property
    def passed(self) -> bool:
        return self.band[0] <= self.slope <= self.band[1]


def verify_mixing_rate(model: Model, X_frozen, f: Callable[[np.ndarray], np.ndarray],
                       times, replicas: int, *, reference: float | None = None, dt: float = 0.05,
                       Y0=None, seed: int = 0, entry: int = 0) -> MixingResult:
    """RMS error of ``(1/T) int_0^T f(Y) dt`` against the long-run value, fitted on log T.

    ``f`` acts on batched fields ``(R, M)``.  Without ``reference`` the
    long-run value comes from the closed-form measure (when available).
    """
    times = np.asarray(times, dtype=float)
    if replicas < 16:
        raise ValueError("verify_mixing_rate needs at least 16 replicas")
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be increasing with at least two points")
    M2 = model.sys2.mode_count
    if reference is None:
        g = gaussian_fast_measure(model, X_frozen)
        if g is None:
            raise ValueError("no closed-form reference; pass reference=")
        reference = float(np.mean(f(g.sample(200_000, np.random.default_rng(seed)))))
    Y0 = np.zeros(M2) if Y0 is None else np.asarray(Y0, dtype=float)
    acc = np.zeros(replicas)
    marks = {_steps(T, dt): i for i, T in enumerate(times)}
    out = np.zeros((times.size, replicas))
    step = [0]

    def observer(t, X, Y):
        # left-point rule for the time integral
        acc[:] += f(Y) * dt
        step[0] += 1
        i = marks.get(step[0])
        if i is not None:
            out[i] = acc / times[i]

    run_frozen_fast(model, X_frozen, Y0, times[-1], dt, seed=seed, entry=entry, replicas=replicas,
                    record_every=_steps(times[-1], dt), observer=observer)
    rms = np.sqrt(np.mean((out - reference) ** 2, axis=1))
    if np.all(rms == 0):
        return MixingResult(times, rms, -math.inf, reference, replicas)
    slope = float(np.polyfit(np.log(times), np.log(rms), 1)[0])
    return MixingResult(times, rms, slope, reference, replicas)


def coupling_decay_rate(model: Model, X_frozen, Y1, Y2, horizon: float, *, dt: float = 0.01,
                        seed: int = 0, replicas: int = 8) -> float:
    """Fitted exponential rate of ``E |Y^{X,Y1} - Y^{X,Y2}|_H`` under common noise."""
    ra = run_frozen_fast(model, X_frozen, Y1, horizon, dt, seed=seed, replicas=replicas)
    rb = run_frozen_fast(model, X_frozen, Y2, horizon, dt, seed=seed, replicas=replicas)
    d = np.mean(np.linalg.norm(ra.Y - rb.Y, axis=-1), axis=0)
    ok = d > 1e-12 * d[0]
    ok[0] = True
    slope = np.polyfit(ra.times[ok], np.log(d[ok]), 1)[0]
    return float(-slope)


@dataclass
class LipschitzVerdict:
    passed: bool
    inconclusive: bool
    difference: float
    bound: float
    se: float


def verify_measure_lipschitz(model: Model, X1, X2, f: Callable, L_f: float, *, horizon: float = 2000.0,
                             dt: float = 0.05, thinning: int = 5, seed: int = 0) -> LipschitzVerdict:
    """Check ``|F(X1) - F(X2)| <= L_f |X1 - X2|_H + 3 SE`` with sampled measures."""
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    m1 = estimate_invariant_measure(model, X1, horizon=horizon, dt=dt, thinning=thinning,
                                    seed=seed, replica=0)
    m2 = estimate_invariant_measure(model, X2, horizon=horizon, dt=dt, thinning=thinning,
                                    seed=seed, replica=1)
    v1, s1 = average_functional(m1, f)
    v2, s2 = average_functional(m2, f)
    dist = float(np.linalg.norm(X1 - X2))
    se = math.hypot(s1, s2)
    bound = L_f * dist
    inconclusive = dist > 0 and max(s1, s2) > 0.05 * L_f * dist
    diff = abs(v1 - v2)
    return LipschitzVerdict(diff <= bound + 3 * se, inconclusive, diff, bound, se)


# --------------------------------------------------------------------------
# averaged model


class MeasureCache:
    """Lattice memo of mu^X on the first modes; insert-once, thread safe."""

    def __init__(self, spacing: float = 0.25, lattice_modes: int = 2):
        self.spacing = spacing
        self.lattice_modes = lattice_modes
        self._store: dict[tuple, tuple[np.ndarray, object]] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def key(self, X: np.ndarray) -> tuple:
        return tuple(int(round(v / self.spacing)) for v in X[: self.lattice_modes])

    def node(self, X: np.ndarray) -> np.ndarray:
        n = np.array(X, dtype=float)
        n[: self.lattice_modes] = np.array(self.key(X), dtype=float) * self.spacing
        return n

    def get(self, X: np.ndarray, make: Callable[[np.ndarray], object]):
        """Return ``(node, measure)``; estimates at the node on a miss."""
        k = self.key(X)
        hit = self._store.get(k)
        if hit is not None:
            return hit
        node = self.node(X)
        meas = make(node)
        with self._lock:
            self.misses += 1
            return self._store.setdefault(k, (node, meas))

    def __len__(self):
        return len(self._store)


class AveragedModel:
    """``Bbar(X) = P E_{mu^X} b1`` and ``qbar(X) = E_{mu^X} sigma1^2`` on the grid.

    ``provider`` is ``"gaussian"`` (closed-form mu^X), ``"empirical"``
    (sampled, cached on a lattice) or ``"auto"`` (closed form when the fast
    model allows it).
    """

    def __init__(self, model: Model, provider: str = "auto", *, cache: MeasureCache | None = None,
                 erg_horizon: float = 500.0, erg_dt: float = 0.05, thinning: int = 5, seed: int = 0):
        self.model = model
        if provider == "auto":
            provider = "gaussian" if gaussian_fast_measure(model, np.zeros(model.sys1.mode_count)) \
                is not None else "empirical"
        if provider == "gaussian" and gaussian_fast_measure(model, np.zeros(model.sys1.mode_count)) is None:
            raise ValueError("closed-form measure needs a linear fast drift and constant sigma2")
        self.provider = provider
        self.cache = cache or MeasureCache()
        self.erg = dict(horizon=erg_horizon, dt=erg_dt, thinning=thinning, seed=seed)
        col = model.col1
        self.x = col.x
        self.basis1 = col.basis
        self.proj1 = col.basis * (col.h / col.gram)
        self.basis2 = model.col2.basis

    def measure(self, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        if self.provider == "gaussian":
            return gaussian_fast_measure(self.model, X)
        _, meas = self.cache.get(X, lambda node: estimate_invariant_measure(self.model, node, **self.erg))
        return meas

    def certificate(self, X: np.ndarray, lipschitz: float) -> float:
        """Interpolation error bound ``L |X - node|_H`` for cached lookups."""
        if self.provider == "gaussian":
            return 0.0
        return lipschitz * float(np.linalg.norm(np.asarray(X) - self.cache.node(np.asarray(X))))

    def expect_grid(self, X: np.ndarray, f: Callable, measure=None) -> np.ndarray:
        """``E_{mu^X} f(x, X(x), Y(x))`` on the collocation grid."""
        X = np.asarray(X, dtype=float)
        Xg = self.basis1 @ X
        meas = self.measure(X) if measure is None else measure
        return meas.expect_grid(f, self.x, Xg, self.basis2)

    def Bbar(self, X: np.ndarray) -> np.ndarray:
        b1 = self.model.coeffs.b1
        X = np.asarray(X, dtype=float)
        if not b1.depends_on_y:
            Xg = self.basis1 @ X
            return b1(self.x, Xg, np.zeros_like(Xg)) @ self.proj1
        return self.expect_grid(X, b1) @ self.proj1

    def qbar(self, X: np.ndarray) -> np.ndarray:
        s1 = self.model.coeffs.sigma1
        X = np.asarray(X, dtype=float)
        if not s1.depends_on_y:
            Xg = self.basis1 @ X
            return s1(self.x, Xg, np.zeros_like(Xg)) ** 2
        return self.expect_grid(X, lambda x, Xg, Yg: s1(x, Xg, Yg) ** 2)


# --------------------------------------------------------------------------
# averaged flow


def psi2(z: np.ndarray) -> np.ndarray:
    """``(1 - (1 + z) e^{-z}) / z^2`` with a series near 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 0.0)
    series = np.zeros_like(zs)
    term_fact = 2.0  # (j+2)!
    for j in range(16):
        series += (-1) ** j * (j + 1) / term_fact * zs**j
        term_fact *= j + 3
    zl = np.where(small, 1.0, z)
    big = (-np.expm1(-zl) - zl * np.exp(-zl)) / zl**2
    return np.where(small, series, big)


@dataclass
class TrapezoidWeights:
    """Exponential-trapezoid weights for ``y' = -alpha y + F(t)`` over one step."""

    decay: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray

    @classmethod
    def build(cls, alphas: np.ndarray, h: float) -> "TrapezoidWeights":
        z = alphas * h
        p1 = phi1(z)
        p2 = psi2(z)
        return cls(np.exp(-z), h * p2, h * (p1 - p2))

    def apply(self, y, F_left, F_right):
        return self.decay * y + self.w_left * F_left + self.w_right * F_right


@dataclass
class AveragedPath:
    times: np.ndarray
    fields: np.ndarray  # (K, M1)
    iterations: int = 0

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        i = min(i, len(self.times) - 2)
        if i < 0:
            return self.fields[0].copy()
        a = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - a) * self.fields[i] + a * self.fields[i + 1]


def averaged_forcing(averaged: AveragedModel, control: ControlSignal | None):
    """``F(t, psi) = Bbar(psi) + P(sigma1(psi) Q1 u(t))`` for open-loop or zero control."""
    model = averaged.model
    s1 = model.coeffs.sigma1
    lam1 = model.cov1.lambdas

    def F(t, psi, t_ctrl=None):
        out = averaged.Bbar(psi)
        if isinstance(control, OpenLoopControl):
            u = control.at(np.array([t if t_ctrl is None else t_ctrl]))[0]
            u1, _ = model.split_control(u)
            Xg = averaged.basis1 @ psi
            sig = s1(averaged.x, Xg, np.zeros_like(Xg))
            out = out + (sig * (averaged.basis1 @ (lam1 * u1))) @ averaged.proj1
        return out

    return F


def solve_averaged_path(X0, horizon: float, dt: float, averaged: AveragedModel,
                        control: ControlSignal | None = None, *, tol: float = 1e-12,
                        max_iter: int = 100) -> AveragedPath:
    """Averaged mild equation by the implicit exponential trapezoid rule.

    Each step is solved by fixed-point iteration to ``tol``.  With a control,
    sigma1 must not depend on Y (otherwise use the rate module's feedback
    form); piecewise-constant controls use their value on the step at both
    ends.
    """
    model = averaged.model
    if control is not None and not isinstance(control, (OpenLoopControl, ZeroControl)):
        raise ValueError("only zero or open-loop controls are supported here")
    if isinstance(control, OpenLoopControl) and model.coeffs.sigma1.depends_on_y:
        raise ValueError("controlled averaged path needs sigma1 independent of Y")
    n = _steps(horizon, dt)
    W = TrapezoidWeights.build(model.sys1.alphas, dt)
    F = averaged_forcing(averaged, control)
    out = np.empty((n + 1, model.sys1.mode_count))
    out[0] = np.asarray(X0, dtype=float)
    total_it = 0
    for k in range(n):
        t0 = k * dt
        psi = out[k]
        F0 = F(t0, psi, t0)
        nxt = W.apply(psi, F0, F0)
        for it in range(max_iter):
            cand = W.apply(psi, F0, F(t0 + dt, nxt, t0))
            diff = float(np.max(np.abs(cand - nxt)))
            nxt = cand
            if diff < tol:
                break
        total_it += it + 1
        out[k + 1] = nxt
    return AveragedPath(np.arange(n + 1) * dt, out, total_it)
