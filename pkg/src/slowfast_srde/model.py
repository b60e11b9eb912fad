"""Coefficient registry, standing-hypothesis checks and regime schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .spectral import Collocation, CovarianceSpec, EigenSystem, collocation, collocation_size


class ConfigError(ValueError):
    """Invalid model or run configuration."""


class RegimeError(ConfigError):
    """A schedule entry violates the time-step resolution rule."""


# --------------------------------------------------------------------------
# coefficient registry

# (kind code, parameter names) -- codes are shared with the compiled kernels
REGISTRY: dict[str, tuple[int, tuple[str, ...]]] = {
    "constant": (0, ("value",)),
    "linear": (1, ("const", "x_coef", "y_coef")),
    "tanh": (2, ("const", "x_coef", "amp", "y_scale", "x_scale")),
    "sine": (3, ("base", "amp", "y_freq", "x_freq")),
}
CUSTOM_CODE = -1
N_PARAMS = 5


@dataclass(frozen=True, eq=False)
class CoefficientFunction:
    """Scalar coefficient ``f(x, X, Y)`` with declared Lipschitz constants.

    Built-ins (see ``REGISTRY``):

    * ``constant``: ``value``
    * ``linear``:   ``const + x_coef*X + y_coef*Y``
    * ``tanh``:     ``const + x_coef*X + amp*tanh(y_scale*Y + x_scale*X)``
    * ``sine``:     ``base * (1 + amp*sin(y_freq*Y + x_freq*X))``

    Custom callables are accepted through :meth:`custom`; they must be
    vectorised, stateless and come with their own constants.  They run only
    on the numpy engine.
    """

    kind: str
    params: tuple[float, ...] = ()
    lip_x: float = 0.0
    lip_y: float = 0.0
    y_growth: float = 0.0  # exponent of |Y| in the growth bound
    growth_const: float = 0.0
    bounds: tuple[float, float] | None = None  # (inf f, sup f) when bounded
    fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def make(cls, kind: str, **params) -> "CoefficientFunction":
        if kind not in REGISTRY:
            raise ConfigError(f"unknown coefficient kind {kind!r}; choose from {sorted(REGISTRY)}")
        names = REGISTRY[kind][1]
        unknown = set(params) - set(names)
        if unknown:
            raise ConfigError(f"{kind}: unknown parameters {sorted(unknown)}")
        defaults = {"y_scale": 1.0, "amp": 0.0, "base": 1.0}
        vals = tuple(float(params.get(n, defaults.get(n, 0.0))) for n in names)
        p = dict(zip(names, vals))
        if kind == "constant":
            v = p["value"]
            return cls(kind, vals, 0.0, 0.0, 0.0, abs(v), (v, v))
        if kind == "linear":
            c, a, b = p["const"], p["x_coef"], p["y_coef"]
            return cls(kind, vals, abs(a), abs(b), 1.0 if b else 0.0,
                       max(abs(c), abs(a), abs(b)),
                       (c, c) if a == 0 and b == 0 else None)
        if kind == "tanh":
            c, a, amp, ys, xs = (p[n] for n in names)
            bounds = (c - abs(amp), c + abs(amp)) if a == 0 else None
            return cls(kind, vals, abs(a) + abs(amp * xs), abs(amp * ys), 0.0,
                       max(abs(c) + abs(amp), abs(a)), bounds)
        base, amp, yf, xf = (p[n] for n in names)
        if abs(amp) >= 1:
            raise ConfigError("sine: |amp| must be < 1 so the coefficient keeps its sign")
        lo, hi = sorted((base * (1 - abs(amp)), base * (1 + abs(amp))))
        return cls(kind, vals, abs(base * amp * xf), abs(base * amp * yf), 0.0,
                   abs(base) * (1 + abs(amp)), (lo, hi))

    @classmethod
    def custom(cls, fn: Callable, *, lip_x: float, lip_y: float, y_growth: float = 1.0,
               growth_const: float = math.inf, bounds: tuple[float, float] | None = None):
        return cls("custom", (), float(lip_x), float(lip_y), float(y_growth),
                   float(growth_const), bounds, fn)

    @property
    def code(self) -> int:
        return CUSTOM_CODE if self.kind == "custom" else REGISTRY[self.kind][0]

    @property
    def packed(self) -> np.ndarray:
        out = np.zeros(N_PARAMS)
        out[: len(self.params)] = self.params
        return out

    @property
    def depends_on_y(self) -> bool:
        return self.lip_y > 0

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, x, X, Y):
        if self.kind == "custom":
            return self.fn(x, X, Y)
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full(np.broadcast(X, Y).shape, p[0])
        if self.kind == "linear":
            return p[0] + p[1] * X + p[2] * Y
        if self.kind == "tanh":
            return p[0] + p[1] * X + p[2] * np.tanh(p[3] * Y + p[4] * X)
        return p[0] * (1.0 + p[1] * np.sin(p[2] * Y + p[3] * X))

    def to_dict(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom"}
        return {"kind": self.kind, **dict(zip(REGISTRY[self.kind][1], self.params))}


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Reaction terms ``b1, b2`` and noise multipliers ``sigma1, sigma2``."""

    b1: CoefficientFunction
    b2: CoefficientFunction
    sigma1: CoefficientFunction
    sigma2: CoefficientFunction

    def items(self):
        return (("b1", self.b1), ("b2", self.b2), ("sigma1", self.sigma1), ("sigma2", self.sigma2))

    @property
    def compiled_ok(self) -> bool:
        return all(f.code != CUSTOM_CODE for _, f in self.items())

    @property
    def slow_depends_on_y(self) -> bool:
        return self.b1.depends_on_y or self.sigma1.depends_on_y

    @property
    def sigma1_bounds_sq(self) -> tuple[float, float] | None:
        """``(c0, c1)`` with ``c0 <= sigma1^2 <= c1`` when sigma1 is bounded."""
        b = self.sigma1.bounds
        if b is None:
            return None
        lo, hi = b
        c1 = max(lo * lo, hi * hi)
        c0 = 0.0 if lo <= 0 <= hi else min(lo * lo, hi * hi)
        return c0, c1

    @property
    def sigma2_bound(self) -> float:
        """``c`` with ``sup_Y |sigma2(x, X, Y)| <= c (1 + |X|)`` (inf if none)."""
        s = self.sigma2
        if s.y_growth > 0:
            return math.inf
        return s.growth_const


# --------------------------------------------------------------------------
# the model bundle


@dataclass(frozen=True, eq=False)
class Model:
    """Everything that defines the coupled slow-fast system."""

    sys1: EigenSystem
    sys2: EigenSystem
    cov1: CovarianceSpec
    cov2: CovarianceSpec
    coeffs: CoefficientSet

    def __post_init__(self):
        if self.sys1.domain_length != self.sys2.domain_length:
            raise ConfigError("slow and fast systems must live on the same interval")
        if self.cov1.lambdas.shape != (self.sys1.mode_count,):
            raise ConfigError("covariance 1 must have one eigenvalue per slow mode")
        if self.cov2.lambdas.shape != (self.sys2.mode_count,):
            raise ConfigError("covariance 2 must have one eigenvalue per fast mode")
        if self.cov1.coupling != self.cov2.coupling:
            raise ConfigError("both covariances must declare the same coupling")
        if self.identical_noise and self.sys1.mode_count != self.sys2.mode_count:
            raise ConfigError("identical coupling needs equal mode counts")

    @property
    def identical_noise(self) -> bool:
        return self.cov1.coupling == "identical"

    @property
    def grid_points(self) -> int:
        return collocation_size(max(self.sys1.mode_count, self.sys2.mode_count))

    @property
    def col1(self) -> Collocation:
        return collocation(self.sys1, self.grid_points)

    @property
    def col2(self) -> Collocation:
        return collocation(self.sys2, self.grid_points)

    @property
    def x(self) -> np.ndarray:
        return self.col1.x

    @property
    def control_width(self) -> int:
        """Length of a control vector in U (retained coordinates)."""
        if self.identical_noise:
            return self.sys1.mode_count
        return self.sys1.mode_count + self.sys2.mode_count

    def split_control(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split U coordinates into the parts seen by Q1 and Q2.

        Under independent coupling a table with only M1 columns is read as a
        pure slow-noise control (zero fast block).
        """
        u = np.asarray(u, dtype=float)
        M1, M2 = self.sys1.mode_count, self.sys2.mode_count
        if self.identical_noise:
            return u, u
        if u.shape[-1] == M1 and M1 != M1 + M2:
            return u, np.zeros(u.shape[:-1] + (M2,))
        if u.shape[-1] != M1 + M2:
            raise ConfigError(f"control has {u.shape[-1]} coordinates, expected {M1} or {M1 + M2}")
        return u[..., :M1], u[..., M1:]


# --------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class HypothesisParams:
    beta1: float = 0.75
    rho1: float = 4.0
    beta2: float = 0.75
    rho2: float = 4.0


@dataclass(frozen=True)
class HypothesisFlag:
    passed: bool
    margin: float
    note: str = ""


@dataclass
class HypothesisReport:
    lam: float
    kappa: tuple[float, float]
    zeta: tuple[float, float]
    zeta_tail_bound: tuple[float, float]
    growth_zeta: float
    K2: float
    integral_value: float
    integral_closed_form: float
    frak_L: float
    flags: dict[str, HypothesisFlag]

    @property
    def passed(self) -> bool:
        """Hypotheses 1-3 (what averaging needs); H4 is reported separately."""
        return all(f.passed for k, f in self.flags.items() if not k.startswith("H4"))

    @property
    def rate_ready(self) -> bool:
        return self.passed and self.flags["H4"].passed

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "kappa": list(self.kappa),
            "zeta": list(self.zeta),
            "zeta_tail_bound": list(self.zeta_tail_bound),
            "growth_zeta": self.growth_zeta,
            "K2": self.K2,
            "integral_value": self.integral_value,
            "integral_closed_form": self.integral_closed_form,
            "frak_L": self.frak_L,
            "passed": self.passed,
            "rate_ready": self.rate_ready,
            "flags": {k: {"passed": f.passed, "margin": f.margin, "note": f.note}
                      for k, f in self.flags.items()},
        }


@dataclass(frozen=True)
class SeriesValue:
    value: float  # partial sum plus tail estimate
    partial: float  # sum over retained modes only
    tail_bound: float  # rigorous upper bound on the omitted tail
    converged: bool


_TAIL_TERMS = 1 << 20


def zeta_series(sys: EigenSystem, beta: float) -> SeriesValue:
    """``sum_k alpha_k^{-beta} |e_k|_0^2`` with a tail from the known k^2 decay."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    M = sys.mode_count
    partial = float(np.sum(sys.alphas ** (-beta) * sys.sup_norms**2))
    if 2 * beta <= 1:
        return SeriesValue(math.inf, partial, math.inf, False)
    if sys.analytic:
        c_w = (math.pi / sys.domain_length) ** 2
        k_off = 1.0 if sys.boundary_kind == "dirichlet" else 0.0
    else:
        c_w = sys.alphas[-1] / M**2
        k_off = 1.0
    s2 = float(sys.sup_norm_continuation(np.array([M]))[0]) ** 2
    pref = s2 * c_w ** (-beta)

    def upper_integral(a: float) -> float:
        return pref * a ** (1 - 2 * beta) / (2 * beta - 1)

    start = M - 1 + k_off
    if start > 0:
        tail_bound = upper_integral(start)
    else:
        first = float(sys.alpha_continuation(np.array([M]))[0]) ** (-beta) * s2
        tail_bound = first + upper_integral(start + 1)
    k = np.arange(M, M + _TAIL_TERMS, dtype=float)
    near = float(np.sum(sys.alpha_continuation(k) ** (-beta) * sys.sup_norm_continuation(k) ** 2))
    # remainder beyond the explicit block, midpoint-corrected integral
    far = upper_integral(M + _TAIL_TERMS - 0.5 + k_off)
    return SeriesValue(partial + near + far, partial, tail_bound, True)


def gamma_integral(beta2: float, rho2: float, lam: float) -> tuple[float, float]:
    """``int_0^inf s^{-a} e^{-b s} ds`` by quadrature and by the Gamma closed form.

    ``a = beta2 (rho2-2)/rho2`` and ``b = lam (rho2+2)/rho2``.
    """
    a = beta2 * (rho2 - 2) / rho2
    b = lam * (rho2 + 2) / rho2
    if not 0 <= a < 1:
        return math.inf, math.inf
    closed = b ** (a - 1) * special.gamma(1 - a)
    head, _ = integrate.quad(lambda s: math.exp(-b * s), 0.0, 1.0, weight="alg",
                             wvar=(-a, 0.0), epsabs=0.0, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(lambda s: s ** (-a) * math.exp(-b * s), 1.0, math.inf,
                             epsabs=0.0, epsrel=1e-12, limit=200)
    return head + tail, closed


def check_hypotheses(model: Model, params: HypothesisParams = HypothesisParams()) -> HypothesisReport:
    """Evaluate Hypotheses 1-4 numerically for ``model``.

    Pure: the sampled checks use a fixed internal seed.
    """
    c = model.coeffs
    s1, s2 = model.sys1, model.sys2
    flags: dict[str, HypothesisFlag] = {}
    lam = min(s1.lam, s2.lam)
    kap = (model.cov1.kappa(s1), model.cov2.kappa(s2))
    z1 = zeta_series(s1, params.beta1)
    z2 = zeta_series(s2, params.beta2)
    a1 = params.beta1 * (params.rho1 - 2) / params.rho1
    a2 = params.beta2 * (params.rho2 - 2) / params.rho2

    flags["H1.lambda"] = HypothesisFlag(lam > 0, lam)
    flags["H1.beta_range"] = HypothesisFlag(
        0 < params.beta1 < 1 and 0 < params.beta2 < 1,
        min(params.beta1, params.beta2, 1 - params.beta1, 1 - params.beta2),
        "d = 1 requires beta_i in (0, 1)")
    flags["H1.zeta"] = HypothesisFlag(
        z1.converged and z2.converged, min(params.beta1, params.beta2) - 0.5,
        "" if z1.converged and z2.converged else "zeta series diverges (need 2*beta > 1)")
    kap_ok = all(math.isfinite(k) for k in kap)
    flags["H1.kappa"] = HypothesisFlag(kap_ok, math.inf if kap_ok else -math.inf,
                                       f"kappa = ({kap[0]:.6g}, {kap[1]:.6g})")
    flags["H1.exponent"] = HypothesisFlag(a1 < 1 and a2 < 1, 1 - max(a1, a2))

    x = model.x
    zeros = np.zeros_like(x)
    b2_0 = float(np.max(np.abs(c.b2(x, zeros, zeros))))
    s2_0 = float(np.max(np.abs(c.sigma2(x, zeros, zeros))))
    ok = math.isfinite(b2_0) and math.isfinite(s2_0)
    flags["H2.1"] = HypothesisFlag(ok, math.inf if ok else -math.inf,
                                   f"sup|b2(x,0,0)| = {b2_0:.6g}, sup|sigma2(x,0,0)| = {s2_0:.6g}")
    flags["H2.2"] = HypothesisFlag(c.b2.lip_y < lam, lam - c.b2.lip_y)

    cbound = c.sigma2_bound
    rng = np.random.default_rng(20240531)
    Xs = rng.uniform(-10, 10, 4096)
    Ys = rng.uniform(-50, 50, 4096)
    xs = rng.uniform(0, s1.domain_length, 4096)
    worst = float(np.max(np.abs(c.sigma2(xs, Xs, Ys)) / (1 + np.abs(Xs))))
    flags["H2.3"] = HypothesisFlag(math.isfinite(cbound) and worst <= cbound + 1e-9,
                                   cbound - worst, "sigma2 bounded in Y")

    integral, closed = gamma_integral(params.beta2, params.rho2, lam)
    if z2.converged and math.isfinite(integral):
        K2 = (params.beta2 / math.e) ** a2 * z2.value ** ((params.rho2 - 2) / params.rho2) \
            * kap[1] ** (2 / params.rho2)
        frak = c.b2.lip_y / lam + math.sqrt(K2 * c.sigma2.lip_y**2 * integral)
    else:
        K2, frak = math.inf, math.inf
    flags["H2.4"] = HypothesisFlag(frak < 1, 1 - frak)

    gz = max(c.b1.y_growth, c.sigma1.y_growth)
    flags["H3"] = HypothesisFlag(gz < 1 - a1 and math.isfinite(c.b1.growth_const + c.sigma1.growth_const),
                                 (1 - a1) - gz)

    b = c.sigma1_bounds_sq
    if not c.sigma1.depends_on_y and c.sigma1.y_growth == 0:
        flags["H4"] = HypothesisFlag(True, math.inf, "sigma1 independent of Y")
    elif b is not None and b[0] > 0:
        flags["H4"] = HypothesisFlag(True, b[0], "sigma1^2 bounded in [c0, c1]")
    else:
        flags["H4"] = HypothesisFlag(False, 0.0 if b is None else b[0],
                                     "sigma1 neither Y-independent nor bounded away from 0")

    return HypothesisReport(lam, kap, (z1.value, z2.value), (z1.tail_bound, z2.tail_bound),
                            gz, K2, integral, closed, frak, flags)


# --------------------------------------------------------------------------
# Lipschitz probing


@dataclass(frozen=True)
class LipschitzObservation:
    observed: float
    declared: float
    worst_pair: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return self.observed <= self.declared + 1e-9


def probe_lipschitz(coeffs: CoefficientSet, box: tuple[float, float], samples: int, seed: int,
                    domain_length: float = math.pi) -> dict[str, LipschitzObservation]:
    """Worst sampled difference quotient for each declared constant.

    Half the pairs are uniform in the box, half are close pairs (separation
    below 1e-3 of the box width) that probe the local slope.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    lo, hi = box
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, domain_length, samples)
    base = rng.uniform(lo, hi, (3, samples))
    far = rng.uniform(lo, hi, samples)
    near = base[0] + rng.uniform(-1, 1, samples) * 1e-3 * (hi - lo)
    other = np.where(np.arange(samples) % 2 == 0, far, near)
    out = {}
    for name, f in coeffs.items():
        for arg in ("X", "Y"):
            a, b, fixed = base[0], other, base[2]
            if arg == "X":
                fa, fb = f(x, a, fixed), f(x, b, fixed)
            else:
                fa, fb = f(x, fixed, a), f(x, fixed, b)
            sep = np.abs(a - b)
            q = np.where(sep > 0, np.abs(fa - fb) / np.where(sep > 0, sep, 1.0), 0.0)
            i = int(np.argmax(q))
            declared = f.lip_x if arg == "X" else f.lip_y
            out[f"L{arg}_{name}"] = LipschitzObservation(float(q[i]), declared,
                                                         (float(x[i]), float(a[i]), float(b[i]), float(fixed[i])))
    return out


# --------------------------------------------------------------------------
# regime schedules


@dataclass(frozen=True)
class RegimeEntry:
    epsilon: float
    delta: float
    Delta: float
    dt: float

    def __post_init__(self):
        if min(self.epsilon, self.delta, self.Delta, self.dt) <= 0:
            raise ConfigError("regime parameters must be positive")

    @property
    def noise_ratio(self) -> float:
        """delta / sqrt(epsilon)."""
        return self.delta / math.sqrt(self.epsilon)

    @property
    def window_ratio(self) -> float:
        """delta / (Delta sqrt(epsilon))."""
        return self.delta / (self.Delta * math.sqrt(self.epsilon))

    @property
    def dt_limit(self) -> float:
        return self.delta**2 / 20.0


@dataclass(frozen=True)
class RegimeSchedule:
    entries: tuple[RegimeEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        eps = [e.epsilon for e in self.entries]
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("schedule entries must be ordered by strictly decreasing epsilon")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @classmethod
    def from_rule(cls, epsilons: Sequence[float], delta: Callable[[float], float],
                  Delta: Callable[[float, float], float], dt_fraction: float = 1.0) -> "RegimeSchedule":
        """Entries with ``dt = dt_fraction * delta^2 / 20``."""
        out = []
        for e in epsilons:
            d = delta(e)
            out.append(RegimeEntry(e, d, Delta(d, e), dt_fraction * d * d / 20.0))
        return cls(tuple(out))


@dataclass
class RegimeReport:
    passed: bool
    noise_ratios: list[float]
    window_ratios: list[float]
    noise_exponent: float  # fitted p in delta/sqrt(eps) ~ eps^p
    window_exponent: float
    dt_margins: list[float]
    reasons: list[str]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_regime(schedule: RegimeSchedule) -> RegimeReport:
    """Check that a schedule descends into the regime ``delta/sqrt(eps) -> 0``.

    Raises :class:`RegimeError` on an under-resolved time step and
    :class:`ConfigError` on a schedule too short to show a trend.
    """
    entries = list(schedule)
    if len(entries) < 2:
        raise ConfigError("a regime schedule needs at least two entries")
    for i, e in enumerate(entries):
        if e.dt > e.dt_limit * (1 + 1e-12):
            raise RegimeError(f"entry {i}: dt={e.dt:g} exceeds delta^2/20={e.dt_limit:g}")
    r1 = [e.noise_ratio for e in entries]
    r2 = [e.window_ratio for e in entries]
    log_eps = np.log([e.epsilon for e in entries])
    p1 = float(np.polyfit(log_eps, np.log(r1), 1)[0])
    p2 = float(np.polyfit(log_eps, np.log(r2), 1)[0])
    reasons = []
    if any(b >= a for a, b in zip(r1, r1[1:])):
        reasons.append("delta/sqrt(eps) is not strictly decreasing")
    if any(b >= a for a, b in zip(r2, r2[1:])):
        reasons.append("delta/(Delta sqrt(eps)) is not strictly decreasing")
    if p1 <= 0:
        reasons.append(f"delta/sqrt(eps) does not extrapolate to 0 (exponent {p1:.3g})")
    if p2 <= 0:
        reasons.append(f"delta/(Delta sqrt(eps)) does not extrapolate to 0 (exponent {p2:.3g})")
    margins = [e.dt_limit - e.dt for e in entries]
    return RegimeReport(not reasons, r1, r2, p1, p2, margins, reasons)
