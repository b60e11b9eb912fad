"""Occupation measures of controlled trajectories and viable-pair diagnostics.

A trajectory recorded with stride ``h`` on ``[0, T + Delta]`` defines atoms
``(t_i, u(s_j), Y(s_j))`` with ``t_i = i h`` (``i < T/h``) and
``s_j = t_i + l h`` (``l < Delta/h``), each of weight ``h^2 / Delta``.  Total
mass is exactly ``T``.  Atoms are not materialised: every statistic is a
count-weighted sum over recorded states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .simulator import TrajectoryRecord


def _ratio(a: float, b: float, what: str) -> int:
    n = int(round(a / b))
    if n < 1 or abs(n * b - a) > 1e-9 * max(a, b):
        raise ValueError(f"{what} ({a:g}) is not a whole multiple of the recording stride ({b:g})")
    return n


@dataclass(eq=False)
class OccupationMeasure:
    s: np.ndarray  # recorded times, uniform with stride h
    Y: np.ndarray  # (K, M2)
    u: np.ndarray | None  # (K, W), zero past T
    Delta: float
    T: float

    def __post_init__(self):
        self.h = float(self.s[1] - self.s[0])
        if not np.allclose(np.diff(self.s), self.h, rtol=1e-9, atol=0):
            raise ValueError("recorded times must be uniform")
        self.m = _ratio(self.Delta, self.h, "Delta")
        self.N = _ratio(self.T, self.h, "T")
        if self.s.size < self.N + self.m:
            raise ValueError("trajectory must cover [0, T + Delta]")

    @property
    def atom_weight(self) -> float:
        return self.h * self.h / self.Delta

    @property
    def atom_count(self) -> int:
        return self.N * self.m

    def counts(self, i0: int = 0, i1: int | None = None) -> np.ndarray:
        """Number of windows ``t_i`` (``i0 <= i < i1``) that cover each recorded state."""
        i1 = self.N if i1 is None else i1
        K = self.N + self.m
        # window i covers states i .. i+m-1; the count is a trapezoid in j,
        # so its second difference has four point masses
        d = np.zeros(K + 1)
        d[i0] += 1
        d[i1] -= 1
        d[i0 + self.m] -= 1
        d[i1 + self.m] += 1
        return np.cumsum(np.cumsum(d))[:K]

    def mass(self, t0: float = 0.0, t1: float | None = None) -> float:
        """Mass of ``U x Y x [t0, t1)``; time bins snap to the grid."""
        i0 = int(round(t0 / self.h))
        i1 = self.N if t1 is None else int(round(t1 / self.h))
        return float(np.sum(self.counts(i0, i1))) * self.atom_weight

    def integrate(self, f_vals: np.ndarray, t0: float = 0.0, t1: float | None = None) -> float:
        """``int f dP`` over ``[t0, t1)`` for values ``f_vals[j] = f(u(s_j), Y(s_j))``."""
        i0 = int(round(t0 / self.h))
        i1 = self.N if t1 is None else int(round(t1 / self.h))
        c = self.counts(i0, i1)
        return float(np.dot(c, f_vals[: c.size])) * self.atom_weight

    def time_cdf(self, t: float) -> float:
        return self.mass(0.0, t)

    def atoms(self, max_atoms: int = 10**6, thin_to: int = 10**5, seed: int = 0):
        """Materialise ``(t, u, Y, w)``; above ``max_atoms`` thin by stratified sampling in t.

        Each time stratum keeps an equal share of atoms with its weight
        rescaled, so the time marginal stays exact.
        """
        ii, ll = np.meshgrid(np.arange(self.N), np.arange(self.m), indexing="ij")
        ii = ii.reshape(-1)
        jj = (ii.reshape(self.N, self.m) + ll).reshape(-1)
        w = np.full(ii.size, self.atom_weight)
        if ii.size > max_atoms:
            rng = np.random.default_rng(seed)
            per = max(1, thin_to // self.N)
            pick = np.concatenate([i * self.m + rng.choice(self.m, min(per, self.m), replace=False)
                                   for i in range(self.N)])
            ii, jj = ii[pick], jj[pick]
            w = np.full(pick.size, self.h / min(per, self.m))
        t = ii * self.h
        u = None if self.u is None else self.u[jj]
        return t, u, self.Y[jj], w


def build_occupation(traj: TrajectoryRecord, Delta: float, T: float | None = None) -> OccupationMeasure:
    """Occupation measure of one recorded trajectory (single replica).

    ``T`` defaults to the recorded horizon minus ``Delta``.  The control is
    taken as zero past ``T``.
    """
    times = np.asarray(traj.times, dtype=float)
    if traj.Y.ndim != 2:
        raise ValueError("build_occupation takes a single-replica record")
    if T is None:
        T = times[-1] - Delta
    u = None
    if traj.u is not None:
        u = np.array(traj.u, dtype=float)
        u[times >= T - 1e-12 * max(T, 1.0)] = 0.0
    return OccupationMeasure(times, traj.Y, u, float(Delta), float(T))


def control_cost(occ: OccupationMeasure) -> float:
    """``(1/2) int |u|_U^2 dP``."""
    if occ.u is None:
        return 0.0
    return 0.5 * occ.integrate(np.sum(occ.u**2, axis=1))


# --------------------------------------------------------------------------
# test functionals


@dataclass(frozen=True)
class Cylinder:
    """``g(<Y, e_k>)`` with ``g`` in {clip, tanh, ramp}; all 1-Lipschitz."""

    kind: str
    mode: int

    def g(self, y):
        if self.kind == "clip":
            return np.clip(y, -10.0, 10.0)
        if self.kind == "tanh":
            return np.tanh(y)
        if self.kind == "ramp":
            # smoothed indicator of {y > 0}
            return np.clip(y + 0.5, 0.0, 1.0)
        raise ValueError(f"unknown cylinder kind {self.kind!r}")

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return self.g(np.asarray(Y)[..., self.mode])

    @property
    def name(self) -> str:
        return f"{self.kind}:{self.mode}"

    @classmethod
    def parse(cls, spec: str) -> "Cylinder":
        kind, _, mode = spec.partition(":")
        k = int(mode or 0)
        if not 0 <= k < 4:
            raise ValueError("cylinder functionals use modes 0..3")
        if kind not in ("clip", "tanh", "ramp", "one"):
            raise ValueError(f"unknown cylinder kind {kind!r}")
        return cls(kind, k)


def constant_one() -> Cylinder:
    """The constant functional; its bin integral checks the time marginal."""
    return Cylinder("one", 0)


def _eval(f: Cylinder, Y: np.ndarray) -> np.ndarray:
    if f.kind == "one":
        return np.ones(Y.shape[:-1])
    return f(Y)


def _oracle_mode(f: Cylinder, measure) -> float:
    if f.kind == "one":
        return 1.0
    return measure.expect_mode(f.g, f.mode)


@dataclass
class BinResult:
    t0: float
    t1: float
    functional: str
    occupation: float
    oracle: float
    se: float
    atoms: int

    @property
    def discrepancy(self) -> float:
        return abs(self.occupation - self.oracle)

    @property
    def z(self) -> float:
        if self.se == 0:
            return 0.0 if self.discrepancy == 0 else math.inf
        return self.discrepancy / self.se

    @property
    def inconclusive(self) -> bool:
        return self.atoms < 100


@dataclass
class MarginalReport:
    bins: list[BinResult]

    @property
    def sup_discrepancy(self) -> float:
        return max(b.discrepancy for b in self.bins)

    @property
    def sup_z(self) -> float:
        return max(b.z for b in self.bins)

    def worst(self) -> BinResult:
        return max(self.bins, key=lambda b: b.z)


def marginal_test(occs: Sequence[OccupationMeasure], measure_at: Callable[[float], object],
                  test_functions: Sequence[Cylinder], time_bins: int | Sequence[float]) -> MarginalReport:
    """Compare the Y-marginal of each time bin with ``mu^{psi(t)}``.

    ``occs`` are independent replicas (SE from their spread when there are
    at least two).  The oracle averages ``measure_at(s)`` with the same
    window weights the occupation measure gives to each recorded time ``s``.
    """
    occs = list(occs)
    ref = occs[0]
    if isinstance(time_bins, int):
        edges = np.linspace(0.0, ref.T, time_bins + 1)
    else:
        edges = np.asarray(time_bins, dtype=float)
    out = []
    oracle_cache: dict[tuple, np.ndarray] = {}
    for a, b in zip(edges[:-1], edges[1:]):
        i0, i1 = int(round(a / ref.h)), int(round(b / ref.h))
        c = ref.counts(i0, i1)
        used = np.flatnonzero(c)
        for f in test_functions:
            key = (f.kind, f.mode)
            if key not in oracle_cache:
                oracle_cache[key] = np.array([_oracle_mode(f, measure_at(s)) for s in ref.s])
            orc = float(np.dot(c[used], oracle_cache[key][used]) / c[used].sum())
            per = []
            for occ in occs:
                vals = _eval(f, occ.Y)
                per.append(float(np.dot(c, vals[: c.size]) / c.sum()))
            per = np.array(per)
            if len(occs) >= 2:
                se = float(per.std(ddof=1) / math.sqrt(len(occs)))
            else:
                from .ergodics import integrated_autocorr_time
                vals = _eval(f, ref.Y)[used]
                tau = integrated_autocorr_time(vals)
                se = float(vals.std() * math.sqrt(tau / max(used.size, 1)))
            if f.kind == "one":
                se = 0.0
            out.append(BinResult(float(a), float(b), f.name, float(per.mean()), orc, se,
                                 (i1 - i0) * ref.m))
    return MarginalReport(out)


def export_csv(occ: OccupationMeasure, path, max_atoms: int = 10**6, seed: int = 0):
    """Atoms as rows ``(t, |u|_U, Y_0..Y_3, w)`` (thinned above ``max_atoms``)."""
    from .io import write_table
    t, u, Y, w = occ.atoms(max_atoms=max_atoms, seed=seed)
    unorm = np.zeros_like(t) if u is None else np.linalg.norm(u, axis=1)
    k = min(4, Y.shape[1])
    cols = ["t", "u_norm"] + [f"Y{j}" for j in range(k)] + ["w"]
    rows = (([t[i], unorm[i]] + list(Y[i, :k]) + [w[i]]) for i in range(t.size))
    return write_table(path, "occupation", cols, rows,
                       {"Delta": occ.Delta, "T": occ.T, "stride": occ.h, "atoms": int(t.size)})
