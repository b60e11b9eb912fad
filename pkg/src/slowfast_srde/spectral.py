"""Eigenbasis representation of fields on the interval D = (0, L).

A field is stored as the vector of its coordinates in the orthonormal
eigenbasis of the 1-D Laplacian (Dirichlet or Neumann).  All functions in this
module accept arrays whose *last* axis indexes modes, so ensembles of fields
(shape ``(R, M)``) go through the same code as single fields.

Pointwise nonlinearities are evaluated by collocation on a cell-centred grid
``x_j = (j + 1/2) L / n``.  On that grid the retained sines (Dirichlet) and
cosines (Neumann) are discretely orthogonal for ``n >= M``, so the grid round
trip is exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

BoundaryKind = Literal["dirichlet", "neumann"]

# A SpectralField is a plain ndarray of eigen-coordinates (last axis = modes).
SpectralField = np.ndarray


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenpairs ``-A e_k = alpha_k e_k`` of the spatial operator.

    ``alphas`` and ``sup_norms`` may be supplied externally (any self-adjoint
    operator sharing the Laplacian eigenfunctions); grid evaluation always uses
    the trigonometric eigenfunctions of ``boundary_kind``.
    """

    boundary_kind: BoundaryKind
    domain_length: float
    mode_count: int
    alphas: np.ndarray
    sup_norms: np.ndarray
    mass_shift: float = 0.0
    analytic: bool = True

    def __post_init__(self):
        if self.boundary_kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary kind {self.boundary_kind!r}")
        if not self.domain_length > 0:
            raise ValueError("domain_length must be positive")
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        object.__setattr__(self, "alphas", _frozen(self.alphas))
        object.__setattr__(self, "sup_norms", _frozen(self.sup_norms))
        if self.alphas.shape != (self.mode_count,) or self.sup_norms.shape != (self.mode_count,):
            raise ValueError("alphas and sup_norms must have length mode_count")
        if np.any(self.alphas <= 0):
            raise ValueError("eigenvalues of -A must be strictly positive")
        if np.any(np.diff(self.alphas) < 0):
            raise ValueError("eigenvalues must be non-decreasing")
        if np.any(self.sup_norms <= 0):
            raise ValueError("sup norms must be positive")

    @property
    def lam(self) -> float:
        """Smallest eigenvalue of -A (the dissipativity constant)."""
        return float(self.alphas[0])

    def alpha_continuation(self, k: np.ndarray) -> np.ndarray:
        """Eigenvalue of 0-based mode ``k``, also for ``k >= mode_count``.

        Analytic systems use the closed form; externally supplied ones are
        continued with the Weyl law ``alpha_k ~ k^2`` from the last mode.
        """
        k = np.asarray(k, dtype=float)
        L = self.domain_length
        if self.analytic:
            if self.boundary_kind == "dirichlet":
                return ((k + 1.0) * math.pi / L) ** 2 + self.mass_shift
            return (k * math.pi / L) ** 2 + self.mass_shift
        M = self.mode_count
        return self.alphas[-1] * ((k + 1.0) / M) ** 2

    def sup_norm_continuation(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.analytic:
            return np.full(k.shape, math.sqrt(2.0 / self.domain_length))
        return np.full(k.shape, float(self.sup_norms[-1]))

    def eigenfunctions(self, x: np.ndarray) -> np.ndarray:
        """Values ``e_k(x)``, shape ``x.shape + (M,)``."""
        x = np.asarray(x, dtype=float)[..., None]
        L = self.domain_length
        k = np.arange(self.mode_count)
        if self.boundary_kind == "dirichlet":
            return math.sqrt(2.0 / L) * np.sin((k + 1) * math.pi * x / L)
        out = math.sqrt(2.0 / L) * np.cos(k * math.pi * x / L)
        out[..., 0] = 1.0 / math.sqrt(L)
        return out


def build_eigensystem(
    boundary_kind: BoundaryKind,
    domain_length: float,
    mode_count: int,
    mass_shift: float | None = None,
) -> EigenSystem:
    """Closed-form Laplacian eigensystem on ``(0, domain_length)``.

    Neumann has a zero eigenvalue; ``mass_shift`` (default 1) is added to
    every eigenvalue so that ``-A`` stays strictly positive.  Dirichlet
    defaults to no shift.
    """
    if not domain_length > 0:
        raise ValueError("domain_length must be positive")
    if int(mode_count) != mode_count or mode_count < 1:
        raise ValueError("mode_count must be a positive integer")
    mode_count = int(mode_count)
    k = np.arange(mode_count, dtype=float)
    L = float(domain_length)
    if boundary_kind == "dirichlet":
        shift = 0.0 if mass_shift is None else float(mass_shift)
        alphas = ((k + 1) * math.pi / L) ** 2 + shift
        sup = np.full(mode_count, math.sqrt(2.0 / L))
    elif boundary_kind == "neumann":
        shift = 1.0 if mass_shift is None else float(mass_shift)
        if shift <= 0:
            raise ValueError("Neumann systems need a positive mass shift")
        alphas = (k * math.pi / L) ** 2 + shift
        sup = np.full(mode_count, math.sqrt(2.0 / L))
        sup[0] = 1.0 / math.sqrt(L)
    else:
        raise ValueError(f"unknown boundary kind {boundary_kind!r}")
    return EigenSystem(boundary_kind, L, mode_count, alphas, sup, mass_shift=shift)


def apply_semigroup(field: SpectralField, t: float, sys: EigenSystem) -> SpectralField:
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    return np.asarray(field, dtype=float) * np.exp(-sys.alphas * t)


def sobolev_norm(field: SpectralField, theta: float, sys: EigenSystem) -> np.ndarray | float:
    """``|(-A)^{theta/2} f|_H``; theta = 0 is the L2 norm."""
    c = np.asarray(field, dtype=float)
    out = np.sqrt(np.sum(sys.alphas**theta * c * c, axis=-1))
    return float(out) if out.ndim == 0 else out


def h_norm(field: SpectralField) -> np.ndarray | float:
    c = np.asarray(field, dtype=float)
    out = np.sqrt(np.sum(c * c, axis=-1))
    return float(out) if out.ndim == 0 else out


def collocation_size(mode_count: int) -> int:
    """Smallest power of two that is at least four times the mode count."""
    n = 1
    while n < 4 * mode_count:
        n *= 2
    return n


@dataclass(frozen=True, eq=False)
class Collocation:
    """Cell-centred grid together with the sampled eigenbasis."""

    n: int
    x: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)  # (n, M)
    h: float
    gram: np.ndarray = field(repr=False)  # discrete norms of the basis

    def to_grid(self, coeffs: SpectralField) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.basis.T

    def from_grid(self, values: np.ndarray) -> SpectralField:
        return (np.asarray(values, dtype=float) @ self.basis) * (self.h / self.gram)

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Midpoint-rule L2 inner product of grid functions (last axis)."""
        return np.sum(u * v, axis=-1) * self.h


_COLLOCATIONS: dict[tuple, Collocation] = {}


def collocation(sys: EigenSystem, grid_points: int | None = None) -> Collocation:
    """Collocation grid for ``sys`` (default size ``collocation_size(M)``)."""
    n = collocation_size(sys.mode_count) if grid_points is None else int(grid_points)
    if n < sys.mode_count:
        raise ValueError(f"grid_points={n} is smaller than mode_count={sys.mode_count}")
    key = (sys.boundary_kind, sys.domain_length, sys.mode_count, n)
    col = _COLLOCATIONS.get(key)
    if col is None:
        h = sys.domain_length / n
        x = (np.arange(n) + 0.5) * h
        basis = sys.eigenfunctions(x)
        gram = h * np.sum(basis * basis, axis=0)
        for a in (x, basis, gram):
            a.setflags(write=False)
        col = _COLLOCATIONS.setdefault(key, Collocation(n, x, basis, h, gram))
    return col


def to_grid(field: SpectralField, sys: EigenSystem, grid_points: int | None = None) -> np.ndarray:
    return collocation(sys, grid_points).to_grid(field)


def from_grid(values: np.ndarray, sys: EigenSystem, grid_points: int | None = None) -> SpectralField:
    values = np.asarray(values, dtype=float)
    return collocation(sys, values.shape[-1] if grid_points is None else grid_points).from_grid(values)


def phi1(z: np.ndarray) -> np.ndarray:
    """``(1 - e^{-z}) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z / 2 + z * z / 6, -np.expm1(-safe) / safe)


def ou_step_std(alphas: np.ndarray, dt: float) -> np.ndarray:
    """``sqrt((1 - e^{-2 alpha dt}) / (2 alpha))``: exact OU convolution std."""
    return np.sqrt(dt * phi1(2.0 * np.asarray(alphas, dtype=float) * dt))


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Diagonal covariance ``Q f_k = lambda_k e_k`` on the retained modes.

    ``coupling="identical"`` means the slow and fast equations are driven by
    the same Brownian motions (same cylindrical noise); ``"independent"`` uses
    disjoint ones.
    """

    lambdas: np.ndarray
    coupling: Literal["independent", "identical"] = "independent"

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _frozen(self.lambdas))
        if self.lambdas.ndim != 1 or np.any(self.lambdas < 0):
            raise ValueError("covariance eigenvalues must be a non-negative vector")
        if self.coupling not in ("independent", "identical"):
            raise ValueError(f"unknown coupling {self.coupling!r}")

    @classmethod
    def white(cls, mode_count: int, coupling: str = "independent") -> "CovarianceSpec":
        return cls(np.ones(mode_count), coupling)

    def kappa(self, sys: EigenSystem) -> float:
        """``sup_k lambda_k |e_k|_0`` over the retained modes."""
        return float(np.max(self.lambdas * sys.sup_norms))
