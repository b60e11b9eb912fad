import math

import numpy as np
import pytest

from slowfast_srde.spectral import (CovarianceSpec, apply_semigroup, build_eigensystem, collocation,
                                    collocation_size, from_grid, phi1, sobolev_norm, to_grid)


def test_dirichlet_eigenvalues_on_pi():
    s = build_eigensystem("dirichlet", math.pi, 5)
    np.testing.assert_allclose(s.alphas, [1, 4, 9, 16, 25])
    np.testing.assert_allclose(s.sup_norms, math.sqrt(2 / math.pi))
    assert s.lam == pytest.approx(1.0)


def test_neumann_mass_shift_defaults_to_one():
    s = build_eigensystem("neumann", math.pi, 3)
    np.testing.assert_allclose(s.alphas, [1, 2, 5])
    s2 = build_eigensystem("neumann", math.pi, 3, mass_shift=0.5)
    assert s2.lam == pytest.approx(0.5)
    with pytest.raises(ValueError):
        build_eigensystem("neumann", math.pi, 3, mass_shift=0.0)


@pytest.mark.parametrize("bad", [dict(boundary_kind="robin"), dict(domain_length=-1.0),
                                 dict(mode_count=0)])
def test_eigensystem_rejects_bad_input(bad):
    args = dict(boundary_kind="dirichlet", domain_length=math.pi, mode_count=4)
    args.update(bad)
    with pytest.raises(ValueError):
        build_eigensystem(**args)


def test_collocation_size_is_power_of_two():
    assert [collocation_size(m) for m in (1, 2, 3, 8, 9)] == [4, 8, 16, 32, 64]


@pytest.mark.parametrize("kind", ["dirichlet", "neumann"])
def test_grid_round_trip_is_exact_on_retained_modes(kind):
    s = build_eigensystem(kind, 2.0, 8)
    c = np.random.default_rng(1).normal(size=(3, 8))
    np.testing.assert_allclose(from_grid(to_grid(c, s), s), c, atol=1e-12)


def test_discrete_basis_is_orthogonal():
    s = build_eigensystem("dirichlet", math.pi, 8)
    col = collocation(s)
    G = col.basis.T @ col.basis * col.h
    np.testing.assert_allclose(G, np.diag(np.diag(G)), atol=1e-12)


def test_semigroup_and_norms():
    s = build_eigensystem("dirichlet", math.pi, 3)
    f = np.array([1.0, 1.0, 1.0])
    np.testing.assert_allclose(apply_semigroup(f, 0.5, s), np.exp(-0.5 * s.alphas))
    assert sobolev_norm(f, 0.0, s) == pytest.approx(math.sqrt(3))
    assert sobolev_norm(f, 1.0, s) == pytest.approx(math.sqrt(1 + 4 + 9))


def test_phi1_removable_singularity():
    z = np.array([0.0, 1e-8, 1e-3, 1.0, 30.0])
    exact = np.array([1.0, 1.0 - 5e-9, -math.expm1(-1e-3) / 1e-3, 1 - math.exp(-1), 1 / 30])
    np.testing.assert_allclose(phi1(z), exact, rtol=1e-12)


def test_covariance_validation():
    with pytest.raises(ValueError):
        CovarianceSpec(np.array([-1.0]))
    with pytest.raises(ValueError):
        CovarianceSpec(np.ones(2), "shared")
    s = build_eigensystem("dirichlet", math.pi, 4)
    assert CovarianceSpec.white(4).kappa(s) == pytest.approx(math.sqrt(2 / math.pi))
