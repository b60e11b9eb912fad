import numpy as np
import pytest

from slowfast_srde.ergodics import GaussianMeasure
from slowfast_srde.io import read_table
from slowfast_srde.occupation import (Cylinder, OccupationMeasure, build_occupation, constant_one,
                                      control_cost, export_csv, marginal_test)
from slowfast_srde.simulator import TrajectoryRecord


def _occ(T=1.0, Delta=0.2, h=0.01, u=None, seed=0):
    s = np.arange(round((T + Delta) / h) + 1) * h
    Y = np.random.default_rng(seed).normal(size=(s.size, 3))
    return OccupationMeasure(s, Y, u, Delta, T)


def test_counts_match_brute_force_and_mass_is_T():
    o = _occ()
    brute = np.zeros(o.s.size)
    for i in range(o.N):
        brute[i : i + o.m] += 1
    np.testing.assert_array_equal(o.counts(), brute[: o.N + o.m])
    assert o.mass() == pytest.approx(1.0, rel=1e-12)
    assert o.mass(0.0, 0.3) + o.mass(0.3, 1.0) == pytest.approx(1.0, rel=1e-12)
    assert o.time_cdf(0.25) == pytest.approx(0.25, rel=1e-12)


def test_delta_must_be_whole_strides():
    with pytest.raises(ValueError):
        _occ(Delta=0.205)
    s = np.arange(50) * 0.01
    with pytest.raises(ValueError):
        OccupationMeasure(s, np.zeros((50, 1)), None, 0.2, 1.0)  # too short


def test_integrate_and_control_cost():
    T, h, Delta = 1.0, 0.01, 0.1
    K = round((T + Delta) / h) + 1
    s = np.arange(K) * h
    rec = TrajectoryRecord(s, np.zeros((K, 1)), np.zeros((K, 2)), u=np.ones((K, 2)))
    full = OccupationMeasure(s, rec.Y, rec.u, Delta, T)
    # |u|^2 = 2 everywhere: cost is T
    assert control_cost(full) == pytest.approx(T, rel=1e-12)
    assert full.integrate(np.ones(K)) == pytest.approx(T, rel=1e-12)
    # zero control past T: windows reaching beyond T lose h (m - 1) / 2 of mass
    occ = build_occupation(rec, Delta, T)
    m = round(Delta / h)
    assert control_cost(occ) == pytest.approx(T - h * (m - 1) / 2, rel=1e-12)
    assert control_cost(_occ()) == 0.0


def test_atoms_keep_the_time_marginal():
    o = _occ()
    t, u, Y, w = o.atoms()
    assert t.size == o.atom_count and w.sum() == pytest.approx(o.T)
    t2, _, _, w2 = o.atoms(max_atoms=100, thin_to=50, seed=1)
    assert w2.sum() == pytest.approx(o.T)
    assert t2.size < t.size


def test_cylinders():
    assert Cylinder.parse("tanh:2") == Cylinder("tanh", 2)
    Y = np.array([[-20.0, 0.0], [0.2, 1.0]])
    np.testing.assert_allclose(Cylinder("clip", 0)(Y), [-10.0, 0.2])
    np.testing.assert_allclose(Cylinder("ramp", 1)(Y), [0.5, 1.0])
    for bad in ("clip:4", "cube:0"):
        with pytest.raises(ValueError):
            Cylinder.parse(bad)


def test_marginal_test_against_its_own_law():
    # iid standard normal fast states: no discrepancy beyond noise
    occs = [_occ(seed=r) for r in range(16)]
    law = GaussianMeasure(np.zeros(3), np.ones(3))
    rep = marginal_test(occs, lambda s: law, [Cylinder("clip", 0), Cylinder("tanh", 1)], 2)
    assert rep.sup_z < 4.0
    shifted = GaussianMeasure(np.full(3, 1.0), np.ones(3))
    bad = marginal_test(occs, lambda s: shifted, [Cylinder("clip", 0)], 2)
    assert bad.sup_z > 10.0


def test_constant_functional_has_no_discrepancy():
    occs = [_occ(seed=r) for r in range(4)]
    law = GaussianMeasure(np.zeros(3), np.ones(3))
    rep = marginal_test(occs, lambda s: law, [constant_one()], 4)
    assert rep.sup_discrepancy == 0.0 and rep.sup_z == 0.0


def test_export_round_trip(tmp_path):
    o = _occ(T=0.1, Delta=0.05)
    export_csv(o, tmp_path / "occ.csv")
    kind, cols, rows = read_table(tmp_path / "occ.csv")
    assert kind == "occupation" and cols[:2] == ["t", "u_norm"]
    w = np.array([float(r[-1]) for r in rows])
    assert len(rows) == o.atom_count and w.sum() == pytest.approx(0.1)
