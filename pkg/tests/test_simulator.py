import math

import numpy as np
import pytest

from slowfast_srde.model import CoefficientFunction, ConfigError
from slowfast_srde.simulator import (BlowUpError, OpenLoopControl, SimParams, run_pair, simulate,
                                     simulate_slow)

from conftest import F, make_model

X0 = np.array([2.0, -1.0, 0.5, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("coupling", ["identical", "independent"])
@pytest.mark.parametrize("s1", [F("constant", value=1.0), F("sine", base=1.0, amp=0.3)])
def test_engines_agree(coupling, s1):
    m = make_model(8, coupling, F("tanh", x_coef=-1.0, amp=1.0),
                   F("linear", x_coef=0.5, y_coef=-0.5), s1=s1)
    p = SimParams(0.1, 0.1, 5e-4)
    kw = dict(seed=3, replicas=3, record_every=100)
    a = simulate(m, p, X0, np.zeros(8), 0.2, engine="compiled", **kw)
    b = simulate(m, p, X0, np.zeros(8), 0.2, engine="numpy", **kw)
    np.testing.assert_allclose(a.X, b.X, atol=1e-10)
    np.testing.assert_allclose(a.Y, b.Y, atol=1e-10)


@pytest.mark.parametrize("engine", ["compiled", "numpy"])
def test_chunking_and_replica_selection_are_invisible(tanh8, engine):
    p = SimParams(0.1, 0.1, 5e-4)
    a = simulate(tanh8, p, X0, np.zeros(8), 0.1, seed=1, replicas=4, record_every=20, engine=engine)
    b = simulate(tanh8, p, X0, np.zeros(8), 0.1, seed=1, replicas=4, record_every=20,
                 engine=engine, chunk=37)
    c = simulate(tanh8, p, X0, np.zeros(8), 0.1, seed=1, replicas=[2], record_every=20,
                 engine=engine)
    np.testing.assert_array_equal(a.X, b.X)
    if engine == "compiled":
        np.testing.assert_array_equal(a.X[2], c.X[0])
    else:
        # batched BLAS products may round differently for another batch size
        np.testing.assert_allclose(a.X[2], c.X[0], rtol=0, atol=1e-14)
    assert a.times[-1] == pytest.approx(0.1)


def test_noiseless_heat_flow_is_exact():
    m = make_model(4, s1=F("constant", value=0.0), s2=F("constant", value=0.0))
    x0 = np.ones(4)
    rec = simulate(m, SimParams(1.0, 1.0, 0.05), x0, x0, 1.0, record_every=20)
    np.testing.assert_allclose(rec.X[0, -1], np.exp(-m.sys1.alphas), rtol=1e-12)
    np.testing.assert_allclose(rec.Y[0, -1], np.exp(-m.sys2.alphas / 1.0), rtol=1e-12)


def test_ou_transition_is_exact_for_coarse_steps(ou1):
    # exponential Euler reproduces the OU law for any step
    R = 4000
    rec = simulate(ou1, SimParams(1.0, 1.0, 0.1), [0.0], [0.0], 1.0, replicas=R, record_every=10,
                   seed=5)
    x = rec.X[:, -1, 0]
    var = (1 - math.exp(-2.0)) / 2
    se = var * math.sqrt(2 / (R - 1))
    assert abs(x.var(ddof=1) - var) < 4 * se


def test_slow_only_path_matches_coupled_slow_component():
    m = make_model(4, "independent", F("linear", x_coef=-1.0), F("linear", x_coef=1.0, y_coef=-0.5))
    x0 = np.array([1.0, 0.5, 0.0, 0.0])
    full = simulate(m, SimParams(0.05, 0.1, 1e-3), x0, np.zeros(4), 0.2, seed=2, replicas=3,
                    record_every=200, engine="numpy")
    slow = simulate_slow(m, 0.05, 1e-3, x0, 0.2, seed=2, replicas=3, record_every=200)
    np.testing.assert_array_equal(full.X, slow.X)
    with pytest.raises(ConfigError):
        simulate_slow(make_model(4, b1=F("linear", y_coef=1.0)), 0.1, 1e-3, x0, 0.1)


def test_open_loop_control_shifts_the_mean():
    # the control enters through sigma1 Q1: dX = (-X + u) dt, noise negligible
    m = make_model(1)
    t = np.linspace(0, 1, 11)
    u = np.zeros((11, m.control_width))
    u[:, 0] = 1.0  # slow block only; the fast block is scaled by 1/(delta sqrt(eps))
    ctl = OpenLoopControl(t, u, end=1.0)
    rec = run_pair(m, SimParams(1e-14, 1.0, 1e-3), [0.0], [0.0], 1.0, control=ctl, record_every=1000)
    assert rec.X[-1, 0] == pytest.approx(1 - math.exp(-1), abs=1e-6)
    assert rec.budget_used == pytest.approx(1.0, rel=1e-9)


def test_blowup_is_recorded_or_raised():
    cubic = CoefficientFunction.custom(lambda x, X, Y: X**3, lip_x=1e9, lip_y=0.0)
    m = make_model(1, b1=cubic)
    rec = simulate(m, SimParams(1.0, 1.0, 1e-2), [5.0], [0.0], 1.0, replicas=2)
    assert np.all(np.isfinite(rec.blowup_times))
    assert np.isnan(rec.X[0, -1, 0])
    with pytest.raises(BlowUpError):
        run_pair(m, SimParams(1.0, 1.0, 1e-2), [5.0], [0.0], 1.0)
