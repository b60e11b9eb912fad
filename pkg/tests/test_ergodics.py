import math

import numpy as np
import pytest

from slowfast_srde.ergodics import (AveragedModel, EmpiricalMeasure, MeasureCache, MixingResult,
                                    TrapezoidWeights, average_functional, estimate_invariant_measure,
                                    gaussian_fast_measure, integrated_autocorr_time, normal_expect,
                                    psi2, solve_averaged_path)
from slowfast_srde.simulator import OpenLoopControl

from conftest import F, make_model


def test_gaussian_measure_matches_linear_fast_equation(linear8):
    X = np.zeros(8)
    X[0], X[2] = 1.0, -2.0
    g = gaussian_fast_measure(linear8, X)
    rate = linear8.sys2.alphas + 0.5
    np.testing.assert_allclose(g.means, X / rate, atol=1e-12)
    np.testing.assert_allclose(g.variances, 1 / (2 * rate))
    assert gaussian_fast_measure(make_model(2, b2=F("tanh", amp=0.1)), np.zeros(2)) is None


def test_normal_expect_moments():
    m, s = np.array([0.3, -1.0]), np.array([2.0, 0.5])
    np.testing.assert_allclose(normal_expect(lambda y: y * y, m, s), m**2 + s**2, rtol=1e-13)
    np.testing.assert_allclose(normal_expect(lambda y: y**4, 0.0, 1.0), 3.0, rtol=1e-13)


def test_psi2_series_and_closed_form_agree():
    z = np.array([0.0, 1e-6, 0.3, 0.4999, 0.5001, 2.0, 60.0])
    ref = np.where(z < 1e-3, 0.5 - z / 3, (1 - (1 + z) * np.exp(-z)) / np.where(z == 0, 1, z) ** 2)
    np.testing.assert_allclose(psi2(z), ref, rtol=1e-12)


def test_trapezoid_weights_are_exact_for_linear_forcing():
    # y' = -a y + t on one step, y(0) = 0
    a, h = np.array([0.7]), 0.3
    W = TrapezoidWeights.build(a, h)
    exact = (h / a - (1 - np.exp(-a * h)) / a**2)
    np.testing.assert_allclose(W.apply(np.zeros(1), 0.0, h), exact, rtol=1e-13)


def test_iat_of_ar1():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(200_000)
    assert integrated_autocorr_time(z) == pytest.approx(1.0, abs=0.05)
    x = np.empty_like(z)
    x[0] = z[0]
    for i in range(1, z.size):
        x[i] = 0.5 * x[i - 1] + z[i]
    assert integrated_autocorr_time(x) == pytest.approx(3.0, rel=0.05)


def test_sampled_measure_agrees_with_closed_form(linear8):
    X = np.zeros(8)
    X[0] = 1.5
    meas = estimate_invariant_measure(linear8, X, horizon=1000.0, dt=0.05, thinning=2, seed=4)
    g = gaussian_fast_measure(linear8, X)
    for k in (0, 1):
        m, se = average_functional(meas, lambda Y: Y[:, k])
        assert abs(m - g.means[k]) < 4 * se
    with pytest.raises(TypeError):
        average_functional(g, lambda Y: Y[:, 0])


def test_empirical_measure_validates_weights():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((3, 2)), np.array([1.0, -1.0, 1.0]))
    m = EmpiricalMeasure.uniform(np.arange(6.0).reshape(3, 2))
    np.testing.assert_allclose(m.mean(), [2.0, 3.0])


def test_averaged_path_of_linear_model(linear8):
    av = AveragedModel(linear8)
    assert av.provider == "gaussian"
    X0 = np.zeros(8)
    X0[0], X0[1] = 1.0, 0.5
    path = solve_averaged_path(X0, 1.0, 1e-3, av)
    a = linear8.sys1.alphas
    rate = a + 1 - 0.5 / (a + 0.5)
    np.testing.assert_allclose(path.fields[-1], X0 * np.exp(-rate), atol=1e-7)
    np.testing.assert_allclose(path.at(0.5), X0 * np.exp(-0.5 * rate), atol=1e-6)


def test_averaged_path_with_open_loop_control(ou1):
    av = AveragedModel(ou1)
    u = np.zeros((2, ou1.control_width))
    u[:, 0] = 1.0
    ctl = OpenLoopControl(np.array([0.0, 0.5]), u, end=1.0)
    path = solve_averaged_path([0.0], 1.0, 1e-3, av, ctl)
    assert path.fields[-1, 0] == pytest.approx(1 - math.exp(-1), abs=1e-9)


def test_measure_cache_reuses_nodes():
    c = MeasureCache(spacing=0.25)
    calls = []
    make = lambda node: calls.append(node) or len(calls)
    c.get(np.array([0.01, 0.0]), make)
    c.get(np.array([-0.02, 0.03]), make)
    assert len(calls) == 1 and len(c) == 1


def test_mixing_band():
    r = MixingResult(np.array([4.0, 16.0]), np.array([1.0, 0.5]), -0.5, 0.0, 32)
    assert r.passed
    assert not MixingResult(r.times, r.rms, -0.3, 0.0, 32).passed
