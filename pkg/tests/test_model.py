import math

import numpy as np
import pytest
from scipy import special

from slowfast_srde.model import (CoefficientFunction, ConfigError, HypothesisParams, RegimeEntry,
                                 RegimeError, RegimeSchedule, check_hypotheses, check_regime,
                                 gamma_integral, probe_lipschitz, zeta_series)
from slowfast_srde.spectral import build_eigensystem

from conftest import F, make_model


def test_zeta_series_dirichlet_pi_over_three():
    s = build_eigensystem("dirichlet", math.pi, 8)
    z = zeta_series(s, 1.0)
    assert z.converged
    assert z.value == pytest.approx(math.pi / 3, abs=1e-6)
    assert z.partial <= math.pi / 3 <= z.partial + z.tail_bound


def test_zeta_series_diverges_below_half():
    z = zeta_series(build_eigensystem("dirichlet", math.pi, 4), 0.5)
    assert not z.converged and math.isinf(z.value)


def test_gamma_integral_closed_form():
    value, closed = gamma_integral(0.5, 4.0, 1.0)
    exact = 1.5 ** -0.75 * special.gamma(0.75)
    assert exact == pytest.approx(0.904097672478, rel=1e-11)
    assert value == pytest.approx(exact, rel=1e-10)
    assert closed == pytest.approx(exact, rel=1e-14)


def test_hypotheses_pass_for_tanh_model(tanh8):
    rep = check_hypotheses(tanh8)
    assert rep.passed and rep.rate_ready
    assert rep.integral_value == pytest.approx(rep.integral_closed_form, rel=1e-10)
    assert all(not math.isnan(f.margin) for f in rep.flags.values())


def test_zeta_divergence_is_flagged(tanh8):
    rep = check_hypotheses(tanh8, HypothesisParams(beta2=0.5))
    assert not rep.flags["H1.zeta"].passed and not rep.passed


def test_fast_drift_too_strong_in_y_fails():
    m = make_model(4, b2=F("linear", y_coef=1.5))
    rep = check_hypotheses(m)
    assert not rep.flags["H2.2"].passed and not rep.passed


def test_sigma1_vanishing_is_not_rate_ready():
    m = make_model(4, s1=F("linear", y_coef=1.0))
    assert not check_hypotheses(m).flags["H4"].passed


def test_coefficient_registry():
    f = F("tanh", x_coef=-1.0, amp=2.0)
    assert f.lip_x == 1.0 and f.lip_y == 2.0
    np.testing.assert_allclose(f(0.0, np.array([1.0]), np.array([0.0])), [-1.0])
    with pytest.raises(ConfigError):
        F("cubic")
    with pytest.raises(ConfigError):
        F("linear", slope=1.0)
    with pytest.raises(ConfigError):
        F("sine", amp=1.0)


def test_probe_respects_declared_constants(tanh8):
    obs = probe_lipschitz(tanh8.coeffs, (-3.0, 3.0), 2000, seed=0)
    assert all(o.ok for o in obs.values())
    bad = CoefficientFunction.custom(lambda x, X, Y: 3 * X, lip_x=1.0, lip_y=0.0)
    from slowfast_srde.model import CoefficientSet
    c = CoefficientSet(bad, tanh8.coeffs.b2, tanh8.coeffs.sigma1, tanh8.coeffs.sigma2)
    assert not probe_lipschitz(c, (-1.0, 1.0), 200, seed=0)["LX_b1"].ok


def _schedule(epsilons, delta, Delta, frac=1.0):
    return RegimeSchedule.from_rule(epsilons, delta, Delta, frac)


def test_regime_accepts_normalised_cube_root_window():
    s = _schedule([0.1, 0.01, 0.001], lambda e: e, lambda d, e: 0.5 * e ** (1 / 3))
    assert check_regime(s).passed


def test_regime_rejects_square_root_window():
    # delta = eps, Delta = sqrt(delta): delta/(Delta sqrt(eps)) stays 1
    s = _schedule([0.1, 0.01, 0.001], lambda e: e, lambda d, e: math.sqrt(d))
    rep = check_regime(s)
    assert not rep.passed and rep.reasons


def test_regime_errors():
    with pytest.raises(RegimeError):
        check_regime(RegimeSchedule((RegimeEntry(0.1, 0.1, 0.5, 1e-3), RegimeEntry(0.01, 0.01, 0.2, 1e-6))))
    with pytest.raises(ConfigError):
        check_regime(RegimeSchedule((RegimeEntry(0.1, 0.1, 0.5, 1e-4),)))
    with pytest.raises(ConfigError):
        RegimeSchedule((RegimeEntry(0.01, 0.1, 0.5, 1e-4), RegimeEntry(0.1, 0.1, 0.5, 1e-4)))
