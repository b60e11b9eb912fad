import math

import numpy as np
import pytest

from slowfast_srde.config import load_config, parse_config
from slowfast_srde.model import ConfigError
from slowfast_srde.simulator import SimParams
from slowfast_srde.studies import (EnsembleCache, ExperimentPlan, TerminalFunctional,
                                   laplace_estimate, run_averaging_study, run_laplace_study,
                                   run_viable_pair_study, simulate_ensemble)


def _decoupled(epsilons=(0.04, 0.01)):
    coeff = lambda kind, **kw: {"kind": kind, **kw}
    return parse_config({
        "eigensystem": {"slow_modes": 2, "fast_modes": 2},
        "coefficients": {"b1": coeff("linear", x_coef=-1.0), "b2": coeff("linear", x_coef=0.5, y_coef=-0.5),
                         "sigma1": coeff("constant", value=1.0), "sigma2": coeff("constant", value=1.0)},
        "regime": {"epsilons": list(epsilons), "delta_power": 0.75, "Delta_scale": 0.5,
                   "Delta_power": 1 / 6},
        "initial": {"X0": [1.0, 0.5]},
        "averaging": {"T": 1.0, "stride": 1e-3},
        "viable": {"T": 1.0, "stride": 1e-3, "bins": 2},
        "rng": {"seed": 17},
    })


def test_plan_validation():
    cfg = _decoupled()
    with pytest.raises(ConfigError):
        ExperimentPlan("averaging", cfg, replicas=0)
    with pytest.raises(ConfigError):
        ExperimentPlan("bogus", cfg)
    plan = ExperimentPlan("averaging", cfg, replicas=2, settings={"T": 0.5})
    assert plan.seed == 17 and plan.get("T", 1.0) == 0.5 and plan.get("stride", 0) == 1e-3


def test_slow_noise_error_scales_with_root_epsilon():
    # b1 ignores Y: X - psi is sqrt(eps) times a fixed Gaussian process
    tab = run_averaging_study(ExperimentPlan("averaging", _decoupled(), replicas=64))
    rms, se = tab.column("rms_sup_error"), tab.column("rms_se")
    assert abs(rms[0] - 2 * rms[1]) <= 3 * math.hypot(se[0], 2 * se[1])
    assert rms[0] - rms[1] >= 3 * math.hypot(se[0], se[1])
    assert tab.checks["monotone_within_2se"] and tab.finite


def test_reruns_and_shared_ensembles_are_identical():
    cfg = _decoupled()
    cache = EnsembleCache()
    a = run_averaging_study(ExperimentPlan("averaging", cfg, replicas=4, entries=[0]), cache)
    b = run_averaging_study(ExperimentPlan("averaging", cfg, replicas=4, entries=[0]))
    assert a.body() == b.body()
    v = run_viable_pair_study(ExperimentPlan("viable_pair", cfg, replicas=4, entries=[0]), cache)
    assert len(cache._store) == 1 and v.finite


def test_worker_count_does_not_change_compiled_ensembles(monkeypatch):
    cfg = load_config("preset:tanh")
    X0 = np.zeros(8)
    X0[0] = 1.0
    kw = dict(seed=3, entry=0, replicas=4, record_every=50)
    p = SimParams(0.1, 0.1, 5e-4)
    one = simulate_ensemble(cfg.model, p, X0, np.zeros(8), 0.1, workers=1, **kw)
    two = simulate_ensemble(cfg.model, p, X0, np.zeros(8), 0.1, workers=2, **kw)
    np.testing.assert_array_equal(one.X, two.X)
    np.testing.assert_array_equal(one.Y, two.Y)


def test_laplace_estimator():
    v, se, ess = laplace_estimate(np.zeros(10), 0.1)
    assert v == 0.0 and se == 0.0 and ess == pytest.approx(10)
    h = np.array([0.0, 1.0])
    v, _, _ = laplace_estimate(h, 1.0)
    assert v == pytest.approx(-math.log((1 + math.exp(-1)) / 2))


def test_laplace_with_zero_functional():
    plan = ExperimentPlan("laplace", load_config("preset:ou1"), replicas=64)
    tab = run_laplace_study(plan, TerminalFunctional("zero"))
    assert np.all(tab.column("lhs") == 0.0) and np.all(tab.column("rhs") == 0.0)
    assert tab.passed


def test_laplace_rerun_is_byte_identical():
    cfg = load_config("preset:ou1")
    a = run_laplace_study(ExperimentPlan("laplace", cfg, replicas=128))
    b = run_laplace_study(ExperimentPlan("laplace", cfg, replicas=128))
    assert a.body() == b.body()
    c = run_laplace_study(ExperimentPlan("laplace", cfg, replicas=128, seed=cfg.seed + 1))
    assert a.body() != c.body()


def test_terminal_functionals():
    h = TerminalFunctional("clipped_quadratic", a=2.0, c=1.0, mode=1)
    np.testing.assert_allclose(h(np.array([[0.0, 0.5], [0.0, 3.0]])), [0.5, 1.0])
    lin = TerminalFunctional("clipped_linear", a=1.0, c=0.2)
    np.testing.assert_allclose(lin.H([-1.0, 0.1]), [-0.2, 0.1])
    with pytest.raises(ConfigError):
        TerminalFunctional("cubic").H([0.0])
