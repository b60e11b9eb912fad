"""Slow-fast stochastic reaction-diffusion equations in spectral coordinates.

Simulation of the coupled pair, frozen-slow invariant measures and the
averaged flow, occupation measures, and the large-deviation action
functional.
"""
__version__ = "0.1.0"

from .config import RunConfig, load_config, parse_config
from .ergodics import (AveragedModel, EmpiricalMeasure, GaussianMeasure, MeasureCache,
                       average_functional, estimate_invariant_measure, gaussian_fast_measure,
                       solve_averaged_path, verify_measure_lipschitz, verify_mixing_rate)
from .model import (CoefficientFunction, CoefficientSet, ConfigError, HypothesisParams, Model,
                    RegimeEntry, RegimeError, RegimeSchedule, check_hypotheses, check_regime,
                    probe_lipschitz)
from .occupation import Cylinder, OccupationMeasure, build_occupation, control_cost, marginal_test
from .rate import (EffectiveDiffusion, PathSpec, RateResult, action_value,
                   cost_convergence_experiment, picard_solve_control_path, residual)
from .simulator import (FeedbackControl, OpenLoopControl, SimParams, TrajectoryRecord, ZeroControl,
                        run_frozen_fast, run_pair, run_piecewise_frozen_fast, simulate)
from .spectral import CovarianceSpec, EigenSystem, build_eigensystem, from_grid, to_grid
