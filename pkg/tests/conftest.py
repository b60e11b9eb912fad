import math

import numpy as np
import pytest

from slowfast_srde.model import CoefficientFunction, CoefficientSet, Model
from slowfast_srde.spectral import CovarianceSpec, build_eigensystem

F = CoefficientFunction.make


def make_model(M=8, coupling="independent", b1=None, b2=None, s1=None, s2=None, lambdas=1.0):
    sys = build_eigensystem("dirichlet", math.pi, M)
    cov = CovarianceSpec(np.full(M, float(lambdas)), coupling)
    coeffs = CoefficientSet(b1 or F("constant", value=0.0), b2 or F("constant", value=0.0),
                            s1 or F("constant", value=1.0), s2 or F("constant", value=1.0))
    return Model(sys, sys, cov, cov, coeffs)


@pytest.fixture
def ou1():
    """One mode, no reaction, unit noise."""
    return make_model(M=1)


@pytest.fixture
def tanh8():
    return make_model(8, "identical", F("tanh", x_coef=-1.0, amp=1.0),
                      F("linear", x_coef=0.5, y_coef=-0.5))


@pytest.fixture
def linear8():
    return make_model(8, "independent", F("linear", x_coef=-1.0, y_coef=0.5),
                      F("linear", x_coef=1.0, y_coef=-0.5))


_LINES = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` records one acceptance line for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def _report(n: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
