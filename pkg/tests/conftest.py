import numpy as np
import pytest

from unifield import kernels
from unifield.bundles import LagrangianProblem
from unifield.chart import Chart
from unifield.parser import parse

MINSURF_L = "sqrt(1 + v1_1^2 + v1_2^2)"
MINSURF_H = "-sqrt(1 - p1_1^2 - p1_2^2)"
SCHERK = "ln(cos(x1)) - ln(cos(x2))"

BACKENDS = ["python"] + (["cython"] if kernels.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    before = kernels.BACKEND
    kernels.use(request.param)
    yield request.param
    kernels.use(before)


@pytest.fixture
def chart():
    return Chart(2, 1)


def make_problem(L, H=None, m=2, N=1):
    ch = Chart(m, N)
    return LagrangianProblem(ch, parse(L, ch.coords), parse(H, ch.coords) if H else None)


@pytest.fixture
def minsurf():
    return make_problem(MINSURF_L, MINSURF_H)


@pytest.fixture
def minsurf_numeric():
    """Minimal surface without the closed-form Hamiltonian."""
    return make_problem(MINSURF_L)


@pytest.fixture
def quadratic():
    return make_problem("0.5*(v1_1^2 + v1_2^2)")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
