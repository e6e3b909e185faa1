import numpy as np
import pytest

from sosexit.cli.problem_file import load_problem
from sosexit.model import Domain, ExitProblem, InitialLaw, SdeModel, SemialgebraicPiece, ball_polynomial
from sosexit.polyalg import Polynomial, parse_polynomial, sum_of_squares

BUNDLED = ["scalar", "unit_ball", "quartic_ball", "quartic_ball_3d"]


def brownian_ball(n, point=None, g=None):
    """Brownian motion (B = I) in the unit ball, default g = |z|^2."""
    zero = Polynomial.zero(n)
    one = Polynomial.constant(1.0, n)
    sde = SdeModel(tuple(zero for _ in range(n)),
                   tuple(tuple(one if i == j else zero for j in range(n)) for i in range(n)))
    ball = ball_polynomial(n, 1.0)
    dom = Domain(SemialgebraicPiece((ball,)), (SemialgebraicPiece((), (-ball,), "sphere"),))
    g = sum_of_squares(n) if g is None else g
    return ExitProblem(sde, dom, g, InitialLaw.dirac(point or [0.0] * n), f"ball{n}")


def scalar_problem(g="x1^2", point=0.5):
    p = lambda s: parse_polynomial(s, 1)
    sde = SdeModel((p("1 + 2*x1"),), ((p("1.4142135623730951*x1"),),))
    dom = Domain(SemialgebraicPiece((p("x1*(1 - x1)"), p("1 - x1^2"))),
                 (SemialgebraicPiece((), (p("x1*(1 - x1)"),), "endpoints"),))
    return ExitProblem(sde, dom, p(g), InitialLaw.dirac([point]), "scalar")


@pytest.fixture(scope="session")
def scalar():
    return load_problem("scalar")[0]


@pytest.fixture(scope="session")
def quartic():
    return load_problem("quartic_ball")[0]


@pytest.fixture(scope="session")
def unit_ball():
    return load_problem("unit_ball")[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance report -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
