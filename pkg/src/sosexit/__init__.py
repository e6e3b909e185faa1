"""Moment and sum-of-squares bounds on exit functionals of polynomial diffusions.

Typical use::

    from sosexit import assemble, solve, load_problem

    problem, _ = load_problem("scalar")
    lower = solve(assemble(problem, 10, "min").to_conic())
"""

from .certify import CertificateError, SosCertificate, check, extract
from .cli.problem_file import load_problem, parse_problem
from .mc_oracle import McEstimate, McSettings, empirical_moments, simulate
from .model import (
    Domain,
    ExitProblem,
    InitialLaw,
    SdeModel,
    SemialgebraicPiece,
    apply_generator,
    validate,
)
from .polyalg import Polynomial, basis, parse_polynomial
from .relaxation import SdpProblem, assemble, truncation_degrees
from .sdp import SolverSettings, solve

__version__ = "0.1.0"

__all__ = [
    "CertificateError", "Domain", "ExitProblem", "InitialLaw", "McEstimate", "McSettings",
    "Polynomial", "SdeModel", "SdpProblem", "SemialgebraicPiece", "SolverSettings", "SosCertificate",
    "apply_generator", "assemble", "basis", "check", "empirical_moments", "extract", "load_problem",
    "parse_problem", "parse_polynomial", "simulate", "solve", "truncation_degrees", "validate",
]
