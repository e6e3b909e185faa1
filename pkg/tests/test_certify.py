import json

import numpy as np
import pytest

from conftest import brownian_ball, scalar_problem
from sosexit.certify import (
    CertificateError,
    CheckTolerances,
    MultiplierTerm,
    SosCertificate,
    check,
    extract,
    gram_polynomial,
    identity_residual,
)
from sosexit.polyalg import Polynomial, parse_polynomial
from sosexit.relaxation import assemble
from sosexit.sdp import SolverSettings, solve


def P(text, n=1):
    return parse_polynomial(text, n)


def certified(problem, r, sense, settings=None, **kw):
    sdp = assemble(problem, r, sense, **kw)
    sol = solve(sdp.to_conic(), settings)
    return sdp, sol, extract(sdp, sol)


def test_gram_polynomial():
    S = np.array([[1.0, 0.5], [0.5, 2.0]])
    assert gram_polynomial(S, 1, 1) == P("1 + x1 + 2*x1^2")
    with pytest.raises(CertificateError):
        gram_polynomial(np.eye(3), 1, 1)


def test_scalar_r10_lower():
    prob = scalar_problem()
    _, sol, cert = certified(prob, 10, "min")
    assert cert.kind == "subsolution"
    assert abs(cert.bound - 0.99827) < 2e-3
    assert abs(cert.bound - sol.primal_objective) < 1e-5
    rep = check(cert, prob)
    assert rep.verdict, rep.messages
    assert rep.worst_gram_eigenvalue >= -1e-7
    assert rep.identity_residual <= 1e-6


def test_constant_certificate_at_min_of_g():
    # g = z^2 on {0, 1}: v = 0 with g - v = (z)^2
    prob = scalar_problem()
    term = MultiplierTerm(1, P("1"), 1, np.diag([0.0, 1.0]), "moment[nu1]")
    cert = SosCertificate("min", Polynomial.zero(1), [term], 0.0, 2, ["mu", "nu1"])
    for tol in (0.0, 1e-9, 1.0):
        rep = check(cert, prob, tol=tol)
        assert rep.verdict, rep.messages


@pytest.mark.parametrize("sense", ["min", "max"])
def test_ball_constant_certifies_both(sense):
    n = 2
    prob = brownian_ball(n)
    eq = prob.domain.boundary[0].equalities[0]       # |z|^2 - 1
    mult = eq if sense == "min" else -eq
    term = MultiplierTerm(1, mult, 0, np.array([[1.0]]), "eq")
    cert = SosCertificate(sense, Polynomial.constant(1.0, n), [term], 1.0, 2, ["mu", "nu1"])
    # projected sphere samples carry round-off, hence a tiny positive tolerance
    rep = check(cert, prob, tol=1e-12)
    assert rep.verdict, rep.messages
    assert rep.identity_residual == 0.0


def test_corrupted_gram_fails():
    prob = scalar_problem()
    _, _, cert = certified(prob, 8, "min")
    t = cert.terms[0]
    w, U = np.linalg.eigh(t.gram)
    w[-1] = -w[-1]
    t.gram = U @ np.diag(w) @ U.T
    rep = check(cert, prob)
    assert not rep.verdict
    assert rep.min_gram_eigenvalue[t.label] < -1e-7
    assert any("Gram" in m for m in rep.messages)


def test_near_optimal_certificate_tolerance():
    prob = scalar_problem()
    loose = SolverSettings(feastol=1e-5, gaptol=1e-5, max_iters=14)
    _, sol, cert = certified(prob, 10, "min", loose)
    assert sol.status == "near_optimal"
    assert check(cert, prob, tol=1e-4).verdict
    rep = check(cert, prob, tol=1e-7)
    assert not rep.verdict
    assert 1e-7 < rep.identity_residual < 1e-4


def test_refuses_failed_solve():
    sdp = assemble(scalar_problem(), 6)
    sol = solve(sdp.to_conic(), SolverSettings(max_iters=2))
    assert not sol.ok
    with pytest.raises(CertificateError):
        extract(sdp, sol)


def test_claimed_bound_checked():
    prob = scalar_problem()
    _, _, cert = certified(prob, 6, "min")
    cert.bound += 1e-6
    rep = check(cert, prob)
    assert not rep.verdict and rep.bound_mismatch > 1e-7


def test_sampled_violation_detected():
    prob = scalar_problem()
    _, _, cert = certified(prob, 6, "min")
    cert.v = cert.v + Polynomial.constant(0.01, 1)
    rep = check(cert, prob, tol=CheckTolerances(gram=1e-7, identity=1.0, sampling=1e-6))
    assert rep.boundary_violation < -1e-3
    assert not rep.verdict


def test_rows_encoding_certificate(quartic):
    _, sol, cert = certified(quartic, 6, "min", equalities="rows")
    assert cert.free_terms
    assert identity_residual(cert, quartic) < 1e-6
    assert check(cert, quartic, samples=2000).verdict


def test_bound_consistency_and_ordering(quartic):
    for r in (4, 6):
        _, lo_sol, lo = certified(quartic, r, "min")
        _, hi_sol, hi = certified(quartic, r, "max")
        assert lo.bound <= lo_sol.primal_objective + 1e-7
        assert hi.bound >= hi_sol.primal_objective - 1e-7
        assert lo.bound <= hi.bound + 2e-8
        assert hi.kind == "supersolution"


def test_json_export():
    _, _, cert = certified(scalar_problem(), 4, "min")
    data = json.loads(cert.to_json())
    assert data["order"] == 4 and data["sense"] == "min"
    assert set(data["v"]) <= {f"({k})" for k in range(5)}
    assert all(np.array(m["gram"]).shape[0] == np.array(m["gram"]).shape[1] for m in data["multipliers"])
