import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosexit.sdp import Block, ConicProgram, ProgramError, SolverSettings, residuals, smat, solve, svec

TIGHT = SolverSettings(feastol=1e-10, gaptol=1e-10)


def sym_basis(m):
    """Symmetric unit matrices E_ij, one per upper-triangular slot."""
    out = []
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return np.array(out)


def two_by_two():
    # minimize x subject to [[x, 1], [1, x]] >= 0
    F0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    blk = Block("psd", 2, [0], [np.eye(2)], F0, "lmi")
    return ConicProgram([1.0], np.zeros((0, 1)), [], [blk])


def lp_program():
    # minimize x subject to x - 3 >= 0, as a 1x1 PSD block
    blk = Block("psd", 1, [0], [[[1.0]]], [[-3.0]], "x>=3")
    return ConicProgram([1.0], np.zeros((0, 1)), [], [blk])


def complementary_program(seed=0, m=3, n_eq=4, rank=2):
    """Single-block SDP whose optimum is fixed in advance.

    X* = Q diag(d, 0) Q' and Z* = Q diag(0, e) Q' are strictly complementary;
    C = sum y_i A_i + Z* makes (X*, y, Z*) a primal-dual optimal pair.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    d = np.concatenate([rng.uniform(0.5, 2.0, rank), np.zeros(m - rank)])
    e = np.concatenate([np.zeros(rank), rng.uniform(0.5, 2.0, m - rank)])
    X = Q @ np.diag(d) @ Q.T
    Z = Q @ np.diag(e) @ Q.T
    As = [(M + M.T) / 2 for M in rng.normal(size=(n_eq, m, m))]
    y = rng.normal(size=n_eq)
    C = sum(yi * Ai for yi, Ai in zip(y, As)) + Z
    E = sym_basis(m)
    c = np.array([np.sum(C * Ej) for Ej in E])
    A = np.array([[np.sum(Ai * Ej) for Ej in E] for Ai in As])
    b = np.array([np.sum(Ai * X) for Ai in As])
    blk = Block("psd", m, np.arange(len(E)), E, np.zeros((m, m)), "X")
    x_star = np.array([X[i, j] for i in range(m) for j in range(i, m)])
    return ConicProgram(c, A, b, [blk]), x_star, float(np.sum(C * X))


def test_two_by_two():
    sol = solve(two_by_two(), TIGHT)
    assert sol.status == "optimal"
    assert abs(sol.primal_objective - 1.0) < 1e-7
    assert abs(sol.x[0] - 1.0) < 1e-7
    assert all(v <= 1e-8 for v in residuals(two_by_two(), sol))


def test_lp_embedded():
    sol = solve(lp_program(), TIGHT)
    assert sol.status == "optimal"
    assert abs(sol.primal_objective - 3.0) < 1e-7


def test_lp_cone_kind():
    blk = Block("lp", 2, [0, 1], [[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    prog = ConicProgram([1.0, 2.0], [[1.0, 1.0]], [1.0], [blk])
    sol = solve(prog, TIGHT)
    assert abs(sol.primal_objective - 1.0) < 1e-7
    np.testing.assert_allclose(sol.x, [1.0, 0.0], atol=1e-7)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_constructed_optimum(seed):
    prog, x_star, opt = complementary_program(seed)
    sol = solve(prog, TIGHT)
    assert sol.status == "optimal"
    assert abs(sol.primal_objective - opt) < 1e-7
    # the point itself is only determined to about sqrt(gap)
    np.testing.assert_allclose(sol.x, x_star, atol=1e-5)


def test_maximisation_sign():
    blk = Block("psd", 2, [0], [-np.eye(2)], np.array([[2.0, 1.0], [1.0, 2.0]]))
    # maximize x subject to [[2 - x, 1], [1, 2 - x]] >= 0  ->  x* = 1
    prog = ConicProgram([1.0], np.zeros((0, 1)), [], [blk], sense="max")
    sol = solve(prog, TIGHT)
    assert abs(sol.primal_objective - 1.0) < 1e-7
    pres, dres, gap = residuals(prog, sol)
    assert max(pres, dres, gap) < 1e-7


def test_infeasible_detected():
    # x >= 1 and x <= -1
    b1 = Block("psd", 1, [0], [[[1.0]]], [[-1.0]])
    b2 = Block("psd", 1, [0], [[[-1.0]]], [[-1.0]])
    sol = solve(ConicProgram([1.0], np.zeros((0, 1)), [], [b1, b2]))
    assert sol.status == "infeasible"


def test_unbounded_detected():
    blk = Block("psd", 1, [0], [[[1.0]]], [[0.0]])
    sol = solve(ConicProgram([-1.0], np.zeros((0, 1)), [], [blk]))
    assert sol.status == "unbounded"


def test_residuals_of_zero_point():
    prog = ConicProgram([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], [3.0, 4.0],
                        [Block("lp", 2, [0, 1], np.eye(2), np.zeros(2))])
    sol = solve(prog, TIGHT)
    sol.x = np.zeros(2)
    pres, _, _ = residuals(prog, sol)
    assert abs(pres - 5.0) < 1e-12


def test_gap_grows_linearly():
    prog = two_by_two()
    sol = solve(prog, TIGHT)
    base = sol.x.copy()
    gaps = []
    for eps in (1e-3, 2e-3, 4e-3):
        sol.x = base + eps
        gaps.append(residuals(prog, sol)[2])
    assert np.allclose(np.diff(gaps) / np.array([1e-3, 2e-3]), 1.0, rtol=1e-4)


@pytest.mark.parametrize("seed", range(6))
def test_weak_duality_reported(seed):
    prog, _, _ = complementary_program(seed)
    sol = solve(prog, TIGHT)
    assert sol.primal_objective >= sol.dual_objective - 1e-10 * (1 + abs(sol.primal_objective))
    flipped = solve(prog.with_sense("max").__class__(-prog.c, prog.A, prog.b, prog.blocks, "max"), TIGHT)
    assert flipped.primal_objective <= flipped.dual_objective + 1e-10 * (1 + abs(flipped.primal_objective))


def test_dual_matrices_psd():
    prog, _, _ = complementary_program(7)
    sol = solve(prog)
    for Z in sol.block_duals:
        assert np.linalg.eigvalsh(Z)[0] >= -1e-8


def test_deterministic():
    prog, _, _ = complementary_program(11)
    a, b = solve(prog), solve(prog)
    assert a.status == b.status and a.iterations == b.iterations
    assert a.primal_objective == b.primal_objective
    np.testing.assert_array_equal(a.x, b.x)


def test_status_invariant():
    s = SolverSettings()
    prog, _, _ = complementary_program(3)
    sol = solve(prog, s)
    assert sol.status == "optimal"
    assert max(sol.primal_residual, sol.dual_residual) <= s.feastol
    assert sol.relative_gap <= s.gaptol


def test_program_validation():
    with pytest.raises(ProgramError):
        ConicProgram([1.0], [[0.0]], [1.0], [])
    with pytest.raises(ProgramError):
        ConicProgram([1.0], np.zeros((0, 1)), [], [Block("psd", 1, [3], [[[1.0]]], [[0.0]])])
    with pytest.raises(ProgramError):
        Block("psd", 2, [0], [[[1.0, 2.0], [0.0, 1.0]]], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SolverSettings(feastol=0.0)


def test_svec_examples():
    np.testing.assert_allclose(svec(np.eye(2)), [1.0, 0.0, 1.0])
    M = np.array([[1.0, 2.0], [2.0, 3.0]])
    v = svec(M)
    assert sorted(v.tolist()) == sorted([1.0, 2.0 * np.sqrt(2.0), 3.0])
    with pytest.raises(ValueError):
        svec(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_svec_isometry(m, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(m, m))
    M = M + M.T
    N = rng.normal(size=(m, m))
    N = N + N.T
    assert abs(svec(M) @ svec(N) - np.sum(M * N)) < 1e-12 * (1 + np.abs(M).sum() * np.abs(N).sum())
    assert np.max(np.abs(smat(svec(M)) - M)) <= 1e-15 * (1 + np.abs(M).max())
