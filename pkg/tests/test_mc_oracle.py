import numpy as np
import pytest

from conftest import brownian_ball, scalar_problem
from sosexit.mc_oracle import McError, McSettings, empirical_moments, simulate
from sosexit.model import InitialLaw
from dataclasses import replace

FAST = McSettings(h=1e-3, paths=4000, seed=3)


def test_settings_validation():
    for bad in ({"h": 0.0}, {"paths": 0}, {"t_max": -1.0}):
        with pytest.raises(ValueError):
            McSettings(**bad)


def test_scalar_exits_at_one():
    est = simulate(scalar_problem(), FAST)
    assert est.censored_fraction == 0.0
    assert abs(est.mean - 1.0) < 1e-6
    lo, hi = est.ci95
    assert lo <= est.mean <= hi


@pytest.mark.parametrize("n", [1, 2, 3])
def test_ball_mean_and_exit_time(n):
    est = simulate(brownian_ball(n), FAST)
    # g = |z|^2 is 1 on the sphere; bisection lands within 2^-30 of it
    assert abs(est.mean - 1.0) < 1e-6
    # E tau = 1/n, plus an O(sqrt(h)) overshoot
    assert abs(est.exit_time - 1.0 / n) < 5 * est.exit_time_stderr + 0.05 / n


def test_ball_off_center_exit_time():
    est = simulate(brownian_ball(2, point=[0.6, 0.0]), FAST)
    expected = (1 - 0.36) / 2
    assert abs(est.exit_time - expected) < 5 * est.exit_time_stderr + 0.03


def test_fixed_seed_reproducible():
    a = simulate(scalar_problem(), FAST)
    b = simulate(scalar_problem(), FAST)
    assert a.mean == b.mean and a.stderr == b.stderr and a.exit_time == b.exit_time
    c = simulate(scalar_problem(), replace(FAST, seed=4))
    assert c.exit_time != a.exit_time


def test_thread_count_does_not_change_result():
    s = McSettings(h=1e-3, paths=25_000, seed=9)
    one = simulate(brownian_ball(2), replace(s, threads=1))
    three = simulate(brownian_ball(2), replace(s, threads=3))
    assert one.exit_time == three.exit_time and one.mean == three.mean


def test_horizon_too_small():
    with pytest.raises(McError, match="horizon too small"):
        simulate(brownian_ball(2), McSettings(h=1e-3, paths=50, t_max=2e-3))


def test_censoring_reported():
    est = simulate(brownian_ball(1), McSettings(h=1e-3, paths=2000, t_max=0.2, seed=1))
    assert 0.0 < est.censored_fraction < 1.0
    assert est.exited == round(2000 * (1 - est.censored_fraction))


def test_dirac_only():
    prob = scalar_problem()
    moments = replace(prob, initial=InitialLaw.from_moments({(0,): 1.0, (1,): 0.5}, 1))
    with pytest.raises(McError):
        simulate(moments, FAST)


def test_empirical_moment_examples():
    mom = empirical_moments(scalar_problem(), FAST, 2)
    nu = mom.nu()
    assert nu[(0,)][0] == 1.0
    assert abs(nu[(1,)][0] - 1.0) < 1e-6
    ball = empirical_moments(brownian_ball(2), FAST, 2)
    mass, se = ball.mu()[(0, 0)]
    assert abs(mass - 0.5) < 5 * se + 0.03
    assert ball.mu_basis.degree == 2


def test_dynkin_rows_without_bisection():
    s = McSettings(h=1e-3, paths=20_000, seed=5, bisection=False)
    mom = empirical_moments(brownian_ball(2), s, 4)
    for alpha, res, se in mom.dynkin_residuals(brownian_ball(2), 4):
        assert abs(res) <= 5 * se + 1e-12, (alpha, res, se)


def test_halving_step_smoke():
    # E tau for the 1-d ball from 0 is 1; the overshoot bias behaves like C sqrt(h)
    prob = brownian_ball(1)
    h = 2e-3
    coarse = simulate(prob, McSettings(h=h, paths=20_000, seed=2))
    fine = simulate(prob, McSettings(h=h / 2, paths=20_000, seed=2))
    C = (coarse.exit_time - 1.0) / np.sqrt(h)
    assert C > 0
    predicted = C * (np.sqrt(h) - np.sqrt(h / 2))
    noise = 3 * np.hypot(coarse.exit_time_stderr, fine.exit_time_stderr)
    assert abs(coarse.exit_time - fine.exit_time) <= 1.5 * predicted + noise


def test_thread_env_var(monkeypatch):
    monkeypatch.setenv("SOSEXIT_THREADS", "oops")
    with pytest.raises(McError):
        simulate(scalar_problem(), McSettings(h=1e-3, paths=10))
