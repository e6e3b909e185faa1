"""Euler-Maruyama Monte Carlo estimates of exit functionals.

Each path follows ``X <- X + b(X) h + B(X) sqrt(h) zeta`` until an interior
inequality turns negative. The crossing is then located by bisection along
the last segment, which removes most of the overshoot but not the
``O(sqrt(h))`` bias from excursions missed between grid points.

Paths are simulated in fixed-size batches with independent seeds spawned
from the master seed, so results do not depend on the number of worker
threads. Paths still inside at ``t_max`` are censored: they are counted,
not imputed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .model import ExitProblem, apply_generator, initial_moment
from .parallel import thread_limit
from .polyalg import MonomialBasis, Polynomial, StackEvaluator, basis, evaluate_stack

BATCH_PATHS = 10_000
BISECTION_STEPS = 30


class McError(RuntimeError):
    pass


@dataclass(frozen=True)
class McSettings:
    h: float = 1e-4
    paths: int = 100_000
    seed: int = 0
    t_max: float = 1e3
    bisection: bool = True
    threads: int | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")


@dataclass
class McEstimate:
    mean: float
    stderr: float
    exit_time: float
    exit_time_stderr: float
    censored_fraction: float
    paths: int
    exited: int
    settings: McSettings

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Normal-approximation confidence interval for the mean of g."""
        q = stats.norm.ppf(0.5 + level / 2)
        return self.mean - q * self.stderr, self.mean + q * self.stderr

    @property
    def ci95(self) -> tuple[float, float]:
        return self.interval(0.95)

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {
            "mean": self.mean, "stderr": self.stderr, "ci95": [lo, hi],
            "exit_time": self.exit_time, "exit_time_stderr": self.exit_time_stderr,
            "censored_fraction": self.censored_fraction,
            "paths": self.paths, "exited": self.exited,
            "settings": {"h": self.settings.h, "paths": self.settings.paths, "seed": self.settings.seed,
                         "t_max": self.settings.t_max, "bisection": self.settings.bisection},
        }


@dataclass
class _Batch:
    exit_points: np.ndarray   # (k, n), NaN rows for censored paths
    exit_times: np.ndarray    # (k,), t_max for censored paths
    exited: np.ndarray        # (k,) bool
    occupation: np.ndarray | None = None  # (k, moments) time integrals


def _worker_count(settings: McSettings) -> int:
    try:
        return thread_limit(settings.threads)
    except ValueError as exc:
        raise McError(str(exc)) from None


@njit(cache=True)
def _monomials(x, exps, out):
    for j in range(exps.shape[0]):
        v = 1.0
        for i in range(exps.shape[1]):
            for _ in range(exps[j, i]):
                v *= x[i]
        out[j] = v


@njit(cache=True)
def _margin(work, ineq_coef):
    """Smallest interior inequality value, given the monomial values ``work``."""
    worst = np.inf
    for c in range(ineq_coef.shape[1]):
        v = 0.0
        for j in range(work.shape[0]):
            v += work[j] * ineq_coef[j, c]
        worst = min(worst, v)
    return worst


@njit(cache=True, nogil=True)
def _run_paths(count, rng, x0, h, max_steps, bisect, n_bisect, m,
               exps, drift_coef, diff_coef, ineq_coef, occ_exps):
    """Simulate ``count`` paths; returns exit points, times, flags, occupation integrals
    and the 1-based index of a path that produced a non-finite state (0 if none)."""
    n = x0.shape[0]
    nm = exps.shape[0]
    sqrt_h = np.sqrt(h)
    exit_pts = np.full((count, n), np.nan)
    exit_t = np.full(count, max_steps * h)
    exited = np.zeros(count, dtype=np.bool_)
    occ = np.zeros((count, occ_exps.shape[0]))
    work0 = np.empty(nm)
    work = np.empty(nm)
    probe = np.empty(nm)
    occ_work = np.empty(occ_exps.shape[0])
    x = np.empty(n)
    xn = np.empty(n)
    mid = np.empty(n)
    noise = np.empty(m)
    _monomials(x0, exps, work0)
    for k in range(count):
        x[:] = x0
        work[:] = work0
        for step in range(max_steps):
            for j in range(m):
                noise[j] = rng.standard_normal()
            for i in range(n):
                b = 0.0
                for q in range(nm):
                    b += work[q] * drift_coef[q, i]
                dw = 0.0
                for j in range(m):
                    sij = 0.0
                    for q in range(nm):
                        sij += work[q] * diff_coef[q, i * m + j]
                    dw += sij * noise[j]
                xn[i] = x[i] + b * h + dw * sqrt_h
                if not np.isfinite(xn[i]):
                    return exit_pts, exit_t, exited, occ, k + 1
            if occ_exps.shape[0]:
                _monomials(x, occ_exps, occ_work)
            _monomials(xn, exps, work)
            frac = 1.0
            out = _margin(work, ineq_coef) < 0.0
            if out:
                if bisect:
                    lo, hi = 0.0, 1.0
                    for _ in range(n_bisect):
                        t = 0.5 * (lo + hi)
                        for i in range(n):
                            mid[i] = x[i] + t * (xn[i] - x[i])
                        _monomials(mid, exps, probe)
                        if _margin(probe, ineq_coef) >= 0.0:
                            lo = t
                        else:
                            hi = t
                    frac = hi
                for i in range(n):
                    exit_pts[k, i] = x[i] + frac * (xn[i] - x[i])
                exit_t[k] = (step + frac) * h
                exited[k] = True
            for q in range(occ_exps.shape[0]):
                occ[k, q] += h * frac * occ_work[q]
            if out:
                break
            x[:] = xn
    return exit_pts, exit_t, exited, occ, 0


class _Simulator:
    def __init__(self, problem: ExitProblem, settings: McSettings, occupation: MonomialBasis | None):
        if problem.initial.kind != "dirac":
            raise McError("the Monte Carlo oracle supports dirac initial laws only")
        self.problem = problem
        self.settings = settings
        sde = problem.sde
        self.n, self.m = sde.n, sde.m
        ineqs = problem.domain.interior.inequalities
        coeffs = StackEvaluator(list(sde.drift) + [q for row in sde.diffusion for q in row] + list(ineqs),
                                self.n)
        self.exps = coeffs.exps
        k = self.n + self.n * self.m
        self.drift_coef = np.ascontiguousarray(coeffs.coef[:, :self.n])
        self.diff_coef = np.ascontiguousarray(coeffs.coef[:, self.n:k])
        self.ineq_coef = np.ascontiguousarray(coeffs.coef[:, k:])
        if occupation is not None:
            self.occ_exps = np.array(occupation.monomials, dtype=np.int64).reshape(len(occupation), self.n)
        else:
            self.occ_exps = np.zeros((0, self.n), dtype=np.int64)
        x0 = np.array(problem.initial.point, dtype=float)
        if np.any(evaluate_stack(list(ineqs), x0[None, :]) <= 0):
            raise McError("initial point is not in the interior")
        self.x0 = x0

    def run(self, count: int, seed: np.random.SeedSequence) -> _Batch:
        s = self.settings
        max_steps = int(math.ceil(s.t_max / s.h))
        pts, times, exited, occ, status = _run_paths(
            count, np.random.default_rng(seed), self.x0, s.h, max_steps, s.bisection, BISECTION_STEPS, self.m,
            self.exps, self.drift_coef, self.diff_coef, self.ineq_coef, self.occ_exps)
        if status:
            raise McError(f"non-finite state on path {status - 1} of a batch (seed entropy "
                          f"{seed.entropy}, spawn key {seed.spawn_key})")
        times = np.where(exited, times, s.t_max)
        return _Batch(pts, times, exited, occ if len(self.occ_exps) else None)


def _run_batches(sim: _Simulator, settings: McSettings) -> list[_Batch]:
    sizes = [BATCH_PATHS] * (settings.paths // BATCH_PATHS)
    if settings.paths % BATCH_PATHS:
        sizes.append(settings.paths % BATCH_PATHS)
    seeds = np.random.SeedSequence(settings.seed).spawn(len(sizes))
    workers = min(_worker_count(settings), len(sizes))
    if workers == 1:
        return [sim.run(k, sd) for k, sd in zip(sizes, seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(sim.run, sizes, seeds))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    k = len(values)
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / k
    if k == 1:
        return mean, math.nan
    var = math.fsum((values - mean) ** 2) / (k - 1)
    return mean, math.sqrt(var / k)


def simulate(problem: ExitProblem, settings: McSettings | None = None) -> McEstimate:
    """Estimate ``E[g(X(tau))]`` and ``E[tau]``."""
    settings = settings or McSettings()
    sim = _Simulator(problem, settings, None)
    batches = _run_batches(sim, settings)
    exited = np.concatenate([b.exited for b in batches])
    if not exited.any():
        raise McError(f"horizon too small: all {settings.paths} paths censored at t_max={settings.t_max}")
    pts = np.concatenate([b.exit_points for b in batches])[exited]
    times = np.concatenate([b.exit_times for b in batches])[exited]
    gvals = StackEvaluator([problem.g], problem.n)(pts)[:, 0]
    mean, se = _mean_se(gvals)
    tmean, tse = _mean_se(times)
    k = int(exited.sum())
    return McEstimate(mean, se, tmean, tse, 1.0 - k / settings.paths, settings.paths, k, settings)


@dataclass
class McMoments:
    """Per-path moment samples.

    ``mu_samples[k, j]`` is the time integral of the ``j``-th monomial of
    ``mu_basis`` along path ``k``; ``nu_samples[k, j]`` is the ``j``-th
    monomial of ``nu_basis`` at the exit point (zero for censored paths).
    """

    mu_basis: MonomialBasis
    nu_basis: MonomialBasis
    mu_samples: np.ndarray
    nu_samples: np.ndarray
    censored_fraction: float
    settings: McSettings = field(repr=False)

    def mu(self) -> dict:
        return {a: _mean_se(self.mu_samples[:, j]) for j, a in enumerate(self.mu_basis)}

    def nu(self) -> dict:
        return {a: _mean_se(self.nu_samples[:, j]) for j, a in enumerate(self.nu_basis)}

    def linear_statistic(self, mu_weights: np.ndarray, nu_weights: np.ndarray) -> tuple[float, float]:
        """Mean and standard error of ``l_mu(w_mu) + l_nu(w_nu)`` across paths."""
        per_path = self.mu_samples @ mu_weights + self.nu_samples @ nu_weights
        return _mean_se(per_path)

    def dynkin_residuals(self, problem: ExitProblem, r: int) -> list[tuple[tuple[int, ...], float, float]]:
        """``(alpha, residual, stderr)`` for each Dynkin row with ``|alpha| <= r``."""
        out = []
        mu_index = self.mu_basis.index
        nu_index = self.nu_basis.index
        for alpha in basis(problem.n, r):
            Lf = apply_generator(problem.sde, Polynomial.monomial(alpha))
            w_mu = np.zeros(len(self.mu_basis))
            for gamma, c in Lf.items():
                w_mu[mu_index[gamma]] += c
            w_nu = np.zeros(len(self.nu_basis))
            w_nu[nu_index[alpha]] = 1.0
            mean, se = self.linear_statistic(w_mu, w_nu)
            out.append((alpha, mean - initial_moment(problem.initial, alpha), se))
        return out


def empirical_moments(problem: ExitProblem, settings: McSettings | None, degree: int,
                      mu_degree: int | None = None) -> McMoments:
    """Monte Carlo moments of the occupation and exit measures.

    ``mu_degree`` defaults to ``degree`` plus the degree shift of the
    generator, which is what the Dynkin rows of order ``degree`` reference.
    """
    settings = settings or McSettings()
    if mu_degree is None:
        mu_degree = degree + problem.sde.degree_shift()
    mu_b = basis(problem.n, mu_degree)
    nu_b = basis(problem.n, degree)
    sim = _Simulator(problem, settings, mu_b)
    batches = _run_batches(sim, settings)
    exited = np.concatenate([b.exited for b in batches])
    if not exited.any():
        raise McError(f"horizon too small: all {settings.paths} paths censored at t_max={settings.t_max}")
    occ = np.concatenate([b.occupation for b in batches])
    pts = np.concatenate([b.exit_points for b in batches])
    nu = np.zeros((len(pts), len(nu_b)))
    nu[exited] = StackEvaluator([Polynomial.monomial(a) for a in nu_b], problem.n)(pts[exited])
    return McMoments(mu_b, nu_b, occ, nu, 1.0 - exited.sum() / settings.paths, settings)
