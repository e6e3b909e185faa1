"""Primal-dual interior-point method for :class:`ConicProgram`.

The program is embedded in a homogeneous self-dual model, so infeasible or
unbounded problems end with a ray certificate instead of diverging. Search
directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector.

Internally we work with the cone form

    minimize c'x   s.t.   G x + s = h,  A x = b,  s in K
    maximize -h'z - b'y   s.t.   G'z + A'y + c = 0,  z in K

with ``G = -F`` and ``h = F0`` block by block. The NT scaling of a PSD block
is a matrix ``R`` with ``R^{-1} s R^{-T} = R^T z R = diag(lam)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .program import ConicProgram
from .svec import svec

log = logging.getLogger(__name__)

STEP_FRACTION = 0.99
REFINE_STEPS = 1


@dataclass
class SolverSettings:
    feastol: float = 1e-8
    gaptol: float = 1e-8
    max_iters: int = 200
    verbose: bool = False
    # residual slack (multiple of the tolerances) for a "near_optimal" verdict
    near_factor: float = 1e3

    def __post_init__(self):
        if self.feastol <= 0 or self.gaptol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Solution:
    """Solver output in the caller's sense.

    ``eq_duals`` and ``block_duals`` satisfy ``c = A' eq_duals + sign * F'Z``
    with ``sign = +1`` for minimisation and ``-1`` for maximisation, where
    ``F'Z`` is the vector ``(sum_k <F_kj, Z_k>)_j``.
    """

    status: str
    x: np.ndarray
    eq_duals: np.ndarray
    block_duals: list[np.ndarray]
    slacks: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float = 0.0
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")

    @property
    def relative_gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective) / (1 + abs(self.primal_objective))


# -- cone helpers ------------------------------------------------------------


class _Cone:
    """Scaling state and scaled linear maps for one block.

    Newton systems are solved in the scaled space: for a PSD block a
    direction ``dz`` is carried as ``R' dz R`` and the constraint map as
    ``P_j = T F_j T'`` with ``T = R^{-1}``, which avoids forming ``W^{-1}``.
    """

    def __init__(self, blk):
        self.blk = blk
        self.kind = blk.kind
        self.m = blk.size
        if self.kind == "psd":
            self.R = np.eye(self.m)
            self.T = np.eye(self.m)  # R^{-1}
        else:
            self.w = np.ones(self.m)
        self.lam = np.ones(self.m)
        self.P = None

    # G x = -F x (no constant)
    def G(self, x):
        blk = self.blk
        if self.kind == "psd":
            return -np.einsum("j,jab->ab", x[blk.vars], blk.coefs)
        return -(x[blk.vars] @ blk.coefs)

    def Gt(self, z, out):
        blk = self.blk
        if self.kind == "psd":
            out[blk.vars] -= np.einsum("jab,ab->j", blk.coefs, z)
        else:
            out[blk.vars] -= blk.coefs @ z

    def h(self):
        return self.blk.const

    def identity(self):
        return np.eye(self.m) if self.kind == "psd" else np.ones(self.m)

    def s(self):
        if self.kind == "psd":
            return (self.R * self.lam) @ self.R.T
        return self.w * self.lam

    def z(self):
        if self.kind == "psd":
            return (self.T.T * self.lam) @ self.T
        return self.lam / self.w

    def lam_sq(self):
        return np.diag(self.lam ** 2) if self.kind == "psd" else self.lam ** 2

    def scale_primal(self, u):
        """``T u T'``: maps an s-space residual into the scaled space."""
        if self.kind == "psd":
            return self.T @ u @ self.T.T
        return u / self.w

    def prepare(self, H):
        """Cache the scaled constraint map and add its Gram matrix to ``H``."""
        blk = self.blk
        if self.kind == "psd":
            self.P = self.T @ blk.coefs @ self.T.T
            V = svec(self.P, check=False)
        else:
            self.P = blk.coefs / self.w
            V = self.P
        if len(blk.vars):
            H[np.ix_(blk.vars, blk.vars)] += V @ V.T

    def G_scaled(self, x):
        if self.kind == "psd":
            return -np.einsum("j,jab->ab", x[self.blk.vars], self.P)
        return -(x[self.blk.vars] @ self.P)

    def Gt_scaled(self, u, out):
        if self.kind == "psd":
            out[self.blk.vars] -= np.einsum("jab,ab->j", self.P, u)
        else:
            out[self.blk.vars] -= self.P @ u

    def lam_solve(self, d):
        """Solve ``lam o U = d`` (symmetrised product) for ``U``."""
        if self.kind == "psd":
            return 2.0 * d / (self.lam[:, None] + self.lam[None, :])
        return d / self.lam

    def jordan(self, a, b):
        if self.kind == "psd":
            return 0.5 * (a @ b + b @ a)
        return a * b

    def max_step(self, ds_scaled):
        """Largest ``a`` with ``lam + a * ds_scaled`` in the cone."""
        if self.kind == "psd":
            isq = 1.0 / np.sqrt(self.lam)
            M = isq[:, None] * ds_scaled * isq[None, :]
            emin = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
        else:
            emin = np.min(ds_scaled / self.lam)
        return np.inf if emin >= 0 else -1.0 / emin

    def update(self, ds_scaled, dz_scaled, a):
        if self.kind == "psd":
            S = np.diag(self.lam) + a * ds_scaled
            Z = np.diag(self.lam) + a * dz_scaled
            L1 = np.linalg.cholesky(0.5 * (S + S.T))
            L2 = np.linalg.cholesky(0.5 * (Z + Z.T))
            U, lam, Vt = np.linalg.svd(L2.T @ L1)
            root = np.sqrt(lam)
            self.R = self.R @ (L1 @ Vt.T) / root
            self.T = ((U.T @ L2.T) / root[:, None]) @ self.T
            self.lam = lam
        else:
            s = self.lam + a * ds_scaled
            z = self.lam + a * dz_scaled
            if np.any(s <= 0) or np.any(z <= 0):
                raise np.linalg.LinAlgError("LP block left the cone")
            self.w = self.w * np.sqrt(s / z)
            self.lam = np.sqrt(s * z)


def _inner(a, b):
    return float(np.sum(a * b))


def _norm(parts):
    return float(np.sqrt(sum(np.sum(p * p) for p in parts)))


# -- main loop -----------------------------------------------------------------


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> Solution:
    settings = settings or SolverSettings()
    t0 = time.perf_counter()
    flip = -1.0 if program.sense == "max" else 1.0
    c = flip * program.c
    A, b = program.A, program.b
    N, p = program.nvars, program.nrows
    cones = [_Cone(blk) for blk in program.blocks]
    hs = [cn.h() for cn in cones]
    degree = sum(cn.m for cn in cones)

    resx0 = max(1.0, float(np.linalg.norm(c)))
    resy0 = max(1.0, float(np.linalg.norm(b)))
    resz0 = max(1.0, _norm(hs))

    x = np.zeros(N)
    y = np.zeros(p)
    tau, kappa = 1.0, 1.0

    def G_all(v):
        return [cn.G(v) for cn in cones]

    def Gt_all(zs):
        out = np.zeros(N)
        for cn, zk in zip(cones, zs):
            cn.Gt(zk, out)
        return out

    history = []
    status = "max_iters"
    best = None
    it = 0
    for it in range(settings.max_iters + 1):
        ss = [cn.s() for cn in cones]
        zs = [cn.z() for cn in cones]
        Gx = G_all(x)
        Gtz = Gt_all(zs)
        hz = sum(_inner(h, zk) for h, zk in zip(hs, zs))
        cx = float(c @ x)
        by = float(b @ y)

        rx = A.T @ y + Gtz + c * tau
        ry = b * tau - A @ x
        rz = [h * tau - gx - sk for h, gx, sk in zip(hs, Gx, ss)]
        rt = -cx - by - hz - kappa
        sz = sum(float(np.sum(cn.lam ** 2)) for cn in cones)
        mu = (sz + tau * kappa) / (degree + 1)

        pcost = cx / tau
        dcost = -(by + hz) / tau
        pres = max(float(np.linalg.norm(ry)) / tau / resy0, _norm(rz) / tau / resz0)
        dres = float(np.linalg.norm(rx)) / tau / resx0
        gap = sz / tau ** 2
        relgap = max(abs(pcost - dcost), gap) / (1.0 + abs(pcost))
        history.append(dict(it=it, pcost=flip * pcost, dcost=flip * dcost, pres=pres,
                            dres=dres, gap=gap, tau=tau, kappa=kappa, mu=mu))
        if settings.verbose:
            log.info("%3d  pcost %+.8e  dcost %+.8e  pres %.1e  dres %.1e  gap %.1e  k/t %.1e",
                     it, flip * pcost, flip * dcost, pres, dres, gap, kappa / tau)

        snapshot = (x.copy(), y.copy(), [s.copy() for s in ss], [z.copy() for z in zs], tau,
                    pres, dres, relgap, pcost, dcost, gap)
        if best is None or max(pres, dres, relgap) <= max(best[5], best[6], best[7]):
            best = snapshot

        if pres <= settings.feastol and dres <= settings.feastol and relgap <= settings.gaptol:
            status = "optimal"
            best = snapshot
            break
        if hz + by < 0:
            pinf = float(np.linalg.norm(A.T @ y + Gtz)) / resx0 / -(hz + by)
            if pinf <= settings.feastol:
                status = "infeasible"
                break
        if cx < 0:
            dinf = max(float(np.linalg.norm(A @ x)) / resy0,
                       _norm([gx + sk for gx, sk in zip(Gx, ss)]) / resz0) / -cx
            if dinf <= settings.feastol:
                status = "unbounded"
                break
        if it == settings.max_iters:
            break

        # Newton system, factored once per iteration.
        try:
            H = np.zeros((N, N))
            for cn in cones:
                cn.prepare(H)
            K = np.zeros((N + p, N + p))
            K[:N, :N] = H
            K[:N, N:] = A.T
            K[N:, :N] = A
            lu = sla.lu_factor(K, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("factorisation failed: %s", exc)
            break

        def Gt_scaled_all(us):
            out = np.zeros(N)
            for cn, u in zip(cones, us):
                cn.Gt_scaled(u, out)
            return out

        def solve_reduced(bx, by_, bz):
            rhs = np.concatenate([bx - Gt_scaled_all(bz), -by_])
            sol = sla.lu_solve(lu, rhs)
            dx, dy = sol[:N], sol[N:]
            dz = [u + cn.G_scaled(dx) for cn, u in zip(cones, bz)]
            return dx, dy, dz

        def solve_k(bx, by_, bz):
            """Solve ``A'dy + G'dz = bx, -A dx = by, -G dx + dz = bz`` in scaled space."""
            dx, dy, dz = solve_reduced(bx, by_, bz)
            for _ in range(REFINE_STEPS):
                r1 = bx - A.T @ dy - Gt_scaled_all(dz)
                r2 = by_ + A @ dx
                r3 = [u + cn.G_scaled(dx) - d for cn, u, d in zip(cones, bz, dz)]
                ex, ey, ez = solve_reduced(r1, r2, r3)
                dx, dy = dx + ex, dy + ey
                dz = [d + e for d, e in zip(dz, ez)]
            return dx, dy, dz

        hs_sc = [cn.scale_primal(h) for cn, h in zip(cones, hs)]
        rz_sc = [cn.scale_primal(r) for cn, r in zip(cones, rz)]
        x2, y2, z2 = solve_k(c, b, hs_sc)
        denom_base = float(c @ x2 + b @ y2) + sum(_inner(h, zk) for h, zk in zip(hs_sc, z2))

        def direction(eta, ds_target, dk_target):
            bz = [-eta * r + cn.lam_solve(d) for cn, r, d in zip(cones, rz_sc, ds_target)]
            rho_t = -eta * rt + dk_target / tau
            x1, y1, z1 = solve_k(-eta * rx, -eta * ry, bz)
            num = rho_t + float(c @ x1 + b @ y1) + sum(_inner(h, zk) for h, zk in zip(hs_sc, z1))
            dtau = num / (kappa / tau + denom_base)
            dx = x1 - dtau * x2
            dy = y1 - dtau * y2
            dz_sc = [a - dtau * bb for a, bb in zip(z1, z2)]
            dkappa = (dk_target - kappa * dtau) / tau
            ds_sc = [cn.lam_solve(d) - dzs for cn, d, dzs in zip(cones, ds_target, dz_sc)]
            return dx, dy, dtau, dkappa, ds_sc, dz_sc

        def step_length(dtau, dkappa, ds_sc, dz_sc):
            amax = np.inf
            for cn, a, bb in zip(cones, ds_sc, dz_sc):
                amax = min(amax, cn.max_step(a), cn.max_step(bb))
            if dtau < 0:
                amax = min(amax, -tau / dtau)
            if dkappa < 0:
                amax = min(amax, -kappa / dkappa)
            return amax

        try:
            aff = direction(1.0, [-cn.lam_sq() for cn in cones], -tau * kappa)
            a_aff = min(1.0, step_length(*aff[2:]))
            sigma = min(1.0, max(0.0, 1.0 - a_aff)) ** 3
            eta = 1.0 - sigma
            ds_t = [sigma * mu * cn.identity() - cn.lam_sq() - cn.jordan(a, bb)
                    for cn, a, bb in zip(cones, aff[4], aff[5])]
            dk_t = sigma * mu - tau * kappa - aff[2] * aff[3]
            dx, dy, dtau, dkappa, ds_sc, dz_sc = direction(eta, ds_t, dk_t)
            alpha = min(1.0, STEP_FRACTION * step_length(dtau, dkappa, ds_sc, dz_sc))
            if not (np.isfinite(alpha) and np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
                raise np.linalg.LinAlgError("non-finite search direction")
            for cn, a, bb in zip(cones, ds_sc, dz_sc):
                cn.update(a, bb, alpha)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("step failed: %s", exc)
            break
        x = x + alpha * dx
        y = y + alpha * dy
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status in ("infeasible", "unbounded"):
        # report the normalised ray
        scale = -(hz + by) if status == "infeasible" else -cx
        xr = x / scale
        yr = y / scale
        zr = [zk / scale for zk in zs]
        sr = [sk / scale for sk in ss]
        return _package(program, flip, status, xr, yr, sr, zr, np.nan, np.nan,
                        pres, dres, np.nan, it, t0, history)

    bx, byy, bss, bzs, btau, pres, dres, relgap, pcost, dcost, gap = best
    if status != "optimal":
        near = settings.near_factor
        if pres <= near * settings.feastol and dres <= near * settings.feastol and relgap <= near * settings.gaptol:
            status = "near_optimal"
        else:
            status = "max_iters"
    return _package(program, flip, status, bx / btau, byy / btau, [s / btau for s in bss],
                    [z / btau for z in bzs], flip * pcost, flip * dcost, pres, dres, gap, it, t0, history)


def _package(program, flip, status, x, y, ss, zs, pobj, dobj, pres, dres, gap, it, t0, history):
    # internal dual y satisfies -F'Z + A'y + flip*c = 0
    eq_duals = -flip * y
    return Solution(
        status=status, x=x, eq_duals=eq_duals,
        block_duals=[0.5 * (z + z.T) if z.ndim == 2 else z for z in zs],
        slacks=ss, primal_objective=pobj, dual_objective=dobj,
        primal_residual=pres, dual_residual=dres, gap=gap, iterations=it,
        solve_time=time.perf_counter() - t0, history=history,
    )


def residuals(program: ConicProgram, solution: Solution) -> tuple[float, float, float]:
    """Absolute residual norms recomputed from the returned point.

    primal: ``|| (A x - b, negative parts of F_k(x)) ||``
    dual:   ``|| (c - A'lam - sign F'Z, negative parts of Z_k) ||``
    gap:    ``|c'x - (b'lam - sign sum_k <F_k0, Z_k>)|``
    """
    x, lam = solution.x, solution.eq_duals
    sign = 1.0 if program.sense == "min" else -1.0
    parts = [program.A @ x - program.b]
    FtZ = np.zeros(program.nvars)
    const = 0.0
    dual_parts = []
    for blk, Z in zip(program.blocks, solution.block_duals):
        Fx = blk.value(x)
        if blk.kind == "psd":
            ev = np.linalg.eigvalsh(0.5 * (Fx + Fx.T))
            zev = np.linalg.eigvalsh(0.5 * (Z + Z.T))
        else:
            ev, zev = Fx, Z
        parts.append(np.minimum(ev, 0.0))
        dual_parts.append(np.minimum(zev, 0.0))
        FtZ += blk.adjoint(Z, program.nvars)
        const += blk.pair_const(Z)
    dual_parts.append(program.c - program.A.T @ lam - sign * FtZ)
    dual_obj = float(program.b @ lam) - sign * const
    gap = abs(program.objective(x) - dual_obj)
    return _norm(parts), _norm(dual_parts), gap
