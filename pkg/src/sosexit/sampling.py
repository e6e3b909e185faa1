"""Point samplers for domain interiors and boundary pieces."""

from __future__ import annotations

import numpy as np

from .model import Domain, SemialgebraicPiece
from .polyalg import evaluate_stack


class SamplingError(RuntimeError):
    pass


def bounding_box(domain: Domain) -> tuple[np.ndarray, np.ndarray]:
    r = domain.radius()
    if r is None:
        raise SamplingError("domain has no ball constraint; cannot bound the sampling box")
    n = domain.nvars
    return np.full(n, -r), np.full(n, r)


def satisfies(polys, points: np.ndarray, tol: float = 0.0, strict: bool = False) -> np.ndarray:
    if not polys:
        return np.ones(len(points), dtype=bool)
    vals = evaluate_stack(list(polys), points)
    if strict:
        return np.all(vals > tol, axis=1)
    return np.all(vals >= -tol, axis=1)


def sample_interior(domain: Domain, count: int, rng: np.random.Generator,
                    max_draws: int = 2_000_000) -> np.ndarray:
    """Rejection-sample ``count`` points where every interior inequality is > 0."""
    lo, hi = bounding_box(domain)
    ineq = domain.interior.inequalities
    found: list[np.ndarray] = []
    have = 0
    drawn = 0
    batch = max(4 * count, 1024)
    while have < count and drawn < max_draws:
        pts = rng.uniform(lo, hi, size=(batch, len(lo)))
        drawn += batch
        ok = pts[satisfies(ineq, pts, strict=True)]
        found.append(ok)
        have += len(ok)
    if have == 0:
        raise SamplingError(f"no interior point found in {drawn} draws")
    return np.concatenate(found)[:count]


def _roots_1d(piece: SemialgebraicPiece) -> np.ndarray:
    p = piece.equalities[0]
    deg = p.degree
    coefs = [p.coefficient((k,)) for k in range(deg, -1, -1)]
    roots = np.roots(coefs) if deg > 0 else np.array([])
    real = roots[np.abs(roots.imag) < 1e-9].real
    return np.unique(np.round(real, 14)).reshape(-1, 1)


def project(equalities, points: np.ndarray, iters: int = 60, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton projection onto ``{q = 0 for q in equalities}``.

    Returns the moved points and a mask of those that converged.
    """
    n = points.shape[1]
    eqs = list(equalities)
    grads = [[q.partial(i) for i in range(n)] for q in eqs]
    flat_grads = [gq for row in grads for gq in row]
    x = points.copy()
    done = np.zeros(len(x), dtype=bool)
    for _ in range(iters):
        res = evaluate_stack(eqs, x)
        jac = evaluate_stack(flat_grads, x).reshape(len(x), len(eqs), n)
        step = np.einsum("kij,kj->ki", np.linalg.pinv(jac), res)
        x = x - step
        done = np.max(np.abs(evaluate_stack(eqs, x)), axis=1) <= tol * (1 + np.abs(x).max(axis=1))
        if done.all():
            break
    return x, done


def sample_piece(piece: SemialgebraicPiece, count: int, rng: np.random.Generator,
                 box: tuple[np.ndarray, np.ndarray], tol: float = 1e-9,
                 max_rounds: int = 50) -> np.ndarray:
    """Points on a boundary piece.

    One-dimensional equality pieces are enumerated exactly through the real
    roots of the first equality; otherwise box samples are projected onto the
    equalities and filtered by the inequalities.
    """
    lo, hi = box
    n = len(lo)
    if piece.equalities and n == 1:
        pts = _roots_1d(piece)
        keep = satisfies(piece.equalities, pts, tol) & satisfies(
            [-q for q in piece.equalities], pts, tol) & satisfies(piece.inequalities, pts, tol)
        pts = pts[keep]
        if len(pts) == 0:
            raise SamplingError(f"boundary piece {piece.label!r} has no real points")
        reps = int(np.ceil(count / len(pts)))
        return np.tile(pts, (reps, 1))[:count]
    found: list[np.ndarray] = []
    have = 0
    for _ in range(max_rounds):
        pts = rng.uniform(lo, hi, size=(max(2 * count, 256), n))
        if piece.equalities:
            pts, ok = project(piece.equalities, pts)
            pts = pts[ok]
        ok = satisfies(piece.inequalities, pts, tol if piece.equalities else 0.0)
        found.append(pts[ok])
        have += int(ok.sum())
        if have >= count:
            break
    if have == 0:
        raise SamplingError(f"could not find points on boundary piece {piece.label!r}")
    return np.concatenate(found)[:count]
