"""Exit problem data: SDE coefficients, domain, boundary functional, initial law.

The generator is returned with the minus sign folded in::

    L f = -( sum_ij a_ij d_i d_j f + sum_i b_i d_i f )

so Dynkin's identity reads ``E f(X_tau) + E int_0^tau L f ds = E f(X_0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .polyalg import DimensionMismatch, MultiIndex, Polynomial, basis, sum_of_squares


class ModelError(ValueError):
    pass


def derive_a(diffusion: Sequence[Sequence[Polynomial]]) -> tuple[tuple[Polynomial, ...], ...]:
    """``a_ij = 1/2 sum_k b_ik b_jk``, built symmetric by construction."""
    n = len(diffusion)
    if n == 0:
        raise ModelError("diffusion matrix has no rows")
    m = len(diffusion[0])
    if any(len(row) != m for row in diffusion):
        raise DimensionMismatch("diffusion rows have different lengths")
    nv = diffusion[0][0].nvars
    a = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            acc = Polynomial.zero(nv)
            for k in range(m):
                acc = acc + diffusion[i][k] * diffusion[j][k]
            acc = acc.scale(0.5)
            a[i][j] = acc
            a[j][i] = acc
    return tuple(tuple(row) for row in a)


@dataclass(frozen=True)
class SdeModel:
    """``dX = b(X) dt + B(X) dW`` with polynomial ``b`` (length n) and ``B`` (n x m)."""

    drift: tuple[Polynomial, ...]
    diffusion: tuple[tuple[Polynomial, ...], ...]
    a: tuple[tuple[Polynomial, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        drift = tuple(self.drift)
        diffusion = tuple(tuple(row) for row in self.diffusion)
        n = len(drift)
        if n == 0:
            raise ModelError("empty drift")
        if len(diffusion) != n:
            raise DimensionMismatch(f"diffusion has {len(diffusion)} rows, expected {n}")
        for p in drift + tuple(q for row in diffusion for q in row):
            if p.nvars != n:
                raise DimensionMismatch(f"coefficient in {p.nvars} variables, state dimension is {n}")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)
        object.__setattr__(self, "a", derive_a(diffusion))

    @property
    def n(self) -> int:
        return len(self.drift)

    @property
    def m(self) -> int:
        return len(self.diffusion[0])

    def degree_shift(self) -> int:
        """How much ``L`` can raise the degree: ``max(0, deg a - 2, deg b - 1)``."""
        deg_a = max((p.degree for row in self.a for p in row if not p.is_zero()), default=0)
        deg_b = max((p.degree for p in self.drift if not p.is_zero()), default=0)
        return max(0, deg_a - 2, deg_b - 1)

    def a_at(self, points: np.ndarray) -> np.ndarray:
        """Diffusion matrix ``a`` at each row of ``points``; shape ``(k, n, n)``."""
        from .polyalg import evaluate_stack

        n = self.n
        flat = [self.a[i][j] for i in range(n) for j in range(n)]
        vals = evaluate_stack(flat, points)
        return vals.reshape(-1, n, n)


def apply_generator(sde: SdeModel, f: Polynomial) -> Polynomial:
    if f.nvars != sde.n:
        raise DimensionMismatch(f"f has {f.nvars} variables, SDE has {sde.n}")
    n = sde.n
    grad = [f.partial(i) for i in range(n)]
    out = Polynomial.zero(n)
    for i in range(n):
        if grad[i].is_zero():
            continue
        out = out + sde.drift[i] * grad[i]
        for j in range(n):
            if sde.a[i][j].is_zero():
                continue
            out = out + sde.a[i][j] * grad[i].partial(j)
    return -out


@dataclass(frozen=True)
class SemialgebraicPiece:
    """``{z : p(z) >= 0 for p in inequalities, q(z) = 0 for q in equalities}``."""

    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()
    label: str = ""

    def __post_init__(self):
        ineq = tuple(self.inequalities)
        eq = tuple(self.equalities)
        if not ineq and not eq:
            raise ModelError(f"piece {self.label!r} has no defining polynomials")
        dims = {p.nvars for p in ineq + eq}
        if len(dims) != 1:
            raise DimensionMismatch(f"piece {self.label!r} mixes dimensions {sorted(dims)}")
        object.__setattr__(self, "inequalities", ineq)
        object.__setattr__(self, "equalities", eq)

    @property
    def nvars(self) -> int:
        return (self.inequalities + self.equalities)[0].nvars

    def polynomials(self) -> tuple[Polynomial, ...]:
        return self.inequalities + self.equalities


def ball_radius(piece: SemialgebraicPiece) -> float | None:
    """Radius ``R`` if some inequality has the form ``c - lam*sum z_k^2``."""
    for p in piece.inequalities:
        n = p.nvars
        terms = p.terms
        c = terms.pop((0,) * n, 0.0)
        if c <= 0:
            continue
        squares = [terms.pop(tuple(2 if k == i else 0 for k in range(n)), None) for i in range(n)]
        if terms or any(s is None for s in squares):
            continue
        lam = -squares[0]
        if lam > 0 and all(s == squares[0] for s in squares):
            return math.sqrt(c / lam)
    return None


def ball_polynomial(nvars: int, radius: float) -> Polynomial:
    return Polynomial.constant(radius * radius, nvars) - sum_of_squares(nvars)


@dataclass(frozen=True)
class Domain:
    interior: SemialgebraicPiece
    boundary: tuple[SemialgebraicPiece, ...]

    def __post_init__(self):
        boundary = tuple(self.boundary)
        if not boundary:
            raise ModelError("at least one boundary piece is required")
        if self.interior.equalities:
            raise ModelError("the interior must be described by inequalities only")
        for piece in boundary:
            if piece.nvars != self.interior.nvars:
                raise DimensionMismatch("boundary piece dimension differs from the interior")
        object.__setattr__(self, "boundary", boundary)

    @property
    def nvars(self) -> int:
        return self.interior.nvars

    def radius(self) -> float | None:
        return ball_radius(self.interior)


@dataclass(frozen=True)
class InitialLaw:
    """Either a Dirac mass at ``point`` or a table of moments up to ``degree``."""

    kind: str
    point: tuple[float, ...] | None = None
    moments: Mapping[MultiIndex, float] | None = None
    degree: int | None = None

    def __post_init__(self):
        if self.kind == "dirac":
            if self.point is None:
                raise ModelError("dirac law needs a point")
            object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        elif self.kind == "moments":
            if self.moments is None or self.degree is None:
                raise ModelError("moment law needs moments and a degree")
            moms = {tuple(int(x) for x in k): float(v) for k, v in self.moments.items()}
            object.__setattr__(self, "moments", moms)
        else:
            raise ModelError(f"unknown initial law kind {self.kind!r}")

    @classmethod
    def dirac(cls, point: Sequence[float]) -> InitialLaw:
        return cls("dirac", point=tuple(point))

    @classmethod
    def from_moments(cls, moments: Mapping[MultiIndex, float], degree: int) -> InitialLaw:
        return cls("moments", moments=dict(moments), degree=int(degree))

    @property
    def nvars(self) -> int:
        if self.kind == "dirac":
            return len(self.point)
        return len(next(iter(self.moments)))


def initial_moment(law: InitialLaw, alpha: Sequence[int]) -> float:
    alpha = tuple(int(a) for a in alpha)
    if law.kind == "dirac":
        if len(alpha) != len(law.point):
            raise DimensionMismatch("multi-index length differs from the point")
        out = 1.0
        for v, e in zip(law.point, alpha):
            if e:
                out *= v ** e
        return out
    if sum(alpha) > law.degree:
        raise ModelError(f"moment {alpha} exceeds the declared degree {law.degree}")
    if not any(alpha):
        return float(law.moments.get(alpha, 1.0))
    return float(law.moments.get(alpha, 0.0))


def pair_with_law(p: Polynomial, law: InitialLaw) -> float:
    """``<p, xi>`` for a polynomial ``p``."""
    return sum(c * initial_moment(law, a) for a, c in p.items())


@dataclass(frozen=True)
class ExitProblem:
    sde: SdeModel
    domain: Domain
    g: Polynomial
    initial: InitialLaw
    name: str = ""

    def __post_init__(self):
        n = self.sde.n
        if self.domain.nvars != n:
            raise DimensionMismatch(f"domain in {self.domain.nvars} variables, SDE in {n}")
        if self.g.nvars != n:
            raise DimensionMismatch(f"g in {self.g.nvars} variables, SDE in {n}")
        if self.initial.nvars != n:
            raise DimensionMismatch(f"initial law in {self.initial.nvars} variables, SDE in {n}")

    @property
    def n(self) -> int:
        return self.sde.n


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    hint: str = ""

    def __str__(self) -> str:
        text = f"{self.severity}: {self.message}"
        return f"{text} (hint: {self.hint})" if self.hint else text


def has_errors(diags: Sequence[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diags)


def validate(problem: ExitProblem, n_samples: int = 200, seed: int = 0) -> list[Diagnostic]:
    """Cheap sanity checks; ellipticity is only probed at sample points."""
    from . import sampling

    diags: list[Diagnostic] = []
    dom = problem.domain
    radius = dom.radius()
    if radius is None:
        diags.append(Diagnostic(
            "error", "no-ball",
            "interior description lacks a ball constraint R^2 - sum z_k^2 >= 0",
            "rerun with --add-ball R for a radius R enclosing the domain"))

    law = problem.initial
    if law.kind == "dirac":
        vals = [p.evaluate(law.point) for p in dom.interior.inequalities]
        if any(v <= 0 for v in vals):
            diags.append(Diagnostic("error", "initial-not-interior", "initial point not interior"))
    else:
        mass = law.moments.get((0,) * problem.n, 1.0)
        if abs(mass - 1.0) > 1e-12:
            diags.append(Diagnostic("error", "initial-mass", f"initial law has mass {mass}, expected 1"))

    rng = np.random.default_rng(seed)
    if radius is not None:
        try:
            pts = sampling.sample_interior(dom, n_samples, rng)
        except sampling.SamplingError as exc:
            diags.append(Diagnostic("warning", "interior-sampling", str(exc)))
            pts = np.zeros((0, problem.n))
        if len(pts):
            eig = np.linalg.eigvalsh(problem.sde.a_at(pts))
            if np.min(eig[:, 0]) <= 0:
                worst = pts[int(np.argmin(eig[:, 0]))]
                diags.append(Diagnostic(
                    "error", "ellipticity",
                    f"ellipticity check failed: a(z) not positive definite at z={worst.tolist()}"))
        box = sampling.bounding_box(dom)
        for i, piece in enumerate(dom.boundary):
            try:
                found = sampling.sample_piece(piece, 5, rng, box)
            except sampling.SamplingError:
                found = np.zeros((0, problem.n))
            if len(found) == 0:
                diags.append(Diagnostic(
                    "warning", "empty-piece",
                    f"no points found on boundary piece {piece.label or i}"))
    return diags


# -- problem transformations ---------------------------------------------


def add_ball(problem: ExitProblem, radius: float) -> ExitProblem:
    """Append ``R^2 - sum z_k^2 >= 0`` to the interior and every boundary piece."""
    ball = ball_polynomial(problem.n, radius)
    dom = problem.domain
    interior = replace(dom.interior, inequalities=dom.interior.inequalities + (ball,))
    boundary = tuple(replace(p, inequalities=p.inequalities + (ball,)) for p in dom.boundary)
    return replace(problem, domain=Domain(interior, boundary))


def rescale(problem: ExitProblem, lo: Sequence[float], hi: Sequence[float]) -> ExitProblem:
    """Change variables ``z = c + w*u`` mapping the box ``[lo, hi]`` onto ``[-1, 1]^n``.

    The expected exit functional is invariant under the substitution.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ModelError("empty rescaling box")
    c = (lo + hi) / 2
    w = (hi - lo) / 2

    def sub(p: Polynomial) -> Polynomial:
        return p.compose_affine(c, w)

    sde = SdeModel(
        tuple(sub(b).scale(1 / w[i]) for i, b in enumerate(problem.sde.drift)),
        tuple(tuple(sub(q).scale(1 / w[i]) for q in row) for i, row in enumerate(problem.sde.diffusion)),
    )

    def sub_piece(pc: SemialgebraicPiece) -> SemialgebraicPiece:
        return SemialgebraicPiece(tuple(map(sub, pc.inequalities)), tuple(map(sub, pc.equalities)), pc.label)

    dom = Domain(sub_piece(problem.domain.interior), tuple(map(sub_piece, problem.domain.boundary)))
    law = problem.initial
    if law.kind == "dirac":
        new_law = InitialLaw.dirac(tuple((np.asarray(law.point) - c) / w))
    else:
        moms = {}
        for alpha in basis(problem.n, law.degree):
            u_alpha = Polynomial.monomial(alpha).compose_affine(-c / w, 1 / w)
            moms[alpha] = pair_with_law(u_alpha, law)
        new_law = InitialLaw.from_moments(moms, law.degree)
    return ExitProblem(sde, dom, sub(problem.g), new_law, problem.name)
