"""Dual certificates: the polynomial ``v`` and its sum-of-squares multipliers.

For the lower bound (``sense="min"``) the dual of the relaxation yields a
polynomial subsolution ``v`` with

    -L v = sum_j p_j s_j                 on the interior module
    g - v = sum_j p_j s_j                on each boundary piece module

where each ``s_j = b(z)' S_j b(z)`` comes from a Gram matrix ``S_j``. The
upper bound is the mirror image: ``L v`` and ``v - g`` replace ``-L v`` and
``g - v``. ``v`` then bounds the exit functional through ``<v, xi>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import ExitProblem, apply_generator, pair_with_law
from .polyalg import Polynomial, basis, exponent_key, format_polynomial
from .relaxation import SdpProblem
from .sampling import SamplingError, bounding_box, sample_interior, sample_piece
from .sdp.solver import Solution


class CertificateError(RuntimeError):
    pass


@dataclass
class MultiplierTerm:
    """One ``p_j * s_j`` product, with ``s_j`` stored as a Gram matrix."""

    measure: int
    multiplier: Polynomial
    order: int
    gram: np.ndarray
    label: str = ""

    def sos(self) -> Polynomial:
        return gram_polynomial(self.gram, self.multiplier.nvars, self.order)

    def product(self) -> Polynomial:
        return self.multiplier * self.sos()


@dataclass
class SosCertificate:
    sense: str
    v: Polynomial
    terms: list[MultiplierTerm]
    bound: float
    order: int
    measures: list[str]
    # free multipliers h with p * h added to a boundary identity (equalities as rows)
    free_terms: list[tuple[int, Polynomial, Polynomial]] = field(default_factory=list)
    primal_objective: float = float("nan")

    @property
    def kind(self) -> str:
        return "subsolution" if self.sense == "min" else "supersolution"

    def to_dict(self) -> dict:
        return {
            "sense": self.sense,
            "kind": self.kind,
            "order": self.order,
            "bound": self.bound,
            "primal_objective": self.primal_objective,
            "v": {exponent_key(a): c for a, c in sorted(self.v.items())},
            "v_text": format_polynomial(self.v),
            "multipliers": [
                {
                    "measure": self.measures[t.measure],
                    "label": t.label,
                    "multiplier": format_polynomial(t.multiplier),
                    "order": t.order,
                    "gram": t.gram.tolist(),
                }
                for t in self.terms
            ],
            "free_multipliers": [
                {"measure": self.measures[m], "equality": format_polynomial(p),
                 "multiplier": format_polynomial(h)}
                for m, p, h in self.free_terms
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


@dataclass
class CertificateReport:
    min_gram_eigenvalue: dict[str, float]
    identity_residual: float
    interior_violation: float
    boundary_violation: float
    bound: float
    bound_mismatch: float
    tolerances: tuple[float, float, float]
    samples: int
    verdict: bool = False
    messages: list[str] = field(default_factory=list)

    @property
    def worst_gram_eigenvalue(self) -> float:
        return min(self.min_gram_eigenvalue.values(), default=0.0)

    def to_dict(self) -> dict:
        gram_tol, ident_tol, sample_tol = self.tolerances
        return {
            "verdict": "pass" if self.verdict else "fail",
            "bound": self.bound,
            "worst_gram_eigenvalue": self.worst_gram_eigenvalue,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "identity_residual": self.identity_residual,
            "interior_violation": self.interior_violation,
            "boundary_violation": self.boundary_violation,
            "bound_mismatch": self.bound_mismatch,
            "tolerances": {"gram": gram_tol, "identity": ident_tol, "sampling": sample_tol},
            "samples": self.samples,
            "messages": list(self.messages),
        }


def gram_polynomial(S: np.ndarray, nvars: int, order: int) -> Polynomial:
    """``b(z)' S b(z)`` with ``b`` the graded monomial basis of degree ``order``."""
    b = basis(nvars, order)
    if S.shape != (len(b), len(b)):
        raise CertificateError(f"Gram matrix of shape {S.shape} does not match basis size {len(b)}")
    terms: dict[tuple[int, ...], float] = {}
    for i, alpha in enumerate(b):
        for j in range(i, len(b)):
            coef = S[i, j] if i == j else 2.0 * S[i, j]
            if coef == 0.0:
                continue
            key = tuple(x + y for x, y in zip(alpha, b[j]))
            terms[key] = terms.get(key, 0.0) + coef
    return Polynomial(terms, nvars)


def extract(sdp: SdpProblem, solution: Solution) -> SosCertificate:
    """Read ``v`` and the Gram matrices off a solved relaxation."""
    if not solution.ok:
        raise CertificateError(
            f"refusing to extract a certificate from a solve with status {solution.status!r}")
    n = sdp.indexing.nvars
    lam = np.asarray(solution.eq_duals, dtype=float)
    if len(lam) != sdp.A.shape[0] or len(solution.block_duals) != len(sdp.blocks):
        raise CertificateError("solution does not belong to this relaxation")
    v = Polynomial({a: lam[k] for k, a in enumerate(sdp.tests)}, n)
    terms = [
        MultiplierTerm(blk.measure, blk.multiplier, blk.order, np.array(Z, dtype=float), blk.label)
        for blk, Z in zip(sdp.blocks, solution.block_duals)
    ]
    free = []
    row = sdp.n_dynkin
    for measure, p, deg in sdp.eq_groups:
        gb = basis(n, deg)
        h = Polynomial({a: lam[row + k] for k, a in enumerate(gb)}, n)
        free.append((measure, p, h))
        row += len(gb)
    bound = float(sdp.b @ lam)
    return SosCertificate(sdp.sense, v, terms, bound, sdp.order, sdp.measure_names(), free,
                          solution.primal_objective)


def identity_targets(cert: SosCertificate, problem: ExitProblem) -> list[Polynomial]:
    """Left-hand sides per measure: ``-/+ L v`` for the interior, ``+/-(g - v)`` on pieces."""
    sign = 1.0 if cert.sense == "min" else -1.0
    Lv = apply_generator(problem.sde, cert.v)
    out = [Lv.scale(-sign)]
    for _ in problem.domain.boundary:
        out.append((problem.g - cert.v).scale(sign))
    return out


def data_scale(problem: ExitProblem) -> float:
    """Largest coefficient among the SDE coefficients, ``g`` and the domain polynomials."""
    polys = list(problem.sde.drift) + [q for row in problem.sde.diffusion for q in row] + [problem.g]
    polys += list(problem.domain.interior.polynomials())
    polys += [q for piece in problem.domain.boundary for q in piece.polynomials()]
    return max(q.max_abs_coefficient() for q in polys)


def identity_residual(cert: SosCertificate, problem: ExitProblem) -> float:
    """Largest coefficient of ``target - sum p_j s_j`` relative to ``1 + |data|``.

    ``|data|`` is :func:`data_scale`, the size of the problem coefficients.
    """
    targets = identity_targets(cert, problem)
    sign = 1.0 if cert.sense == "min" else -1.0
    rhs = [Polynomial.zero(problem.n) for _ in targets]
    for t in cert.terms:
        rhs[t.measure] = rhs[t.measure] + t.product()
    for measure, p, h in cert.free_terms:
        # rows l(p z^gamma) = 0 put p*h into g = v + p*h + sign * sum p_j s_j
        rhs[measure] = rhs[measure] + (p * h).scale(sign)
    worst = max((d.max_abs_coefficient() for d in (t - r for t, r in zip(targets, rhs))), default=0.0)
    return worst / (1.0 + data_scale(problem))


@dataclass(frozen=True)
class CheckTolerances:
    gram: float = 1e-7
    identity: float = 1e-6
    sampling: float = 1e-6

    @classmethod
    def uniform(cls, tol: float) -> CheckTolerances:
        return cls(tol, tol, tol)


def check(cert: SosCertificate, problem: ExitProblem, samples: int = 10_000, seed: int = 0,
          tol: float | CheckTolerances | None = None) -> CertificateReport:
    """Verify a certificate by Gram eigenvalues, coefficient identity and sampling.

    A scalar ``tol`` applies to all three tests; ``None`` uses the defaults
    of :class:`CheckTolerances`.
    """
    if tol is None:
        tols = CheckTolerances()
    elif isinstance(tol, CheckTolerances):
        tols = tol
    else:
        tols = CheckTolerances.uniform(float(tol))
    messages = []
    sign = 1.0 if cert.sense == "min" else -1.0

    eigs = {}
    for k, t in enumerate(cert.terms):
        G = np.asarray(t.gram, dtype=float)
        if not np.allclose(G, G.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(G).max(initial=0.0))):
            messages.append(f"Gram matrix {t.label!r} is not symmetric")
        label = t.label or f"term{k}"
        eigs[label] = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0]) if G.size else 0.0

    ident = identity_residual(cert, problem)
    recomputed = pair_with_law(cert.v, problem.initial)
    mismatch = abs(recomputed - cert.bound)

    rng = np.random.default_rng(seed)
    Lv = apply_generator(problem.sde, cert.v)
    try:
        pts = sample_interior(problem.domain, samples, rng)
        interior = float(np.min(-sign * Lv.evaluate_many(pts)))
        box = bounding_box(problem.domain)
        worst_b = np.inf
        per_piece = max(1, samples // len(problem.domain.boundary))
        for piece in problem.domain.boundary:
            bp = sample_piece(piece, per_piece, rng, box)
            worst_b = min(worst_b, float(np.min(sign * (problem.g - cert.v).evaluate_many(bp))))
        boundary = worst_b
    except SamplingError as exc:
        raise CertificateError(f"sampling failed: {exc}") from exc

    ok = True
    if min(eigs.values(), default=0.0) < -tols.gram:
        ok = False
        messages.append("negative Gram eigenvalue below tolerance")
    if ident > tols.identity:
        ok = False
        messages.append("polynomial identity residual above tolerance")
    if interior < -tols.sampling:
        ok = False
        messages.append("sampled interior violation of the generator inequality")
    if boundary < -tols.sampling:
        ok = False
        messages.append("sampled boundary violation of the terminal inequality")
    if mismatch > 1e-9 * (1.0 + abs(recomputed)):
        ok = False
        messages.append(f"claimed bound {cert.bound!r} differs from <v, xi> = {recomputed!r}")
    if any("symmetric" in m for m in messages):
        ok = False
    return CertificateReport(eigs, ident, interior, boundary, recomputed, mismatch,
                             (tols.gram, tols.identity, tols.sampling), samples, ok, messages)
