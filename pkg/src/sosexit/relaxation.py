"""Moment relaxations of the exit-location linear programs.

Unknowns are truncated moment sequences of the occupation measure ``mu``
(on the interior) and of one exit measure ``nu_i`` per boundary piece.
The degree-``r`` relaxation imposes

* positive semidefinite moment and localizing matrices for every measure,
* one Dynkin row per test monomial ``z^alpha`` with ``|alpha| <= r``::

      l_mu(L z^alpha) + sum_i l_nu_i(z^alpha) = <z^alpha, xi>

and optimises ``sum_i l_nu_i(g)`` in either direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ExitProblem, apply_generator, initial_moment
from .polyalg import MonomialBasis, MultiIndex, Polynomial, basis, format_polynomial
from .sdp.program import Block, ConicProgram


class RelaxationError(ValueError):
    pass


def _round_up_even(k: int) -> int:
    return k + (k % 2)


def truncation_degrees(problem: ExitProblem, r: int) -> tuple[int, int]:
    """Moment degrees ``(t_mu, t_nu)`` needed by the order-``r`` relaxation."""
    if r < 2:
        raise RelaxationError(f"relaxation order must be >= 2, got {r}")
    if r < problem.g.degree:
        raise RelaxationError(
            f"relaxation order {r} is below deg g = {problem.g.degree}; g would be truncated")
    s = problem.sde.degree_shift()
    return _round_up_even(r + s), _round_up_even(r)


@dataclass(frozen=True)
class MeasureSlot:
    name: str
    degree: int
    offset: int
    basis: MonomialBasis

    @property
    def size(self) -> int:
        return len(self.basis)


class MomentIndexing:
    """Column table for (measure, exponent) pairs, one column per exponent."""

    def __init__(self, nvars: int, measures: list[tuple[str, int]]):
        self.nvars = nvars
        self.slots: list[MeasureSlot] = []
        offset = 0
        for name, degree in measures:
            b = basis(nvars, degree)
            self.slots.append(MeasureSlot(name, degree, offset, b))
            offset += len(b)
        self.total = offset
        self._by_name = {s.name: i for i, s in enumerate(self.slots)}

    def slot(self, measure: int | str) -> MeasureSlot:
        if isinstance(measure, str):
            measure = self._by_name[measure]
        return self.slots[measure]

    def column(self, measure: int | str, alpha: MultiIndex) -> int:
        slot = self.slot(measure)
        try:
            return slot.offset + slot.basis.index[tuple(alpha)]
        except KeyError:
            raise RelaxationError(
                f"moment {tuple(alpha)} exceeds truncation degree {slot.degree} of {slot.name}") from None

    def moments(self, x: np.ndarray, measure: int | str) -> dict[MultiIndex, float]:
        slot = self.slot(measure)
        return {a: float(x[slot.offset + i]) for i, a in enumerate(slot.basis)}


@dataclass
class PsdBlockSpec:
    """Moment (``multiplier == 1``) or localizing matrix of one measure.

    ``entries`` lists ``(i, j, column, coefficient)`` for ``i <= j``; the
    symmetric entry is implied.
    """

    label: str
    measure: int
    order: int
    multiplier: Polynomial
    size: int
    entries: list[tuple[int, int, int, float]]

    def columns(self) -> np.ndarray:
        return np.unique(np.array([e[2] for e in self.entries], dtype=np.int64))

    def to_block(self) -> Block:
        cols = self.columns()
        where = {c: k for k, c in enumerate(cols)}
        coefs = np.zeros((len(cols), self.size, self.size))
        for i, j, col, v in self.entries:
            coefs[where[col], i, j] += v
            if i != j:
                coefs[where[col], j, i] += v
        return Block("psd", self.size, cols, coefs, np.zeros((self.size, self.size)), self.label)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        M = np.zeros((self.size, self.size))
        for i, j, col, v in self.entries:
            M[i, j] += v * x[col]
            if i != j:
                M[j, i] += v * x[col]
        return M


def moment_block(indexing: MomentIndexing, measure: int, order: int,
                 multiplier: Polynomial | None = None, label: str = "") -> PsdBlockSpec:
    n = indexing.nvars
    q = multiplier if multiplier is not None else Polynomial.constant(1.0, n)
    slot = indexing.slot(measure)
    if order < 0 or 2 * order + q.degree > slot.degree:
        raise RelaxationError(
            f"block of order {order} with multiplier degree {q.degree} overflows "
            f"truncation degree {slot.degree} of {slot.name}")
    b = basis(n, order)
    entries = []
    qterms = list(q.items())
    for i, alpha in enumerate(b):
        for j in range(i, len(b)):
            beta = b[j]
            ab = tuple(x + y for x, y in zip(alpha, beta))
            for gamma, coef in qterms:
                key = tuple(x + y for x, y in zip(ab, gamma))
                entries.append((i, j, indexing.column(measure, key), coef))
    label = label or (f"moment[{slot.name}]" if q == 1.0 else f"loc[{slot.name}]({format_polynomial(q)})")
    return PsdBlockSpec(label, measure, order, q, len(b), entries)


def dynkin_rows(problem: ExitProblem, indexing: MomentIndexing, r: int):
    """Rows ``l_mu(L z^a) + sum_i l_nu_i(z^a) = <z^a, xi>`` for ``|a| <= r``.

    Returns ``(A, b, test_basis)``.
    """
    n = problem.n
    tests = basis(n, r)
    A = np.zeros((len(tests), indexing.total))
    rhs = np.zeros(len(tests))
    n_nu = len(indexing.slots) - 1
    for row, alpha in enumerate(tests):
        Lf = apply_generator(problem.sde, Polynomial.monomial(alpha))
        for gamma, coef in Lf.items():
            A[row, indexing.column(0, gamma)] += coef
        for i in range(n_nu):
            A[row, indexing.column(1 + i, alpha)] += 1.0
        rhs[row] = initial_moment(problem.initial, alpha)
    return A, rhs, tests


@dataclass
class SdpProblem:
    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: list[PsdBlockSpec]
    sense: str
    indexing: MomentIndexing
    order: int
    t_mu: int
    t_nu: int
    tests: MonomialBasis
    skipped: list[str] = field(default_factory=list)
    name: str = ""
    # (measure, p, degree of gamma) for rows l(p z^gamma) = 0 after the Dynkin rows
    eq_groups: list[tuple[int, Polynomial, int]] = field(default_factory=list)

    @property
    def n_dynkin(self) -> int:
        return len(self.tests)

    def to_conic(self) -> ConicProgram:
        return ConicProgram(self.objective, self.A, self.b, [blk.to_block() for blk in self.blocks],
                            self.sense, {"order": self.order, "name": self.name})

    def with_sense(self, sense: str) -> SdpProblem:
        if sense not in ("min", "max"):
            raise RelaxationError(f"unknown sense {sense!r}")
        return SdpProblem(self.objective, self.A, self.b, self.blocks, sense, self.indexing,
                          self.order, self.t_mu, self.t_nu, self.tests, list(self.skipped), self.name,
                          list(self.eq_groups))

    def row_residuals(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    def measure_names(self) -> list[str]:
        return [s.name for s in self.indexing.slots]

    def stats(self) -> dict:
        return {
            "order": self.order,
            "t_mu": self.t_mu,
            "t_nu": self.t_nu,
            "variables": {s.name: s.size for s in self.indexing.slots},
            "total_variables": self.indexing.total,
            "dynkin_rows": self.n_dynkin,
            "equality_rows": int(self.A.shape[0]) - self.n_dynkin,
            # columns that some Dynkin row touches
            "referenced_moments": int(np.count_nonzero(np.any(self.A[:self.n_dynkin] != 0, axis=0))),
            "blocks": [(blk.label, blk.size) for blk in self.blocks],
            "skipped_blocks": list(self.skipped),
        }


def _localizing_order(t: int, p: Polynomial) -> int:
    return t // 2 - math.ceil(p.degree / 2)


def _localizing_rows(idx: MomentIndexing, measure: int, t: int, p: Polynomial) -> list[np.ndarray]:
    """Rows ``l(p z^gamma) = 0`` for ``|gamma| <= t - deg p``."""
    rows = []
    n = idx.nvars
    for gamma in basis(n, t - p.degree):
        row = np.zeros(idx.total)
        for alpha, coef in p.items():
            row[idx.column(measure, tuple(a + g for a, g in zip(alpha, gamma)))] += coef
        rows.append(row)
    return rows


def assemble(problem: ExitProblem, r: int, sense: str = "min", equalities: str = "psd-pair") -> SdpProblem:
    """Degree-``r`` moment relaxation.

    Boundary equalities ``p = 0`` become a pair of localizing blocks for
    ``p`` and ``-p`` (``equalities="psd-pair"``) or linear rows
    ``l(p z^gamma) = 0`` appended after the Dynkin rows (``"rows"``).
    """
    if equalities not in ("rows", "psd-pair"):
        raise RelaxationError(f"unknown equality encoding {equalities!r}")
    if sense not in ("min", "max"):
        raise RelaxationError(f"unknown sense {sense!r}")
    t_mu, t_nu = truncation_degrees(problem, r)
    n = problem.n
    boundary = problem.domain.boundary
    names = [("mu", t_mu)] + [(f"nu{i + 1}", t_nu) for i in range(len(boundary))]
    idx = MomentIndexing(n, names)
    blocks: list[PsdBlockSpec] = []
    skipped: list[str] = []
    eq_rows: list[np.ndarray] = []
    eq_groups: list[tuple[int, Polynomial, int]] = []

    def add_localizing(measure: int, t: int, p: Polynomial, tag: str = ""):
        order = _localizing_order(t, p)
        name = idx.slot(measure).name
        label = f"loc[{name}]({tag}{format_polynomial(p)})"
        if order < 0:
            skipped.append(label)
            return
        blocks.append(moment_block(idx, measure, order, p, label))

    blocks.append(moment_block(idx, 0, t_mu // 2))
    for p in problem.domain.interior.inequalities:
        add_localizing(0, t_mu, p)
    for i, piece in enumerate(boundary):
        m = 1 + i
        blocks.append(moment_block(idx, m, t_nu // 2))
        for p in piece.inequalities:
            add_localizing(m, t_nu, p)
        for p in piece.equalities:
            if equalities == "psd-pair":
                add_localizing(m, t_nu, p, "=0: ")
                add_localizing(m, t_nu, -p, "=0: ")
            elif t_nu >= p.degree:
                eq_rows.extend(_localizing_rows(idx, m, t_nu, p))
                eq_groups.append((m, p, t_nu - p.degree))
            else:
                skipped.append(f"rows[{idx.slot(m).name}]({format_polynomial(p)} = 0)")

    A, rhs, tests = dynkin_rows(problem, idx, r)
    if eq_rows:
        A = np.vstack([A, np.array(eq_rows)])
        rhs = np.concatenate([rhs, np.zeros(len(eq_rows))])
    obj = np.zeros(idx.total)
    for i in range(len(boundary)):
        for alpha, coef in problem.g.items():
            obj[idx.column(1 + i, alpha)] += coef
    return SdpProblem(obj, A, rhs, blocks, sense, idx, r, t_mu, t_nu, tests, skipped, problem.name, eq_groups)
