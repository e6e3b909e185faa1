"""Sparse multivariate polynomials over the reals.

A polynomial is a map from exponent tuples to float coefficients. Values
are immutable once built; every arithmetic operation returns a new object.
Only exactly-zero coefficients are pruned.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


class PolynomialError(ValueError):
    pass


class DimensionMismatch(PolynomialError):
    pass


class ParseError(PolynomialError):
    """Raised on malformed polynomial text; ``pos`` is the 0-based column."""

    def __init__(self, message: str, text: str = "", pos: int = -1):
        self.text = text
        self.pos = pos
        self.reason = message
        if pos >= 0:
            message = f"{message} at column {pos + 1}: {text!r}"
        super().__init__(message)


def _degree(alpha: MultiIndex) -> int:
    return sum(alpha)


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` variables."""

    __slots__ = ("_terms", "_nvars", "_hash")

    def __init__(self, terms: Mapping[MultiIndex, float] | None = None, nvars: int | None = None):
        terms = dict(terms or {})
        if nvars is None:
            if not terms:
                raise PolynomialError("nvars is required for the zero polynomial")
            nvars = len(next(iter(terms)))
        clean: dict[MultiIndex, float] = {}
        for alpha, coef in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != nvars:
                raise DimensionMismatch(f"exponent {alpha} does not have length {nvars}")
            if any(a < 0 for a in alpha):
                raise PolynomialError(f"negative exponent in {alpha}")
            coef = float(coef)
            if coef != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + coef
        self._terms = {a: c for a, c in clean.items() if c != 0.0}
        self._nvars = int(nvars)
        self._hash = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls({}, nvars)

    @classmethod
    def constant(cls, value: float, nvars: int) -> Polynomial:
        return cls({(0,) * nvars: value}, nvars)

    @classmethod
    def monomial(cls, alpha: Sequence[int], coef: float = 1.0) -> Polynomial:
        return cls({tuple(alpha): coef}, len(alpha))

    @classmethod
    def variable(cls, i: int, nvars: int) -> Polynomial:
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for {nvars} variables")
        alpha = [0] * nvars
        alpha[i] = 1
        return cls({tuple(alpha): 1.0}, nvars)

    @classmethod
    def _raw(cls, terms: dict[MultiIndex, float], nvars: int) -> Polynomial:
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._nvars = nvars
        obj._hash = None
        return obj

    # -- accessors ----------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(_degree(a) for a in self._terms)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: Polynomial) -> None:
        if other._nvars != self._nvars:
            raise DimensionMismatch(f"{self._nvars} vs {other._nvars} variables")

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other), self._nvars)
        return NotImplemented

    def __add__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for a, c in other._terms.items():
            s = out.get(a, 0.0) + c
            if s == 0.0:
                out.pop(a, None)
            else:
                out[a] = s
        return Polynomial._raw(out, self._nvars)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial._raw({a: -c for a, c in self._terms.items()}, self._nvars)

    def __sub__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def scale(self, factor: float) -> Polynomial:
        factor = float(factor)
        if factor == 0.0:
            return Polynomial.zero(self._nvars)
        out = {a: c * factor for a, c in self._terms.items()}
        return Polynomial._raw({a: c for a, c in out.items() if c != 0.0}, self._nvars)

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict[MultiIndex, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                out[key] = out.get(key, 0.0) + ca * cb
        return Polynomial._raw({a: c for a, c in out.items() if c != 0.0}, self._nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Polynomial:
        if not isinstance(k, int) or k < 0:
            raise PolynomialError("only nonnegative integer powers are supported")
        result = Polynomial.constant(1.0, self._nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self._nvars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._nvars == other._nvars and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._nvars, frozenset(self._terms.items())))
        return self._hash

    # -- calculus and evaluation -------------------------------------------

    def partial(self, i: int) -> Polynomial:
        """Formal derivative with respect to variable ``i`` (0-based)."""
        if not 0 <= i < self._nvars:
            raise IndexError(f"variable index {i} out of range for {self._nvars} variables")
        out: dict[MultiIndex, float] = {}
        for a, c in self._terms.items():
            if a[i] == 0:
                continue
            b = list(a)
            b[i] -= 1
            out[tuple(b)] = c * a[i]
        return Polynomial._raw(out, self._nvars)

    def __call__(self, point: Sequence[float]) -> float:
        return self.evaluate(point)

    def evaluate(self, point: Sequence[float]) -> float:
        point = tuple(float(v) for v in point)
        if len(point) != self._nvars:
            raise DimensionMismatch(f"point has length {len(point)}, expected {self._nvars}")
        total = 0.0
        for a, c in self._terms.items():
            term = c
            for v, e in zip(point, a):
                if e:
                    term *= v ** e
            total += term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at the rows of an ``(k, nvars)`` array."""
        return evaluate_stack([self], points)[:, 0]

    def compose_affine(self, shift: Sequence[float], scale: Sequence[float]) -> Polynomial:
        """Return ``u -> p(shift + scale * u)`` (componentwise)."""
        n = self._nvars
        if len(shift) != n or len(scale) != n:
            raise DimensionMismatch("shift/scale length differs from nvars")
        lines = [
            Polynomial.constant(float(shift[i]), n) + Polynomial.variable(i, n).scale(scale[i])
            for i in range(n)
        ]
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(i: int, e: int) -> Polynomial:
            if (i, e) not in cache:
                cache[(i, e)] = lines[i] ** e
            return cache[(i, e)]

        result = Polynomial.zero(n)
        for a, c in self._terms.items():
            term = Polynomial.constant(c, n)
            for i, e in enumerate(a):
                if e:
                    term = term * power(i, e)
            result = result + term
        return result

    # -- text ---------------------------------------------------------------

    def __repr__(self) -> str:
        return f"Polynomial({format_polynomial(self)!r}, nvars={self._nvars})"

    def __str__(self) -> str:
        return format_polynomial(self)


class StackEvaluator:
    """Several polynomials compiled for repeated evaluation at point batches.

    Monomials shared between polynomials are computed once per call.
    """

    def __init__(self, polys: Sequence[Polynomial], nvars: int | None = None):
        polys = list(polys)
        if nvars is None:
            if not polys:
                raise PolynomialError("nvars is required for an empty stack")
            nvars = polys[0].nvars
        for p in polys:
            if p.nvars != nvars:
                raise DimensionMismatch(f"stack of {nvars} variables, polynomial has {p.nvars}")
        self.nvars = nvars
        self.count = len(polys)
        monos = sorted({a for p in polys for a in p._terms}, key=lambda a: (_degree(a), a))
        index = {a: j for j, a in enumerate(monos)}
        self.coef = np.zeros((len(monos), len(polys)))
        for col, p in enumerate(polys):
            for a, c in p._terms.items():
                self.coef[index[a], col] = c
        self.exps = np.array(monos, dtype=np.int64).reshape(len(monos), nvars)
        self.maxdeg = int(self.exps.max(initial=0))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Values at ``points`` of shape ``(k, nvars)``; returns ``(k, count)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k, n = points.shape
        if n != self.nvars:
            raise DimensionMismatch(f"points have {n} columns, polynomials have {self.nvars} variables")
        if len(self.exps) == 0:
            return np.zeros((k, self.count))
        powers = np.empty((self.maxdeg + 1, k, n))
        powers[0] = 1.0
        for d in range(1, self.maxdeg + 1):
            powers[d] = powers[d - 1] * points
        values = np.ones((k, len(self.exps)))
        for i in range(n):
            values *= powers[self.exps[:, i], :, i].T
        return values @ self.coef


def evaluate_stack(polys: Sequence[Polynomial], points: np.ndarray) -> np.ndarray:
    """Evaluate several polynomials at once; returns ``(k, len(polys))``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not polys:
        return np.zeros((len(points), 0))
    return StackEvaluator(polys, points.shape[1])(points)


# -- monomial bases ------------------------------------------------------


@dataclass(frozen=True)
class MonomialBasis:
    """Graded enumeration of all exponents with total degree <= ``degree``.

    Within one degree the exponents are sorted in decreasing lexicographic
    order, so the degree-one block reads ``x1, x2, ..., xn``.
    """

    nvars: int
    degree: int
    monomials: tuple[MultiIndex, ...]
    index: Mapping[MultiIndex, int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.monomials[i]

    def position(self, alpha: Sequence[int]) -> int:
        return self.index[tuple(alpha)]


def _exponents_of_degree(n: int, d: int) -> list[MultiIndex]:
    out = []
    for combo in combinations_with_replacement(range(n), d):
        alpha = [0] * n
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    out.sort(reverse=True)
    return out


@lru_cache(maxsize=None)
def basis(n: int, d: int) -> MonomialBasis:
    if n < 1 or d < 0:
        raise PolynomialError(f"invalid basis request n={n}, d={d}")
    monos: list[MultiIndex] = []
    for k in range(d + 1):
        monos.extend(_exponents_of_degree(n, k))
    return MonomialBasis(n, d, tuple(monos), {a: i for i, a in enumerate(monos)})


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d, n) if d >= 0 else 0


def sum_of_squares(nvars: int, power: int = 2) -> Polynomial:
    """``sum_k z_k**power``; handy for ball and quartic constraints."""
    terms = {}
    for i in range(nvars):
        alpha = [0] * nvars
        alpha[i] = power
        terms[tuple(alpha)] = 1.0
    return Polynomial(terms, nvars)


# -- text grammar --------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?P<vi>\d+))"
    r"|(?P<op>[-+*^()])"
    r")"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError("unexpected character", text, pos)
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), start))
        elif m.group("var") is not None:
            tokens.append(("var", int(m.group("vi")), start))
        else:
            tokens.append(("op", m.group("op"), start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    # expr   := ['+'|'-'] term (('+'|'-') term)*
    # term   := factor ('*' factor)*
    # factor := atom ('^' integer)?
    # atom   := number | x<i> | '(' expr ')'

    def __init__(self, text: str, nvars: int):
        self.text = text
        self.n = nvars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg: str):
        raise ParseError(msg, self.text, self.peek()[2])

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.fail("empty polynomial")
        p = self.expr()
        if self.peek()[0] != "end":
            self.fail("unexpected token")
        return p

    def expr(self) -> Polynomial:
        sign = 1.0
        if self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1.0 if self.take()[1] == "-" else 1.0
        p = self.term().scale(sign)
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.factor()
        return p

    def factor(self) -> Polynomial:
        p = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, val, pos = self.take()
            if kind != "num" or val != int(val) or val < 0:
                raise ParseError("exponent must be a nonnegative integer", self.text, pos)
            p = p ** int(val)
        return p

    def atom(self) -> Polynomial:
        kind, val, pos = self.take()
        if kind == "num":
            return Polynomial.constant(val, self.n)
        if kind == "var":
            if not 1 <= val <= self.n:
                raise ParseError(f"variable x{val} outside x1..x{self.n}", self.text, pos)
            return Polynomial.variable(val - 1, self.n)
        if kind == "op" and val == "(":
            p = self.expr()
            if self.take()[1] != ")":
                raise ParseError("missing ')'", self.text, pos)
            return p
        if kind == "op" and val == "-":
            return -self.factor()
        raise ParseError("expected a number, variable or '('", self.text, pos)


def parse_polynomial(text: str, nvars: int) -> Polynomial:
    """Parse text such as ``"1 + 2*x1 - 0.5*x1^2*x2"`` (variables are 1-based)."""
    if not isinstance(text, str):
        raise ParseError(f"expected a string, got {type(text).__name__}")
    return _Parser(text, nvars).parse()


def _format_coef(c: float) -> str:
    s = repr(float(c))
    return s[:-2] if s.endswith(".0") and "e" not in s else s


def format_polynomial(p: Polynomial) -> str:
    """Render ``p`` in the text grammar; round-trips through ``parse_polynomial``."""
    if p.is_zero():
        return "0"
    parts = []
    for alpha in sorted(p._terms, key=lambda a: (_degree(a), tuple(-x for x in a))):
        c = p._terms[alpha]
        mono = "*".join(
            f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(alpha) if e
        )
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if not mono:
            body = _format_coef(mag)
        elif mag == 1.0:
            body = mono
        else:
            body = f"{_format_coef(mag)}*{mono}"
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def polynomial_from_map(data: Mapping[str, float] | Iterable, nvars: int) -> Polynomial:
    """Build from the coefficient-map form ``{"(a1,...,an)": c}``
    or a list of ``[[a1, ..., an], c]`` pairs."""
    terms: dict[MultiIndex, float] = {}
    if isinstance(data, Mapping):
        pairs = []
        for key, c in data.items():
            nums = re.findall(r"-?\d+", key)
            pairs.append(([int(x) for x in nums], c))
    else:
        pairs = [(list(a), c) for a, c in data]
    for alpha, c in pairs:
        if len(alpha) != nvars:
            raise DimensionMismatch(f"exponent {alpha} does not have length {nvars}")
        key = tuple(alpha)
        terms[key] = terms.get(key, 0.0) + float(c)
    return Polynomial(terms, nvars)


def exponent_key(alpha: Sequence[int]) -> str:
    return "(" + ",".join(str(int(a)) for a in alpha) + ")"
