"""JSON problem files.

A problem file looks like::

    {
      "name": "scalar",
      "dimension": 1,
      "drift": ["1 + 2*x1"],
      "diffusion": [["1.4142135623730951*x1"]],
      "domain": {
        "interior": ["x1*(1 - x1) >= 0", "1 - x1^2 >= 0"],
        "boundary": [{"eq": ["x1*(1 - x1)"], "ineq": [], "label": "endpoints"}]
      },
      "g": "x1^2",
      "initial": {"type": "dirac", "point": [0.5]}
    }

Every polynomial may also be given in coefficient-map form, either
``{"(a1,...,an)": c}`` or ``[[[a1, ..., an], c], ...]``. Inequalities are
``"lhs >= rhs"`` or ``"lhs <= rhs"``; a bare polynomial means ``p >= 0``.
Equalities are ``"lhs = rhs"`` or a bare polynomial meaning ``p = 0``.
Extra keys ``description`` and ``notes`` are kept but otherwise ignored.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources

from ..model import (Domain, ExitProblem, InitialLaw, ModelError, SdeModel, SemialgebraicPiece,
                     validate)
from ..polyalg import (ParseError, Polynomial, PolynomialError, exponent_key, format_polynomial,
                       parse_polynomial, polynomial_from_map)

TOP_KEYS = {"name", "description", "notes", "dimension", "drift", "diffusion", "domain", "g", "initial"}


@dataclass
class Located:
    where: str
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        pos = ""
        if self.line is not None:
            pos = f" (line {self.line}, column {self.column})"
        elif self.column is not None:
            pos = f" (column {self.column})"
        return f"{self.where}{pos}: {self.message}"


class ProblemFileError(ValueError):
    def __init__(self, errors: list[Located], source: str = ""):
        self.errors = errors
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(str(e) for e in errors))


class _Reader:
    def __init__(self):
        self.errors: list[Located] = []

    def fail(self, where: str, message: str, column: int | None = None):
        self.errors.append(Located(where, message, column=column))

    def poly(self, value, n: int, where: str, offset: int = 0, whole: str | None = None) -> Polynomial | None:
        try:
            if isinstance(value, str):
                return parse_polynomial(value, n)
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return Polynomial.constant(float(value), n)
            if isinstance(value, (dict, list)):
                return polynomial_from_map(value, n)
        except ParseError as exc:
            col = offset + exc.pos + 1 if exc.pos >= 0 else None
            self.fail(where, f"{exc.reason} in {whole if whole is not None else repr(value)}", col)
            return None
        except (PolynomialError, ValueError, TypeError) as exc:
            self.fail(where, str(exc))
            return None
        self.fail(where, f"expected a polynomial, got {type(value).__name__}")
        return None

    def relation(self, value, n: int, where: str, kind: str) -> Polynomial | None:
        """``kind`` is ``">="`` for inequalities or ``"="`` for equalities."""
        if not isinstance(value, str):
            return self.poly(value, n, where)
        ops = [">=", "<="] if kind == ">=" else ["="]
        for op in ops:
            if op in value:
                if kind == "=" and (">=" in value or "<=" in value):
                    break
                lhs, _, rhs = value.partition(op)
                if op in rhs or "=" in rhs:
                    self.fail(where, f"more than one relation in {value!r}")
                    return None
                left = self.poly(lhs, n, where, 0, repr(value))
                right = self.poly(rhs, n, where, len(lhs) + len(op), repr(value))
                if left is None or right is None:
                    return None
                return right - left if op == "<=" else left - right
        if any(op in value for op in (">=", "<=", "=", ">", "<")):
            expected = "'>=' or '<='" if kind == ">=" else "'='"
            self.fail(where, f"expected {expected} in {value!r}")
            return None
        return self.poly(value, n, where)


def _need(reader: _Reader, data: dict, key: str, where: str, kind=None):
    if key not in data:
        reader.fail(f"{where}.{key}" if where else key, "missing field")
        return None
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        reader.fail(f"{where}.{key}" if where else key, f"expected {_kind_name(kind)}")
        return None
    return value


def _kind_name(kind) -> str:
    if kind is list:
        return "an array"
    if kind is dict:
        return "an object"
    return kind.__name__


def problem_from_dict(data, source: str = "") -> ExitProblem:
    """Build an :class:`ExitProblem`; raises :class:`ProblemFileError` with every located error."""
    r = _Reader()
    if not isinstance(data, dict):
        raise ProblemFileError([Located("<root>", "expected a JSON object")], source)
    for key in sorted(set(data) - TOP_KEYS):
        r.fail(key, "unknown field")
    n = data.get("dimension")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ProblemFileError([Located("dimension", "expected a positive integer")] + r.errors, source)

    drift_raw = _need(r, data, "drift", "", list)
    drift = []
    if drift_raw is not None:
        if len(drift_raw) != n:
            r.fail("drift", f"dimension mismatch: expected {n} entries, got {len(drift_raw)}")
        drift = [r.poly(v, n, f"drift[{i}]") for i, v in enumerate(drift_raw)]

    diff_raw = _need(r, data, "diffusion", "", list)
    diffusion = []
    if diff_raw is not None:
        if len(diff_raw) != n:
            r.fail("diffusion", f"dimension mismatch: expected {n} rows, got {len(diff_raw)}")
        widths = set()
        for i, row in enumerate(diff_raw):
            if not isinstance(row, list):
                r.fail(f"diffusion[{i}]", "expected an array")
                continue
            widths.add(len(row))
            diffusion.append([r.poly(v, n, f"diffusion[{i}][{j}]") for j, v in enumerate(row)])
        if len(widths) > 1:
            r.fail("diffusion", f"rows have different lengths {sorted(widths)}")

    interior: list = []
    boundary: list = []
    dom = _need(r, data, "domain", "", dict)
    if dom is not None:
        for key in sorted(set(dom) - {"interior", "boundary"}):
            r.fail(f"domain.{key}", "unknown field")
        ints = _need(r, dom, "interior", "domain", list)
        if ints is not None:
            interior = [r.relation(v, n, f"domain.interior[{i}]", ">=") for i, v in enumerate(ints)]
            if not ints:
                r.fail("domain.interior", "at least one inequality is required")
        bnds = _need(r, dom, "boundary", "domain", list)
        if bnds is not None:
            if not bnds:
                r.fail("domain.boundary", "at least one boundary piece is required")
            for k, piece in enumerate(bnds):
                where = f"domain.boundary[{k}]"
                if not isinstance(piece, dict):
                    r.fail(where, "expected an object")
                    continue
                for key in sorted(set(piece) - {"eq", "ineq", "label"}):
                    r.fail(f"{where}.{key}", "unknown field")
                eqs = piece.get("eq", [])
                ineqs = piece.get("ineq", [])
                if not isinstance(eqs, list) or not isinstance(ineqs, list):
                    r.fail(where, "'eq' and 'ineq' must be arrays")
                    continue
                if not eqs and not ineqs:
                    r.fail(where, "piece has no defining polynomials")
                    continue
                label = piece.get("label", f"piece{k + 1}")
                if not isinstance(label, str):
                    r.fail(f"{where}.label", "expected a string")
                    label = f"piece{k + 1}"
                boundary.append((
                    [r.relation(v, n, f"{where}.ineq[{i}]", ">=") for i, v in enumerate(ineqs)],
                    [r.relation(v, n, f"{where}.eq[{i}]", "=") for i, v in enumerate(eqs)],
                    label,
                ))

    g = None
    if "g" in data:
        g = r.poly(data["g"], n, "g")
    else:
        r.fail("g", "missing field")

    initial = None
    init = _need(r, data, "initial", "", dict)
    if init is not None:
        kind = init.get("type")
        if kind == "dirac":
            pt = init.get("point")
            if (not isinstance(pt, list) or len(pt) != n
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pt)):
                r.fail("initial.point", f"expected an array of {n} numbers")
            else:
                initial = InitialLaw.dirac([float(v) for v in pt])
        elif kind == "moments":
            deg = init.get("degree")
            vals = init.get("values")
            if not isinstance(deg, int) or deg < 0:
                r.fail("initial.degree", "expected a nonnegative integer")
            elif not isinstance(vals, dict):
                r.fail("initial.values", "expected an object keyed by exponent tuples")
            else:
                moms = {}
                for key, v in vals.items():
                    try:
                        alpha = tuple(int(t) for t in key.strip("() ").split(","))
                    except ValueError:
                        r.fail(f"initial.values[{key!r}]", "bad exponent key")
                        continue
                    if len(alpha) != n:
                        r.fail(f"initial.values[{key!r}]", f"dimension mismatch: expected {n} exponents")
                        continue
                    moms[alpha] = float(v)
                initial = InitialLaw.from_moments(moms, deg)
        else:
            r.fail("initial.type", f"expected 'dirac' or 'moments', got {kind!r}")

    if r.errors:
        raise ProblemFileError(r.errors, source)
    try:
        m = len(diffusion[0]) if diffusion else 0
        sde = SdeModel(tuple(drift), tuple(tuple(row) for row in diffusion))
        if m == 0:
            raise ModelError("diffusion needs at least one column")
        domain = Domain(SemialgebraicPiece(tuple(interior), (), "interior"),
                        tuple(SemialgebraicPiece(tuple(i), tuple(e), lab) for i, e, lab in boundary))
        return ExitProblem(sde, domain, g, initial, str(data.get("name", "")))
    except (ModelError, PolynomialError) as exc:
        raise ProblemFileError([Located("<problem>", str(exc))], source) from None


def problem_to_dict(problem: ExitProblem, description: str | None = None) -> dict:
    out: dict = {}
    if problem.name:
        out["name"] = problem.name
    if description:
        out["description"] = description
    out["dimension"] = problem.n
    out["drift"] = [format_polynomial(p) for p in problem.sde.drift]
    out["diffusion"] = [[format_polynomial(p) for p in row] for row in problem.sde.diffusion]
    dom = problem.domain
    out["domain"] = {
        "interior": [f"{format_polynomial(p)} >= 0" for p in dom.interior.inequalities],
        "boundary": [
            {"eq": [format_polynomial(p) for p in pc.equalities],
             "ineq": [f"{format_polynomial(p)} >= 0" for p in pc.inequalities],
             "label": pc.label}
            for pc in dom.boundary
        ],
    }
    out["g"] = format_polynomial(problem.g)
    law = problem.initial
    if law.kind == "dirac":
        out["initial"] = {"type": "dirac", "point": list(law.point)}
    else:
        out["initial"] = {"type": "moments", "degree": law.degree,
                          "values": {exponent_key(a): v for a, v in sorted(law.moments.items())}}
    return out


def loads_problem(text: str, source: str = "") -> ExitProblem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError([Located("<json>", exc.msg, exc.lineno, exc.colno)], source) from None
    return problem_from_dict(data, source)


def dumps_problem(problem: ExitProblem, description: str | None = None) -> str:
    return json.dumps(problem_to_dict(problem, description), indent=2) + "\n"


def bundled_names() -> list[str]:
    root = resources.files("sosexit") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve(path: str) -> tuple[str, bytes]:
    """Read a problem file from disk, or a bundled one by name (``scalar`` or ``scalar.json``)."""
    if os.path.exists(path):
        with open(path, "rb") as fh:
            return path, fh.read()
    name = os.path.basename(path)
    stem = name[:-5] if name.endswith(".json") else name
    if stem in bundled_names() and os.sep not in path.rstrip(os.sep):
        res = resources.files("sosexit") / "data" / f"{stem}.json"
        return f"<bundled:{stem}.json>", res.read_bytes()
    raise FileNotFoundError(f"no such problem file {path!r} (bundled: {', '.join(bundled_names())})")


def load_problem(path: str) -> tuple[ExitProblem, str]:
    """Returns the problem and the SHA-256 of the file bytes."""
    source, raw = resolve(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ProblemFileError([Located("<file>", "not valid UTF-8")], source) from None
    return loads_problem(text, source), hashlib.sha256(raw).hexdigest()


def parse_problem(path: str, check: bool = True) -> ExitProblem:
    """Load a problem; with ``check`` also run :func:`validate` and raise on its errors."""
    problem, _ = load_problem(path)
    if check:
        errors = [Located("<validate>", d.message + (f" (hint: {d.hint})" if d.hint else ""))
                  for d in validate(problem) if d.severity == "error"]
        if errors:
            raise ProblemFileError(errors, path)
    return problem
