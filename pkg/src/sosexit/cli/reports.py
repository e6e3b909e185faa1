"""Bound reports: one row per relaxation degree, rendered as text, JSON or CSV.

Wall-clock times live in their own ``timings`` field so that two runs with
the same inputs produce identical JSON apart from that field.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


@dataclass
class SolveOutcome:
    degree: int
    sense: str
    status: str
    value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    seconds: float
    certificate: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")


@dataclass
class BoundRow:
    degree: int
    lower: SolveOutcome | None = None
    upper: SolveOutcome | None = None

    def gap(self) -> float:
        if self.lower is None or self.upper is None or not (self.lower.ok and self.upper.ok):
            return math.nan
        return self.upper.value - self.lower.value

    def consistent(self, slack: float) -> bool | None:
        g = self.gap()
        if math.isnan(g):
            return None
        return bool(g >= -slack * (1.0 + abs(self.upper.value)))


def _num(v: float):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _outcome_dict(o: SolveOutcome | None) -> dict | None:
    if o is None:
        return None
    out = {
        "status": o.status,
        "value": _num(o.value),
        "primal_residual": _num(o.primal_residual),
        "dual_residual": _num(o.dual_residual),
        "iterations": o.iterations,
    }
    if o.certificate is not None:
        out["certificate"] = o.certificate
    return out


@dataclass
class BoundReport:
    problem: str
    source: str
    sha256: str
    settings: dict
    rows: list[BoundRow]
    slack: float
    timings: dict = field(default_factory=dict)

    def failures(self) -> list[SolveOutcome]:
        return [o for r in self.rows for o in (r.lower, r.upper) if o is not None and not o.ok]

    def certificate_failures(self) -> list[SolveOutcome]:
        return [o for r in self.rows for o in (r.lower, r.upper)
                if o is not None and o.certificate is not None and o.certificate.get("verdict") != "pass"]

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "source": self.source,
            "sha256": self.sha256,
            "settings": self.settings,
            "rows": [
                {
                    "degree": r.degree,
                    "lower": _outcome_dict(r.lower),
                    "upper": _outcome_dict(r.upper),
                    "gap": _num(r.gap()),
                    "consistent": r.consistent(self.slack),
                }
                for r in self.rows
            ],
            "timings": self.timings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["degree", "lower", "upper", "gap", "lower_status", "upper_status"])
        for r in self.rows:
            w.writerow([
                r.degree,
                "" if r.lower is None else repr(float(r.lower.value)),
                "" if r.upper is None else repr(float(r.upper.value)),
                "" if math.isnan(r.gap()) else repr(float(r.gap())),
                "" if r.lower is None else r.lower.status,
                "" if r.upper is None else r.upper.status,
            ])
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"problem: {self.problem}  ({self.source})",
                 f"{'degree':>6}  {'lower bound':>12}  {'upper bound':>12}  {'gap':>10}  status"]

        def cell(o: SolveOutcome | None) -> str:
            if o is None:
                return f"{'-':>12}"
            if not o.ok:
                return f"{'(' + o.status + ')':>12}"
            return f"{o.value:12.5f}"

        for r in self.rows:
            g = r.gap()
            gap = f"{g:10.2e}" if not math.isnan(g) else f"{'-':>10}"
            statuses = "/".join(o.status for o in (r.lower, r.upper) if o is not None)
            lines.append(f"{r.degree:>6}  {cell(r.lower)}  {cell(r.upper)}  {gap}  {statuses}")
        return "\n".join(lines)
