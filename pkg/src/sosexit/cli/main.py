"""``sosexit`` command line interface.

Exit codes: 0 success, 2 parse or validation error, 3 solver (or simulation)
failure, 4 certificate failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from .. import certify as cert_mod
from ..mc_oracle import McError, McSettings, simulate
from ..model import ExitProblem, ModelError, add_ball, has_errors, rescale, validate
from ..parallel import thread_limit
from ..relaxation import RelaxationError, assemble
from ..sdp import SolverSettings, solve, write_sdpa
from .problem_file import ProblemFileError, load_problem
from .reports import BoundReport, BoundRow, SolveOutcome

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_CERTIFICATE = 4

log = logging.getLogger("sosexit")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- argument parsing ------------------------------------------------------


def _degrees(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part or "-" in part[1:]:
            sep = ":" if ":" in part else "-"
            lo, hi, *step = part.split(sep)
            out.extend(range(int(lo), int(hi) + 1, int(step[0]) if step else 2))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no degrees given")
    return sorted(set(out))


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("file", help="problem JSON file, or the name of a bundled problem")
    p.add_argument("--add-ball", type=_positive_float, metavar="R",
                   help="append R^2 - |z|^2 >= 0 to the interior and every boundary piece")
    p.add_argument("--rescale", action="store_true",
                   help="map the bounding box of the ball constraint onto [-1, 1]^n")


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=_positive_float, default=1e-8,
                   help="feasibility and duality-gap tolerance (default 1e-8)")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--equalities", choices=["psd-pair", "rows"], default="psd-pair",
                   help="encoding of boundary equalities (default psd-pair)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sosexit",
        description="Moment/SOS bounds on expected exit functionals of polynomial diffusions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="lower and upper bounds for a range of relaxation degrees")
    _problem_args(p)
    p.add_argument("--degrees", type=_degrees, default=[2, 4, 6, 8, 10],
                   help="comma list or range such as 2,4,6 or 2:10 (default 2,4,6,8,10)")
    p.add_argument("--sense", choices=["min", "max", "both"], default="both")
    _solver_args(p)
    p.add_argument("--certify", action="store_true", help="extract and check a certificate for each solve")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="JSON", help="write the report as JSON")
    p.add_argument("--csv", metavar="CSV", help="write the bound table as CSV")

    p = sub.add_parser("certify", help="extract and verify a dual certificate")
    _problem_args(p)
    p.add_argument("-r", "--degree", type=int, required=True)
    p.add_argument("--sense", choices=["min", "max"], default="min")
    _solver_args(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check-tol", type=_positive_float,
                   help="one tolerance for every check (default: Gram 1e-7, identity 1e-6, sampling 1e-6)")
    p.add_argument("--out", metavar="JSON", help="write certificate and report as JSON")

    p = sub.add_parser("mc", help="Euler-Maruyama estimate of the exit functional")
    _problem_args(p)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--step", type=_positive_float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-max", type=_positive_float, default=1e3)
    p.add_argument("--no-bisection", action="store_true", help="use the first outside point as exit point")
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--out", metavar="JSON")

    p = sub.add_parser("info", help="sizes of the degree-r relaxation")
    _problem_args(p)
    p.add_argument("-r", "--degree", type=int, required=True)
    p.add_argument("--equalities", choices=["psd-pair", "rows"], default="psd-pair")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")

    p = sub.add_parser("export", help="write the degree-r relaxation in sparse SDPA format")
    _problem_args(p)
    p.add_argument("-r", "--degree", type=int, required=True)
    p.add_argument("--sense", choices=["min", "max"], default="min")
    p.add_argument("--equalities", choices=["psd-pair", "rows"], default="psd-pair")
    p.add_argument("output", help="output .dat-s path")
    return parser


# -- helpers -----------------------------------------------------------------


def prepare_problem(args) -> tuple[ExitProblem, str, str]:
    """Load, transform and validate; warnings go to stderr."""
    try:
        problem, digest = load_problem(args.file)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    except ProblemFileError as exc:
        lines = [f"error: cannot read {exc.source or args.file}"] + [f"  {e}" for e in exc.errors]
        raise CliError("\n".join(lines), EXIT_INPUT) from None
    try:
        if args.add_ball is not None:
            problem = add_ball(problem, args.add_ball)
        if args.rescale:
            radius = problem.domain.radius()
            if radius is None:
                raise CliError("error: --rescale needs a ball constraint (see --add-ball)", EXIT_INPUT)
            n = problem.n
            problem = rescale(problem, [-radius] * n, [radius] * n)
    except ModelError as exc:
        raise CliError(f"error: {exc}", EXIT_INPUT) from None
    diags = validate(problem)
    for d in diags:
        if d.severity != "error":
            print(f"warning: {d}", file=sys.stderr)
    if has_errors(diags):
        lines = [f"error: {d}" for d in diags if d.severity == "error"]
        raise CliError("\n".join(lines), EXIT_INPUT)
    name = problem.name or args.file
    return problem, name, digest


def _settings(args) -> SolverSettings:
    return SolverSettings(feastol=args.tol, gaptol=args.tol, max_iters=args.max_iters, verbose=args.verbose)


def _assemble(problem, r, sense, equalities):
    try:
        return assemble(problem, r, sense, equalities=equalities)
    except RelaxationError as exc:
        raise CliError(f"error: {exc}", EXIT_INPUT) from None


def _status_hint(status: str) -> str:
    if status == "infeasible":
        return ("relaxation infeasible: the interior and boundary descriptions may be inconsistent "
                "(empty domain or boundary pieces that cannot carry the exit mass)")
    if status == "unbounded":
        return "relaxation unbounded: add a ball constraint to the boundary pieces (see --add-ball)"
    return f"solver stopped with status {status}"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- commands ------------------------------------------------------------------


def run_solve(problem, r, sense, settings, equalities="psd-pair", certify=False, samples=10_000, seed=0):
    t0 = time.perf_counter()
    sdp = _assemble(problem, r, sense, equalities)
    sol = solve(sdp.to_conic(), settings)
    outcome = SolveOutcome(r, sense, sol.status, sol.primal_objective if sol.ok else math.nan,
                           sol.primal_residual, sol.dual_residual, sol.iterations, 0.0)
    if certify and sol.ok:
        cert = cert_mod.extract(sdp, sol)
        rep = cert_mod.check(cert, problem, samples=samples, seed=seed)
        outcome.certificate = {"bound": cert.bound, **rep.to_dict()}
    outcome.seconds = time.perf_counter() - t0
    return outcome


def cmd_solve(args) -> int:
    problem, name, digest = prepare_problem(args)
    settings = _settings(args)
    senses = ["min", "max"] if args.sense == "both" else [args.sense]
    jobs = [(r, s) for r in args.degrees for s in senses]
    for r in args.degrees:
        _assemble(problem, r, "min", args.equalities)  # surface degree errors before solving

    def job(rs):
        return run_solve(problem, rs[0], rs[1], settings, args.equalities, args.certify, args.samples, args.seed)

    workers = min(thread_limit(), len(jobs))
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(rs) for rs in jobs]
    total = time.perf_counter() - t0

    rows = {r: BoundRow(r) for r in args.degrees}
    for res in results:
        if res.sense == "min":
            rows[res.degree].lower = res
        else:
            rows[res.degree].upper = res
    report = BoundReport(
        problem=name, source=args.file, sha256=digest,
        settings={"tol": args.tol, "max_iters": args.max_iters, "equalities": args.equalities,
                  "add_ball": args.add_ball, "rescale": args.rescale, "degrees": args.degrees,
                  "sense": args.sense, "certify": args.certify,
                  **({"samples": args.samples, "seed": args.seed} if args.certify else {})},
        rows=[rows[r] for r in args.degrees],
        slack=2 * (settings.gaptol + settings.feastol),
        timings={"total_seconds": total, **{f"{o.degree}/{o.sense}": o.seconds for o in results}},
    )
    print(report.format_table())
    print(f"total time {total:.2f} s")
    if args.out:
        _write(args.out, report.to_json())
    if args.csv:
        _write(args.csv, report.to_csv())
    for o in report.failures():
        print(f"degree {o.degree} {o.sense}: {_status_hint(o.status)}", file=sys.stderr)
    if report.failures():
        return EXIT_SOLVER
    for row in report.rows:
        if row.consistent(report.slack) is False:
            print(f"degree {row.degree}: lower bound exceeds upper bound", file=sys.stderr)
            return EXIT_SOLVER
    if report.certificate_failures():
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_certify(args) -> int:
    problem, name, _ = prepare_problem(args)
    sdp = _assemble(problem, args.degree, args.sense, args.equalities)
    sol = solve(sdp.to_conic(), _settings(args))
    if not sol.ok:
        print(f"error: {_status_hint(sol.status)}", file=sys.stderr)
        return EXIT_SOLVER
    cert = cert_mod.extract(sdp, sol)
    try:
        rep = cert_mod.check(cert, problem, samples=args.samples, seed=args.seed, tol=args.check_tol)
    except cert_mod.CertificateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    d = rep.to_dict()
    print(f"problem: {name}  degree {args.degree}  sense {args.sense} ({cert.kind})")
    print(f"certified bound     {cert.bound:.10f}")
    print(f"primal objective    {sol.primal_objective:.10f}")
    print(f"min Gram eigenvalue {d['worst_gram_eigenvalue']:.3e}")
    print(f"identity residual   {d['identity_residual']:.3e}")
    print(f"interior violation  {d['interior_violation']:.3e}")
    print(f"boundary violation  {d['boundary_violation']:.3e}")
    print(f"verdict             {d['verdict']}")
    for m in rep.messages:
        print(f"  {m}")
    if args.out:
        _write(args.out, json.dumps({"certificate": cert.to_dict(), "report": d}, indent=2) + "\n")
    return EXIT_OK if rep.verdict else EXIT_CERTIFICATE


def cmd_mc(args) -> int:
    problem, name, _ = prepare_problem(args)
    try:
        settings = McSettings(h=args.step, paths=args.paths, seed=args.seed, t_max=args.t_max,
                              bisection=not args.no_bisection)
        est = simulate(problem, settings)
    except (McError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    lo, hi = est.interval(args.level)
    print(f"problem: {name}  paths {est.paths}  step {settings.h:g}  seed {settings.seed}")
    print(f"E[g(X_tau)]  {est.mean:.6f}  (std. error {est.stderr:.2e})")
    print(f"{100 * args.level:g}% CI       [{lo:.6f}, {hi:.6f}]")
    print(f"E[tau]       {est.exit_time:.6f}  (std. error {est.exit_time_stderr:.2e})")
    print(f"censored     {est.censored_fraction:.4%}")
    if args.out:
        d = est.to_dict()
        d["interval"] = {"level": args.level, "bounds": [lo, hi]}
        _write(args.out, json.dumps(d, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_info(args) -> int:
    problem, name, _ = prepare_problem(args)
    sdp = _assemble(problem, args.degree, "min", args.equalities)
    st = sdp.stats()
    if args.json:
        print(json.dumps({"problem": name, **st}, indent=2))
        return EXIT_OK
    print(f"problem: {name}  dimension {problem.n}  degree {args.degree}")
    print(f"truncation degrees   t_mu = {st['t_mu']}, t_nu = {st['t_nu']}")
    for meas, count in st["variables"].items():
        print(f"  {meas:<6} moments  {count}")
    print(f"total variables      {st['total_variables']}")
    print(f"Dynkin rows          {st['dynkin_rows']}")
    if st["equality_rows"]:
        print(f"equality rows        {st['equality_rows']}")
    print(f"moments referenced by Dynkin rows  {st['referenced_moments']}")
    print("PSD blocks:")
    for label, size in st["blocks"]:
        print(f"  {size:>4} x {size:<4} {label}")
    for label in st["skipped_blocks"]:
        print(f"  skipped (degree too high): {label}")
    return EXIT_OK


def cmd_export(args) -> int:
    problem, name, _ = prepare_problem(args)
    sdp = _assemble(problem, args.degree, args.sense, args.equalities)
    comment = (f"sosexit relaxation of {name}: degree {args.degree}, sense {args.sense}"
               + (" (objective negated: SDPA minimizes)" if args.sense == "max" else ""))
    write_sdpa(sdp.to_conic(), args.output, comment)
    print(f"wrote {args.output}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "mc": cmd_mc, "info": cmd_info, "export": cmd_export}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ValueError as exc:
        if "SOSEXIT_THREADS" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        raise


if __name__ == "__main__":
    sys.exit(main())
