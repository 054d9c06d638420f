"""Command-line entry point.

Exit codes: 0 success, 1 input or environment error, 2 solver did not
converge, 3 hypotheses (or the contraction check) failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .example import (
    EXAMPLE_DOCUMENT, EXAMPLE_GENERATIONS, EXAMPLE_GENERATION_N, EXAMPLE_MEMBERS, EXAMPLE_T_HYP,
    H, compare_constants, example_problem,
)
from .expr import DomainError
from .hypotheses import DEFAULT_R_MAX, DEFAULT_T_HYP, MissingHypothesisData, check_all
from .noncompactness import DEFAULT_SEED, generation_test, seed_family
from .problem import ProblemError, ProblemSpec, load_problem
from .quadrature import gamma_fn
from .reporting import digest, dumps, trajectory_csv, write_atomic
from .solver import SolveConfig, fixed_point_residual, solve

log = logging.getLogger("fracqie")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3


class InputError(Exception):
    pass


def _load(path: str) -> tuple[ProblemSpec, bytes]:
    p = Path(path)
    try:
        data = p.read_bytes()
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc.strerror}") from None
    try:
        return load_problem(data.decode("utf-8")), data
    except (ProblemError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _manifest(command: str, config: dict[str, Any], source: bytes, started: float, outputs: list[Path]) -> str:
    return dumps({
        "command": command,
        "config": config,
        "input_digest": digest(source),
        "tool_version": __version__,
        "elapsed_seconds": time.perf_counter() - started,
        "outputs": [str(o) for o in outputs],
    })


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# {{{ solve


def run_solve(p: ProblemSpec, cfg: SolveConfig) -> tuple[dict[str, Any], str, bool]:
    report = solve(p, cfg)
    doc = {
        "problem": p.to_document(),
        "config": cfg.describe(),
        **report.to_document(),
        "late_contraction_ratios": report.late_ratios(),
        "fixed_point_residual": fixed_point_residual(p, report.solution) if report.converged else None,
    }
    return doc, trajectory_csv(report.solution), report.converged


def cmd_solve(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    p, source = _load(args.problem)
    if args.N is not None:
        p = p.with_N(args.N)
    try:
        cfg = SolveConfig(tol=args.tol, max_iter=args.max_iter, initial=args.initial)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    doc, csv, converged = run_solve(p, cfg)
    out = Path(args.out)
    report_path = _sibling(out, ".report.json")
    write_atomic(out, csv)
    write_atomic(report_path, dumps(doc))
    write_atomic(
        _sibling(out, ".manifest.json"),
        _manifest("solve", {"problem": args.problem, **p.to_document(), **cfg.describe()}, source, started, [out, report_path]),
    )
    if not converged:
        print(f"solve: not converged: {doc['diagnostic']}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"solve: converged in {doc['iterations']} iterations; tail_max={doc['tail_max']:.6g}")
    return EXIT_OK


# }}}


# {{{ check


def run_check(p: ProblemSpec, T_hyp: float, r_max: float) -> tuple[dict[str, Any], Any]:
    report = check_all(p, T_hyp=T_hyp, r_max=r_max)
    return {"problem": p.to_document(), **report.to_document()}, report


def cmd_check(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    p, source = _load(args.problem)
    try:
        doc, report = run_check(p, args.tmax, args.rmax)
    except MissingHypothesisData as exc:
        raise InputError(f"{args.problem}: {exc}") from None

    out = Path(args.out)
    write_atomic(out, dumps(doc))
    write_atomic(
        _sibling(out, ".manifest.json"),
        _manifest("check", {"problem": args.problem, "T_hyp": args.tmax, "r_max": args.rmax}, source, started, [out]),
    )
    print(f"check: feasible={report.feasible} k_numerator={report.k_numerator} k={report.k}")
    if not report.all_hold:
        failed = sorted(k for k, v in {
            "feasible": report.feasible,
            "phi_vanishes": report.phi_vanishes,
            "xi_vanishes": report.xi_vanishes,
            "phi_monotone_ok": report.phi_monotone_ok,
            "envelopes": report.f_envelope_violations == report.u_envelope_violations == 0,
            "no_errors": not report.errors,
        }.items() if not v)
        print(f"check: hypotheses fail: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


# }}}


# {{{ measure


def run_measure(p: ProblemSpec, k_ref: float, r0: float, members: int, generations: int, seed: int):
    seeds = seed_family(p, r0, count=members, seed=seed)
    return generation_test(p, seeds, generations, k_ref, r0=r0)


def cmd_measure(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    p, source = _load(args.problem)
    if args.N is not None:
        p = p.with_N(args.N)
    k_ref, r0 = args.k, args.r0 if args.r0 is not None else p.r0
    if k_ref is None or r0 is None:
        try:
            report = check_all(p)
        except MissingHypothesisData as exc:
            raise InputError(f"{args.problem}: {exc} (or pass --k and --r0)") from None
        k_ref = report.k if k_ref is None else k_ref
        r0 = report.r0 if r0 is None else r0
    if k_ref is None or r0 is None:
        print("measure: no feasible radius; cannot run the contraction check", file=sys.stderr)
        return EXIT_INFEASIBLE
    try:
        table = run_measure(p, k_ref, r0, args.members, args.generations, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    out = Path(args.out)
    write_atomic(out, table.to_csv())
    config = {"problem": args.problem, "N": p.N, "k_ref": k_ref, "r0": r0, "members": args.members,
              "generations": args.generations, "seed": args.seed, "eps_list": list(table.eps_list)}
    write_atomic(_sibling(out, ".manifest.json"), _manifest("measure", config, source, started, [out]))
    print(f"measure: pass={table.passed}")
    return EXIT_OK if table.passed else EXIT_INFEASIBLE


# }}}


# {{{ example


def cmd_example(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)  # fail before the expensive part
    source = json.dumps(EXAMPLE_DOCUMENT, sort_keys=True).encode()

    p = example_problem()
    check_doc, report = run_check(p, EXAMPLE_T_HYP, DEFAULT_R_MAX)
    cfg = SolveConfig()
    solve_doc, csv, converged = run_solve(p, cfg)

    gp = p.with_N(EXAMPLE_GENERATION_N)
    k_ref = report.k if report.k is not None else 1.0
    r0 = report.r0 if report.r0 is not None else 1.0
    table = run_measure(gp, k_ref, r0, EXAMPLE_MEMBERS, EXAMPLE_GENERATIONS, DEFAULT_SEED)

    g32 = gamma_fn(1.5)
    summary = {
        "problem": p.to_document(),
        "constants": compare_constants(report),
        "radius": {
            "r0": report.r0,
            "r0_min": report.r0_min,
            "G_at_r0": report.G_at_r0,
            "H_at_1": H(1.0, report),
            "gamma_3_2": g32,
            "r_equal_1_feasible": H(1.0, report) <= g32,
        },
        "k_numerator": report.k_numerator,
        "k": report.k,
        "k_below_one": report.k is not None and report.k < 1,
        "feasible": report.feasible,
        "hypotheses_hold": report.all_hold,
        "solve": {
            "converged": converged,
            "iterations": solve_doc["iterations"],
            "tail_max": solve_doc["tail_max"],
            "tail_monotone": solve_doc["tail_monotone"],
            "late_contraction_ratios": solve_doc["late_contraction_ratios"],
        },
        "generation_test": {
            "N": gp.N,
            "members": EXAMPLE_MEMBERS,
            "generations": EXAMPLE_GENERATIONS,
            "k_ref": k_ref,
            "slack": table.slack,
            "passed": table.passed,
        },
    }

    files = {
        "hypothesis_report.json": dumps(check_doc),
        "solve_report.json": dumps(solve_doc),
        "solution.csv": csv,
        "generations.csv": table.to_csv(),
        "summary.json": dumps(summary),
    }
    for name, text in files.items():
        write_atomic(outdir / name, text)
    config = {"T_hyp": EXAMPLE_T_HYP, "r_max": DEFAULT_R_MAX, **cfg.describe(), "generation_N": gp.N,
              "members": EXAMPLE_MEMBERS, "generations": EXAMPLE_GENERATIONS, "seed": DEFAULT_SEED}
    write_atomic(outdir / "manifest.json", _manifest("example", config, source, started, [outdir / n for n in files]))

    for row in summary["constants"]:
        flag = "match" if row["matches_reference"] else ("discrepancy" if row["discrepancy"] else "MISMATCH")
        print(f"{row['constant']:>12}: computed {row['computed']:.7f}  reference {row['reference']}  [{flag}]")
    print(f"r0=1 feasible: {summary['radius']['r_equal_1_feasible']}; k={report.k:.7f}; "
          f"converged: {converged}; generation test: {table.passed}")

    if not converged:
        return EXIT_NOT_CONVERGED
    if not (report.feasible and report.all_hold and table.passed):
        return EXIT_INFEASIBLE
    return EXIT_OK


# }}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracqie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem by Picard iteration")
    s.add_argument("problem")
    s.add_argument("--out", default="solution.csv", help="trajectory CSV (report and manifest go alongside)")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--N", type=int, default=None, help="override the grid size")
    s.add_argument("--initial", choices=("zero", "a"), default="a")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="check the existence hypotheses")
    c.add_argument("problem")
    c.add_argument("--tmax", type=float, default=DEFAULT_T_HYP, help="horizon for suprema")
    c.add_argument("--rmax", type=float, default=DEFAULT_R_MAX, help="upper end of the radius search")
    c.add_argument("--out", default="hypothesis_report.json")
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("measure", help="track the noncompactness estimator over Picard generations")
    m.add_argument("problem")
    m.add_argument("--N", type=int, default=None)
    m.add_argument("--generations", type=int, default=EXAMPLE_GENERATIONS)
    m.add_argument("--members", type=int, default=EXAMPLE_MEMBERS)
    m.add_argument("--seed", type=int, default=DEFAULT_SEED)
    m.add_argument("--k", type=float, default=None, help="reference contraction constant (default: from check)")
    m.add_argument("--r0", type=float, default=None, help="ball radius (default: problem r0 or from check)")
    m.add_argument("--out", default="generations.csv")
    m.set_defaults(func=cmd_measure)

    e = sub.add_parser("example", help="reproduce the bundled example end to end")
    e.add_argument("--outdir", default="example_output")
    e.set_defaults(func=cmd_example)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except DomainError as exc:
        print(f"error: expression domain error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
