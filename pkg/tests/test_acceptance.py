"""End-to-end acceptance checks.

Each test prints one ``[criterion N] PASS|FAIL`` line straight to the
terminal (also under output capture) and then asserts the same condition.
"""

from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest

from fracqie.cli import main
from fracqie.example import H, compare_constants, example_problem
from fracqie.expr import BinOp, Call, Neg, Num, UnknownVariableError, Var, parse
from fracqie.hypotheses import check_all
from fracqie.noncompactness import (
    TrajectoryFamily, diam_at, family_modulus, generation_test, modulus, seed_family,
)
from fracqie.problem import load_problem
from fracqie.quadrature import UniformGrid, build_weights, gamma_fn, rl_integral
from fracqie.solver import SolveConfig, mittag_leffler, solve


@pytest.fixture
def report_line(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


@pytest.fixture(scope="module")
def example_report():
    return check_all(example_problem(), T_hyp=1e4)


def test_criterion_01_gamma(report_line):
    g15, g05 = gamma_fn(1.5), gamma_fn(0.5)
    ok = abs(g15 - 0.8862269) <= 1e-6 and abs(g05 - math.sqrt(math.pi)) <= 1e-12
    report_line(1, ok, f"Gamma(1.5)={g15!r}, Gamma(0.5)-sqrt(pi)={g05 - math.sqrt(math.pi):.1e}")
    assert ok


def test_criterion_02_quadrature_exactness(report_line):
    worst_c = worst_l = 0.0
    for alpha, N in itertools.product((0.25, 0.5, 0.75, 1.0), (1, 7, 64, 1000)):
        g = UniformGrid(1.0, N)
        W = build_weights(alpha, g).matrix()[1:]
        t = g.nodes
        exact_c = t[1:] ** alpha / alpha
        exact_l = t[1:] ** (alpha + 1) / (alpha * (alpha + 1))
        worst_c = max(worst_c, float(np.max(np.abs(W.sum(axis=1) / exact_c - 1))))
        worst_l = max(worst_l, float(np.max(np.abs(W @ t / exact_l - 1))))
    ok = worst_c <= 1e-12 and worst_l <= 1e-10
    report_line(2, ok, f"max relative error constant {worst_c:.1e}, linear {worst_l:.1e}")
    assert ok


def test_criterion_03_power_rule(report_line):
    errors = []
    for alpha, beta, t in ((0.5, 0.0, 1.0), (0.5, 1.0, 1.0), (0.25, 2.0, 2.0)):
        g = UniformGrid(t, 4096)
        approx = rl_integral(alpha, build_weights(alpha, g), g.nodes**beta)
        exact = gamma_fn(beta + 1) / gamma_fn(alpha + beta + 1) * t ** (alpha + beta)
        errors.append(abs(approx - exact))
    ok = max(errors) <= 1e-6
    report_line(3, ok, "errors " + ", ".join(f"{e:.1e}" for e in errors))
    assert ok


def test_criterion_04_convergence_order(report_line):
    exact = math.e * math.erf(1.0)  # half-order integral of exp at t = 1
    errs = []
    for N in (64, 128, 256, 512):
        g = UniformGrid(1.0, N)
        errs.append(abs(rl_integral(0.5, build_weights(0.5, g), np.exp(g.nodes)) - exact))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = min(orders) >= 1.9
    report_line(4, ok, "observed orders " + ", ".join(f"{o:.3f}" for o in orders))
    assert ok


def test_criterion_05_mittag_leffler_fixed_point(report_line):
    p = load_problem({"alpha": 0.5, "lambda": 0.5, "T": 1.0, "N": 2048, "a": "1", "f": "1", "u": "x"})
    r = solve(p, SolveConfig(tol=1e-10, max_iter=200))
    exact = np.array([mittag_leffler(0.5, math.sqrt(t)) for t in p.grid.nodes])
    err = float(np.max(np.abs(r.solution.values - exact)))
    ok = r.converged and err <= 1e-4
    report_line(5, ok, f"converged={r.converged} in {r.iterations} iterations, sup error {err:.2e}")
    assert ok


def test_criterion_06_example_constants(report_line, example_report):
    r = example_report
    Phi = parse("p + q", ["p", "q"])
    G1 = r.stars().G(1.0, Phi)
    checks = {
        "phi*": abs(r.phi_star.value - 0.0716982) <= 1e-5 and abs(r.phi_star.argmax - 1.25) <= 1e-3,
        "psi*": abs(r.psi_star.value - 0.1) <= 1e-6 and not r.psi_star.attained,
        "k_num": abs(r.k_numerator - 0.2433966) <= 1e-5 and r.k_numerator < gamma_fn(1.5),
        "r=1": G1 <= 0,
    }
    ok = all(checks.values())
    report_line(6, ok, f"phi*={r.phi_star.value:.7f}@{r.phi_star.argmax:.4f}, psi*={r.psi_star.value:.7f} "
                       f"(attained={r.psi_star.attained}), k_numerator={r.k_numerator:.7f}, G(1)={G1:.5f}; "
                       + ", ".join(f"{k}:{v}" for k, v in checks.items()))
    assert ok


@pytest.fixture(scope="module")
def example_runs(tmp_path_factory):
    dirs = [tmp_path_factory.mktemp(f"example{i}") for i in (1, 2)]
    codes = [main(["example", "--outdir", str(d)]) for d in dirs]
    return codes, dirs


def test_criterion_07_example_derived_constants(report_line, example_report, example_runs):
    r = example_report
    Phi = parse("p + q", ["p", "q"])
    H1 = H(1.0, r)
    summary = json.loads((example_runs[1][0] / "summary.json").read_text())
    flagged = {row["constant"] for row in summary["constants"] if row["discrepancy"] and not row["matches_reference"]}
    checks = {
        "xi*": abs(r.xi_star.value - 0.0724636) <= 1e-5 and abs(r.xi_star.argmax - 0.75) <= 1e-3,
        "eta*": abs(r.eta_star.value - 0.0971143) <= 1e-5 and abs(r.eta_star.argmax - 0.3**0.4) <= 1e-3,
        "flags": {"xi_star", "eta_star"} <= flagged,
        "G(1)<=0": r.stars().G(1.0, Phi) <= 0,
        "k<1": r.k < 1,
        "H(1)": abs(H1 - 0.811) <= 5e-4 and H1 <= gamma_fn(1.5),
    }
    assert {row["constant"] for row in compare_constants(r) if row["discrepancy"]} >= {"xi_star", "eta_star"}
    ok = all(checks.values())
    report_line(7, ok, f"xi*={r.xi_star.value:.7f}@{r.xi_star.argmax:.4f}, eta*={r.eta_star.value:.7f}"
                       f"@{r.eta_star.argmax:.4f}, H(1)={H1:.4f}, k={r.k:.4f}, flagged={sorted(flagged)}; "
                       + ", ".join(f"{k}:{v}" for k, v in checks.items()))
    assert ok


def test_criterion_08_example_solve(report_line, example_report):
    p = example_problem()
    assert (p.lam, p.T, p.N) == (0.5, 40.0, 4000)
    cfg = SolveConfig(tol=1e-10, max_iter=200)
    started = time.perf_counter()
    r = solve(p, cfg)
    fine = solve(p.with_N(8000), cfg)
    elapsed = time.perf_counter() - started
    diff = float(np.max(np.abs(r.solution.values - fine.solution.values[::2])))
    late = r.late_ratios()
    marks = [v for _, v in r.tail_checkpoints]
    checks = {
        "converged": r.converged and fine.converged and r.iterations <= 200,
        "ratios": bool(late) and max(late) <= example_report.k + 0.15,
        "decreasing": [t for t, _ in r.tail_checkpoints] == [20.0, 25.0, 30.0, 35.0, 40.0]
                      and all(b < a for a, b in zip(marks, marks[1:])),
        "tail_max": r.tail_max <= 0.05,
        "self-convergence": diff <= 5e-3,
    }
    ok = all(checks.values())
    report_line(8, ok, f"{r.iterations} iterations, late ratios <= {max(late):.4f} (k+0.15={example_report.k + 0.15:.4f}), "
                       f"tail_max={r.tail_max:.5f}, |x| at 20..40: {', '.join(f'{v:.5f}' for v in marks)}, "
                       f"N=4000 vs 8000 diff {diff:.2e}, {elapsed:.0f}s; " + ", ".join(f"{k}:{v}" for k, v in checks.items()))
    assert ok


def _brute_modulus(v, lag):
    return max((abs(v[i] - v[j]) for i in range(v.size) for j in range(i, min(v.size, i + lag + 1))), default=0.0)


def test_criterion_09_noncompactness(report_line, example_report):
    rng = np.random.default_rng(99)
    failures = 0
    for _ in range(100):
        N = int(rng.integers(4, 60))
        grid = UniformGrid(float(rng.uniform(0.5, 5.0)), N)
        rows = [rng.normal(size=N + 1) * rng.uniform(0.1, 3) for _ in range(int(rng.integers(1, 6)))]
        X = TrajectoryFamily(rows, grid)
        Y = TrajectoryFamily(rows + [rng.normal(size=N + 1)], grid)
        x = X.trajectories()[0]
        e1, e2 = np.sort(rng.uniform(grid.h, grid.T, 2))
        c1, c2 = np.sort(rng.uniform(0, grid.T, 2))
        lag = int(math.floor(e1 / grid.h * (1 + 1e-9)))
        ok_case = (
            modulus(x, e1) <= modulus(x, e2)
            and modulus(x, e1, c1) <= modulus(x, e1, c2)
            and family_modulus(X, e1) <= family_modulus(Y, e1)
            and modulus(x, e1) == _brute_modulus(x.values, lag)
            and all(diam_at(X, n) == max(abs(a[n] - b[n]) for a in rows for b in rows) for n in range(N + 1))
        )
        failures += not ok_case

    p = example_problem(2000)
    table = generation_test(p, seed_family(p, 1.0, count=8), 8, example_report.k, r0=1.0)
    ratios = [row.ratio for row in table.rows if row.passed is not None]
    ok = failures == 0 and table.passed
    report_line(9, ok, f"property failures {failures}/100; generation ratios "
                       f"{min(ratios):.4f}..{max(ratios):.4f} vs bound {example_report.k + 0.15:.4f}, pass={table.passed}")
    assert ok


def _random_tree(rng, depth=0):
    if depth >= 4 or rng.random() < 0.25:
        return Var("x") if rng.random() < 0.3 else Num(float(rng.choice([0.5, 1.0, 2.0, 3.0, 1.25])))
    kind = rng.choice(["bin", "bin", "bin", "neg", "call"])
    if kind == "neg":
        return Neg(_random_tree(rng, depth + 1))
    if kind == "call":
        name = str(rng.choice(["abs", "sin", "cos", "min", "max"]))
        return Call(name, tuple(_random_tree(rng, depth + 1) for _ in range(2 if name in ("min", "max") else 1)))
    return BinOp(str(rng.choice(["+", "-", "*", "/", "^"])), _random_tree(rng, depth + 1), _random_tree(rng, depth + 1))


def _full_text(node):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_full_text(node.operand)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_full_text(a) for a in node.args)})"
    return f"({_full_text(node.left)} {node.op} {_full_text(node.right)})"


def _direct(node, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_direct(node.operand, x)
    if isinstance(node, Call):
        f = {"abs": abs, "sin": math.sin, "cos": math.cos, "min": min, "max": max}[node.name]
        return f(*(_direct(a, x) for a in node.args))
    a, b = _direct(node.left, x), _direct(node.right, x)
    if node.op == "^":
        v = a**b
        if isinstance(v, complex):
            raise ArithmeticError
        return v
    return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b, "/": lambda: a / b}[node.op]()


def test_criterion_10_parser(report_line):
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    compared = mismatches = 0
    for _ in range(500):
        node = _random_tree(rng)
        e = parse(_full_text(node), ["x"])
        roundtrip = parse(str(e), ["x"])
        x = float(rng.choice([-1.5, 0.25, 2.0]))
        try:
            expected = _direct(node, x)
            if not math.isfinite(expected):
                raise ArithmeticError
        except (ArithmeticError, ValueError):
            continue
        compared += 1
        got = e(x=x)
        mismatches += not (e.root == node and roundtrip == e and str(roundtrip) == str(e)
                           and math.isclose(got, expected, rel_tol=1e-12, abs_tol=1e-12))
    precedence = [parse("2^3^2")() == 512.0, parse("-2^2")() == -4.0, parse("8-3-2")() == 3.0,
                  parse("8/4/2")() == 1.0, parse("1+2*3^2")() == 19.0]
    try:
        parse("x + s", ["t", "x"])
        rejected = False
    except UnknownVariableError as exc:
        rejected = exc.name == "s"
    elapsed = time.perf_counter() - started
    ok = mismatches == 0 and compared >= 300 and all(precedence) and rejected and elapsed < 5
    report_line(10, ok, f"{compared} random trees compared, {mismatches} mismatches; precedence cases "
                        f"{sum(precedence)}/{len(precedence)}; undeclared rejected={rejected}; {elapsed:.2f}s")
    assert ok


def test_criterion_11_determinism(report_line, example_runs):
    codes, (d1, d2) = example_runs
    names = sorted(p.name for p in d1.iterdir() if p.name != "manifest.json")
    same = [n for n in names if (d1 / n).read_bytes() == (d2 / n).read_bytes()]
    ok = codes == [0, 0] and len(names) == 5 and same == names
    report_line(11, ok, f"exit codes {codes}; {len(same)}/{len(names)} reports byte-identical ({', '.join(names)})")
    assert ok
