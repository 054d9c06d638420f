"""The bundled example instance and its reference constants.

``lambda = 0.5`` is a choice made here; the instance as originally stated
leaves the delay factor free.
"""

from __future__ import annotations

import math
from typing import Any

from .hypotheses import HypothesisReport
from .problem import ProblemSpec, problem_from_mapping
from .quadrature import gamma_fn

EXAMPLE_DOCUMENT: dict[str, Any] = {
    "name": "fractional quadratic example, alpha = 1/2",
    "alpha": 0.5,
    "lambda": 0.5,
    "T": 40.0,
    "N": 4000,
    "a": "t*exp(-t)",
    "f": "(t + t^2*x)/2",
    "u": "(abs(x) + abs(y))*exp(-2*t - s) + 1/(1 + 5*t^(5/2))",
    "m": "t^2/2",
    "n": "exp(-2*t)",
    "Phi": "p + q",
    "f0": "t/2",
    "r0": 1.0,
}

EXAMPLE_T_HYP = 1e4
EXAMPLE_GENERATION_N = 2000
EXAMPLE_GENERATIONS = 8
EXAMPLE_MEMBERS = 8

#: printed constants of the example, with their printed precision
PUBLISHED = {
    "a_norm": 0.3678794,
    "phi_star": 0.0716982,
    "psi_star": 0.1,
    "xi_star": 0.0543477,
    "eta_star": 0.0410503,
    "k_numerator": 0.2433966,
    "gamma_3_2": 0.886227,
    "H1_excess": 0.3931423,
}

DISCREPANCIES = {
    "xi_star": (
        "reference value equals (1/2)(3/4)^(5/2) e^(-3/2) = phi(3/4); the defined "
        "xi(t) = (1/2) t^(3/2) e^(-2t) peaks at t = 3/4 with value (1/2)(3/4)^(3/2) e^(-3/2)"
    ),
    "eta_star": (
        "the defined eta(t) = t^(3/2) / (2 (1 + 5 t^(5/2))) is stationary where "
        "t^(5/2) = 3/10, i.e. t = 0.3^(2/5); at the reference location t = 0.2^(2/5) "
        "it evaluates to about 0.0952, not to the reference value"
    ),
    "H1_excess": "2 phi* + psi* + 2 xi* + eta*; differs only through xi* and eta*",
}


def example_problem(N: int | None = None) -> ProblemSpec:
    p = problem_from_mapping(EXAMPLE_DOCUMENT)
    return p if N is None else p.with_N(N)


def H(r: float, report: HypothesisReport) -> float:
    """Left-hand side of the radius inequality specialised to ``Phi(p, q) = p + q``."""
    return (
        gamma_fn(1.5) * report.a_sup.value
        + 2 * r * r * report.phi_star.value
        + r * report.psi_star.value
        + 2 * r * report.xi_star.value
        + report.eta_star.value
    )


def _digits(ref: float) -> float:
    """Half a unit in the last printed digit of ``ref`` (7 decimals for these constants)."""
    text = repr(ref)
    decimals = len(text.split(".")[1]) if "." in text else 0
    return 0.5 * 10.0 ** (-decimals)


def compare_constants(report: HypothesisReport) -> list[dict[str, Any]]:
    computed = {
        "a_norm": report.a_sup.value,
        "phi_star": report.phi_star.value,
        "psi_star": report.psi_star.value,
        "xi_star": report.xi_star.value,
        "eta_star": report.eta_star.value,
        "k_numerator": report.k_numerator,
        "gamma_3_2": report.gamma_alpha_plus_1,
        "H1_excess": H(1.0, report) - gamma_fn(1.5) * report.a_sup.value,
    }
    rows = []
    for key, ref in PUBLISHED.items():
        value = computed[key]
        # the printed constants are truncated ("0.0716982..."), so allow one unit in the last digit
        tol = 2 * _digits(ref)
        matches = value is not None and math.isfinite(value) and abs(value - ref) <= tol
        rows.append({
            "constant": key,
            "computed": value,
            "reference": ref,
            "matches_reference": bool(matches),
            "discrepancy": key in DISCREPANCIES,
            "note": DISCREPANCIES.get(key, ""),
        })
    return rows
