"""Picard iteration for ``x = script_F x`` and its diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .expr import DomainError
from .problem import ProblemSpec, Trajectory, _interp, eval_scriptF
from .quadrature import QuadWeights

log = logging.getLogger(__name__)

DIVERGENCE_GUARD = 1e6
TAIL_FRACTION = 0.25
TAIL_CHECKPOINTS = 5
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-10
    max_iter: int = 200
    #: ``"a"``, ``"zero"`` or an explicit starting trajectory
    initial: str | Trajectory = "a"

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol!r}")
        if not (isinstance(self.max_iter, int) and self.max_iter >= 1):
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if isinstance(self.initial, str) and self.initial not in ("a", "zero"):
            raise ValueError(f"initial must be 'a', 'zero' or a Trajectory, got {self.initial!r}")

    def describe(self) -> dict[str, Any]:
        initial = self.initial if isinstance(self.initial, str) else "user"
        return {"tol": self.tol, "max_iter": self.max_iter, "initial": initial}


@dataclass(frozen=True)
class SolveReport:
    solution: Trajectory
    iterations: int
    residual_history: list[float]
    contraction_ratios: list[float]
    converged: bool
    tail_max: float
    tail_monotone: bool
    tail_checkpoints: list[tuple[float, float]] = field(default_factory=list)
    diagnostic: str = ""

    def late_ratios(self, floor: float = 1e-12) -> list[float]:
        """Second half of the contraction ratios, skipping steps below ``floor``."""
        d = self.residual_history
        ratios = [
            r for k, r in enumerate(self.contraction_ratios, start=1) if d[k - 1] >= floor
        ]
        return ratios[len(ratios) // 2 :]

    def to_document(self) -> dict[str, Any]:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": self.residual_history,
            "contraction_ratios": self.contraction_ratios,
            "tail_max": self.tail_max,
            "tail_monotone": self.tail_monotone,
            "tail_checkpoints": [{"t": t, "abs_x": v} for t, v in self.tail_checkpoints],
            "diagnostic": self.diagnostic,
            "grid": {"T": self.solution.grid.T, "N": self.solution.grid.N},
        }


def _initial(p: ProblemSpec, cfg: SolveConfig) -> Trajectory:
    grid = p.grid
    if isinstance(cfg.initial, Trajectory):
        if cfg.initial.grid != grid:
            raise ValueError("initial trajectory grid does not match the problem grid")
        return cfg.initial
    if cfg.initial == "zero":
        return Trajectory(grid, np.zeros(grid.N + 1))
    return Trajectory.sample(grid, p.a)


def tail_diagnostics(x: Trajectory) -> tuple[float, bool, list[tuple[float, float]]]:
    """Max ``|x|`` over the last quarter of nodes and the decay check on ``[T/2, T]``."""
    v = np.abs(x.values)
    start = int(math.floor((1 - TAIL_FRACTION) * x.grid.N))
    tail_max = float(np.max(v[start:]))

    T = x.grid.T
    ts = np.linspace(T / 2, T, TAIL_CHECKPOINTS)
    vals = np.abs(_interp(x, ts))
    monotone = bool(np.all(vals[1:] <= vals[:-1] + MONOTONE_SLACK))
    return tail_max, monotone, [(float(a), float(b)) for a, b in zip(ts, vals)]


def solve(p: ProblemSpec, cfg: SolveConfig | None = None, weights: QuadWeights | None = None) -> SolveReport:
    """Iterate ``x <- script_F x`` from the configured start until the sup-norm step is below ``tol``."""
    cfg = cfg or SolveConfig()
    w = weights if weights is not None else p.weights()
    x = _initial(p, cfg)

    residuals: list[float] = []
    ratios: list[float] = []
    converged = False
    diagnostic = ""
    iterations = 0

    for k in range(cfg.max_iter):
        try:
            x_new = eval_scriptF(p, w, x)
        except DomainError as exc:
            if "non-finite" not in exc.kind:
                raise
            diagnostic = f"diverged at iteration {k + 1}: {exc}"
            break
        iterations = k + 1

        d = float(np.max(np.abs(x_new.values - x.values)))
        residuals.append(d)
        if len(residuals) > 1:
            ratios.append(d / residuals[-2])
        x = x_new
        log.debug("iteration %d residual %.3e", iterations, d)

        if not math.isfinite(d) or d > DIVERGENCE_GUARD:
            diagnostic = (
                f"diverged at iteration {iterations}: residual {d:.3e} "
                f"exceeds guard {DIVERGENCE_GUARD:.0e}"
            )
            break
        if d <= cfg.tol:
            converged = True
            break
    else:
        diagnostic = f"no convergence within {cfg.max_iter} iterations (last residual {residuals[-1]:.3e})"

    tail_max, monotone, checkpoints = tail_diagnostics(x)
    return SolveReport(
        solution=x,
        iterations=iterations,
        residual_history=residuals,
        contraction_ratios=ratios,
        converged=converged,
        tail_max=tail_max,
        tail_monotone=monotone,
        tail_checkpoints=checkpoints,
        diagnostic=diagnostic,
    )


def fixed_point_residual(p: ProblemSpec, x: Trajectory, weights: QuadWeights | None = None) -> float:
    w = weights if weights is not None else p.weights()
    return float(np.max(np.abs(eval_scriptF(p, w, x).values - x.values)))


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    N_fine: int
    sup_diff: float
    converged: bool


def self_convergence(
    p: ProblemSpec, cfg: SolveConfig | None, N_list: Sequence[int]
) -> list[ConvergenceRow]:
    """Sup-norm differences on shared nodes between consecutive resolutions."""
    N_list = [int(N) for N in N_list]
    if len(N_list) < 2:
        raise ValueError("need at least two resolutions")
    for N, M in zip(N_list, N_list[1:]):
        if M <= N or M % N:
            raise ValueError(f"resolutions must nest: {M} is not a multiple of {N}")

    cfg = cfg or SolveConfig()
    reports = {N: solve(p.with_N(N), cfg) for N in N_list}
    rows = []
    for N, M in zip(N_list, N_list[1:]):
        coarse = reports[N].solution.values
        fine = reports[M].solution.values[:: M // N]
        rows.append(
            ConvergenceRow(
                N, M, float(np.max(np.abs(coarse - fine))),
                reports[N].converged and reports[M].converged,
            )
        )
    return rows


# {{{ Mittag-Leffler oracle

ML_MAX_ABS_Z = 30.0
_ML_MAX_TERMS = 20000


def _ml_term(k: int, alpha: float, z: float) -> float:
    arg = k * alpha + 1.0
    if arg < 170.0:
        try:
            return z**k / math.gamma(arg)
        except OverflowError:
            pass
    if z == 0.0:
        return 0.0
    sign = -1.0 if (z < 0 and k % 2) else 1.0
    return sign * math.exp(k * math.log(abs(z)) - math.lgamma(arg))


def mittag_leffler(alpha: float, z: float) -> float:
    """One-parameter Mittag-Leffler function ``E_alpha(z)`` by its power series.

    Raises ``ValueError`` outside ``|z| <= 30`` and ``OverflowError`` when the
    series cannot deliver ~1e-10 relative accuracy in double precision (a
    result beyond the float range, or cancellation for large negative ``z``).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not abs(z) <= ML_MAX_ABS_Z:
        raise ValueError(f"|z| must be at most {ML_MAX_ABS_Z}, got {z!r}")

    terms: list[float] = []
    partial = 0.0
    prev = math.inf
    for k in range(_ML_MAX_TERMS):
        term = _ml_term(k, alpha, z)
        if not math.isfinite(term):
            raise OverflowError(f"E_{alpha}({z}) exceeds the double-precision range")
        terms.append(term)
        partial += term
        if k > 0 and abs(term) <= abs(prev) and abs(term) < 1e-16 * abs(partial):
            break
        prev = term
    else:
        raise OverflowError(f"series for E_{alpha}({z}) did not settle")

    total = math.fsum(terms)
    if not math.isfinite(total):
        raise OverflowError(f"E_{alpha}({z}) exceeds the double-precision range")
    largest = max(abs(t) for t in terms)
    if total == 0.0 or largest / abs(total) > 1e5:
        raise OverflowError(f"cancellation in the series for E_{alpha}({z}) is too severe")
    return total


# }}}
