"""Solver and hypothesis checker for quadratic fractional integral equations
with a linearly modified (pantograph) argument."""

__version__ = "0.1.0"

from .expr import DomainError, Expression, ParseError, evaluate, parse
from .hypotheses import HypothesisReport, SupEstimate, check_all, find_r0, sup_on_ray, u_star
from .noncompactness import TrajectoryFamily, diam_at, family_modulus, generation_test, modulus, mu_estimate
from .problem import ProblemSpec, Trajectory, eval_scriptF, eval_U, load_problem, pantograph_value
from .quadrature import QuadWeights, UniformGrid, build_weights, gamma_fn, rl_integral
from .solver import SolveConfig, SolveReport, mittag_leffler, self_convergence, solve

__all__ = [
    "DomainError", "Expression", "ParseError", "evaluate", "parse",
    "HypothesisReport", "SupEstimate", "check_all", "find_r0", "sup_on_ray", "u_star",
    "TrajectoryFamily", "diam_at", "family_modulus", "generation_test", "modulus", "mu_estimate",
    "ProblemSpec", "Trajectory", "eval_scriptF", "eval_U", "load_problem", "pantograph_value",
    "QuadWeights", "UniformGrid", "build_weights", "gamma_fn", "rl_integral",
    "SolveConfig", "SolveReport", "mittag_leffler", "self_convergence", "solve",
]
