"""Numerical certification of the existence hypotheses for a problem.

For a problem with Lipschitz envelopes ``m`` (for ``f``), ``n`` and ``Phi``
(for ``u``) this builds::

    u*(t)  = max_{0 <= s <= t} |u(t, s, 0, 0)|
    phi(t) = m n t^alpha          psi(t) = m u* t^alpha
    xi(t)  = n |f(t, 0)| t^alpha  eta(t) = u* |f(t, 0)| t^alpha

estimates their suprema over ``[0, T_hyp]``, and looks for a radius ``r`` with

    G(r) = ||a|| Gamma(alpha+1) + phi* r Phi(r, r) + psi* r + xi* Phi(r, r) + eta* - r Gamma(alpha+1) <= 0

together with the contraction constant ``k = (phi* Phi(r0, r0) + psi*) / Gamma(alpha+1)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np

from .expr import Expression, ExpressionError
from .problem import ProblemSpec
from .quadrature import gamma_fn

ArrayFunction = Callable[[np.ndarray], np.ndarray]

DEFAULT_T_HYP = 1e4
DEFAULT_COARSE_POINTS = 512
DEFAULT_S_POINTS = 65
DEFAULT_R_MAX = 50.0
DEFAULT_R_TOL = 1e-12
DEFAULT_SAMPLES = 1000
DEFAULT_SEED = 20240531

UNIFORM_SPAN = 10.0
REFINE_WIDTH = 1e-10
REFINE_POINTS = 9
VANISH_TOL = 1e-6


class MissingHypothesisData(ValueError):
    def __init__(self, field: str) -> None:
        self.field = field
        super().__init__(
            f"hypothesis field {field!r} is missing from the problem; "
            "supply it to run the hypothesis check"
        )


# {{{ suprema


@dataclass(frozen=True)
class SupEstimate:
    value: float
    argmax: float
    attained: bool
    tail_value: float

    def to_document(self) -> dict[str, Any]:
        return asdict(self)


def _as_function(g: Expression | ArrayFunction) -> ArrayFunction:
    if isinstance(g, Expression):
        expr = g
        return lambda t: np.broadcast_to(expr(t=t), np.shape(t))
    return lambda t: np.broadcast_to(g(t), np.shape(t))


def scan_points(T_hyp: float, coarse_points: int) -> np.ndarray:
    """Uniform points on ``[0, min(10, T_hyp)]`` followed by log-spaced ones up to ``T_hyp``."""
    span = min(UNIFORM_SPAN, T_hyp)
    pts = np.linspace(0.0, span, coarse_points)
    if T_hyp > span:
        pts = np.concatenate([pts, np.geomspace(span, T_hyp, coarse_points)[1:]])
    pts[-1] = T_hyp
    return pts


def _refine(fn: ArrayFunction, lo: float, hi: float, best_t: float, best_v: float) -> tuple[float, float]:
    # shrink the bracket around the running best by a factor (REFINE_POINTS - 1) / 2
    while hi - lo > REFINE_WIDTH:
        ts = np.linspace(lo, hi, REFINE_POINTS)
        vs = fn(ts)
        i = int(np.argmax(vs))
        if vs[i] > best_v:
            best_t, best_v = float(ts[i]), float(vs[i])
        c = int(np.searchsorted(ts, best_t))
        c = min(max(c, 0), REFINE_POINTS - 1)
        lo, hi = float(ts[max(c - 1, 0)]), float(ts[min(c + 1, REFINE_POINTS - 1)])
    return best_t, best_v


def sup_on_ray(
    g: Expression | ArrayFunction,
    T_hyp: float = DEFAULT_T_HYP,
    coarse_points: int = DEFAULT_COARSE_POINTS,
) -> SupEstimate:
    """Estimate ``sup g`` on ``[0, T_hyp]`` by a hybrid scan plus bracket refinement."""
    if not T_hyp > 0:
        raise ValueError(f"T_hyp must be positive, got {T_hyp!r}")
    if coarse_points < 64:
        raise ValueError(f"coarse_points must be at least 64, got {coarse_points}")
    fn = _as_function(g)
    pts = scan_points(T_hyp, coarse_points)
    vals = np.asarray(fn(pts), dtype=np.float64)

    i = int(np.argmax(vals))
    best_t, best_v = float(pts[i]), float(vals[i])
    lo, hi = float(pts[max(i - 1, 0)]), float(pts[min(i + 1, pts.size - 1)])
    best_t, best_v = _refine(fn, lo, hi, best_t, best_v)

    # a maximum inside the last scan interval is a supremum approached at the boundary
    attained = best_t < pts[-2]
    return SupEstimate(best_v, best_t, bool(attained), float(vals[-1]))


def _u_at_origin(p: ProblemSpec, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    z = np.zeros(np.broadcast_shapes(np.shape(t), np.shape(s)))
    return np.abs(np.broadcast_to(p.u(t=t, s=s, x=z, y=z), z.shape))


def u_star_values(p: ProblemSpec, ts: np.ndarray, s_points: int = DEFAULT_S_POINTS) -> np.ndarray:
    """``u*(t)`` for each entry of ``ts`` (vectorized scan + bracket refinement in ``s``)."""
    if s_points < 33:
        raise ValueError(f"s_points must be at least 33, got {s_points}")
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    if np.any(ts < 0):
        raise ValueError("u* is defined for t >= 0")

    frac = np.linspace(0.0, 1.0, s_points)
    S = ts[:, None] * frac[None, :]
    V = _u_at_origin(p, ts[:, None], S)
    rows = np.arange(ts.size)
    i = np.argmax(V, axis=1)
    best_s, best_v = S[rows, i], V[rows, i]
    lo = S[rows, np.maximum(i - 1, 0)]
    hi = S[rows, np.minimum(i + 1, s_points - 1)]

    sub = np.linspace(0.0, 1.0, REFINE_POINTS)
    for _ in range(200):
        width = hi - lo
        if np.all(width <= REFINE_WIDTH * np.maximum(1.0, ts)):
            break
        S = lo[:, None] + width[:, None] * sub[None, :]
        V = _u_at_origin(p, ts[:, None], S)
        j = np.argmax(V, axis=1)
        better = V[rows, j] > best_v
        best_s = np.where(better, S[rows, j], best_s)
        best_v = np.where(better, V[rows, j], best_v)
        c = np.clip(np.round((best_s - lo) / np.where(width > 0, width, 1.0) * (REFINE_POINTS - 1)), 0, REFINE_POINTS - 1).astype(int)
        lo = S[rows, np.maximum(c - 1, 0)]
        hi = S[rows, np.minimum(c + 1, REFINE_POINTS - 1)]
    return best_v


def u_star(p: ProblemSpec, t: float, s_points: int = DEFAULT_S_POINTS) -> float:
    return float(u_star_values(p, np.array([t]), s_points)[0])


class BoundFunctions(NamedTuple):
    phi: ArrayFunction
    psi: ArrayFunction
    xi: ArrayFunction
    eta: ArrayFunction


def build_bound_functions(p: ProblemSpec, s_points: int = DEFAULT_S_POINTS) -> BoundFunctions:
    if p.m is None:
        raise MissingHypothesisData("m")
    if p.n is None:
        raise MissingHypothesisData("n")
    m_expr, n_expr, alpha = p.m, p.n, p.alpha

    def m(t: np.ndarray) -> np.ndarray:
        return np.broadcast_to(m_expr(t=t), np.shape(t))

    def n(t: np.ndarray) -> np.ndarray:
        return np.broadcast_to(n_expr(t=t), np.shape(t))

    def ta(t: np.ndarray) -> np.ndarray:
        return np.power(t, alpha)

    def ustar(t: np.ndarray) -> np.ndarray:
        return u_star_values(p, t, s_points).reshape(np.shape(t))

    def f0(t: np.ndarray) -> np.ndarray:
        return np.broadcast_to(p.f_at_zero(t), np.shape(t))

    return BoundFunctions(
        phi=lambda t: m(t) * n(t) * ta(t),
        psi=lambda t: m(t) * ustar(t) * ta(t),
        xi=lambda t: n(t) * f0(t) * ta(t),
        eta=lambda t: ustar(t) * f0(t) * ta(t),
    )


# }}}


# {{{ radius search


@dataclass(frozen=True)
class StarConstants:
    a_norm: float
    phi_star: float
    psi_star: float
    xi_star: float
    eta_star: float
    alpha: float

    def G(self, r: float, Phi: Expression | Callable[[float, float], float]) -> float:
        phi_rr = _phi(Phi, r)
        g = gamma_fn(self.alpha + 1.0)
        return (
            self.a_norm * g
            + self.phi_star * r * phi_rr
            + self.psi_star * r
            + self.xi_star * phi_rr
            + self.eta_star
            - r * g
        )


def _phi(Phi: Expression | Callable[[float, float], float], r: float) -> float:
    if isinstance(Phi, Expression):
        return float(Phi(p=r, q=r))
    return float(Phi(r, r))


def find_r0(
    constants: StarConstants,
    Phi: Expression | Callable[[float, float], float],
    r_max: float = DEFAULT_R_MAX,
    tol: float = DEFAULT_R_TOL,
) -> float | None:
    """Smallest ``r`` in ``(0, r_max]`` with ``G(r) <= 0``, or ``None``."""
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max!r}")
    grid = np.unique(
        np.concatenate([np.geomspace(r_max * 1e-12, r_max, 400), np.linspace(r_max / 400, r_max, 400)])
    )
    feasible = [i for i, r in enumerate(grid) if constants.G(float(r), Phi) <= 0]
    if not feasible:
        return None
    i = feasible[0]
    lo = float(grid[i - 1]) if i > 0 else 0.0
    hi = float(grid[i])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if constants.G(mid, Phi) <= 0:
            hi = mid
        else:
            lo = mid
    return hi


# }}}


# {{{ full check


@dataclass
class HypothesisReport:
    a_sup: SupEstimate
    ustar_samples: list[tuple[float, float]]
    phi_star: SupEstimate
    psi_star: SupEstimate
    xi_star: SupEstimate
    eta_star: SupEstimate
    phi_vanishes: bool
    phi_tail: float
    xi_vanishes: bool
    xi_tail: float
    Phi_at_origin: float
    phi_monotone_ok: bool
    phi_monotone_violations: int
    f_envelope_violations: int
    u_envelope_violations: int
    r0_min: float | None
    r0: float | None
    r0_requested: float | None
    G_at_r0: float | None
    k_numerator: float | None
    k: float | None
    gamma_alpha_plus_1: float
    feasible: bool
    scan: dict[str, Any]
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        """Feasibility plus every spot check (vanishing, monotonicity, envelopes)."""
        return (
            self.feasible
            and self.phi_vanishes
            and self.xi_vanishes
            and self.phi_monotone_ok
            and self.f_envelope_violations == 0
            and self.u_envelope_violations == 0
            and not self.errors
        )

    def stars(self) -> StarConstants:
        return StarConstants(
            self.a_sup.value, self.phi_star.value, self.psi_star.value,
            self.xi_star.value, self.eta_star.value, self.scan["alpha"],
        )

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        for key, value in self.__dict__.items():
            if isinstance(value, SupEstimate):
                value = value.to_document()
            elif key == "ustar_samples":
                value = [{"t": t, "u_star": v} for t, v in value]
            doc[key] = value
        doc["all_hold"] = self.all_hold
        return doc


def _vanishes(fn: ArrayFunction, T_hyp: float, coarse_points: int) -> tuple[bool, float]:
    pts = scan_points(T_hyp, coarse_points)
    tail = pts[pts >= T_hyp / 10]
    vals = np.asarray(fn(tail))
    decreasing = bool(np.all(vals[1:] <= vals[:-1] + 1e-15))
    return bool(abs(vals[-1]) < VANISH_TOL and decreasing), float(vals[-1])


def _envelope_checks(p: ProblemSpec, rng: np.random.Generator, samples: int, t_span: float, radius: float) -> tuple[int, int]:
    assert p.m is not None and p.n is not None and p.Phi is not None
    t = rng.uniform(0.0, t_span, samples)
    x1, x2 = rng.uniform(-radius, radius, (2, samples))
    lhs = np.abs(np.asarray(p.f(t=t, x=x2)) - np.asarray(p.f(t=t, x=x1)))
    rhs = np.asarray(p.m(t=t)) * np.abs(x2 - x1)
    f_bad = int(np.sum(lhs > rhs * (1 + 1e-9) + 1e-12))

    s = t * rng.uniform(0.0, 1.0, samples)
    xa, ya, xb, yb = rng.uniform(-radius, radius, (4, samples))
    lhs = np.abs(np.asarray(p.u(t=t, s=s, x=xb, y=yb)) - np.asarray(p.u(t=t, s=s, x=xa, y=ya)))
    rhs = np.asarray(p.n(t=t)) * np.asarray(p.Phi(p=np.abs(xb - xa), q=np.abs(yb - ya)))
    u_bad = int(np.sum(lhs > rhs * (1 + 1e-9) + 1e-12))
    return f_bad, u_bad


def _monotone_check(Phi: Expression, rng: np.random.Generator, samples: int, upper: float) -> int:
    p1, q1 = rng.uniform(0.0, upper, (2, samples))
    p2 = p1 + rng.uniform(0.0, 1.0, samples) * (upper - p1)
    q2 = q1 + rng.uniform(0.0, 1.0, samples) * (upper - q1)
    v1 = np.asarray(Phi(p=p1, q=q1))
    v2 = np.asarray(Phi(p=p2, q=q2))
    return int(np.sum(v1 > v2 + 1e-12 * (1 + np.abs(v2))))


def check_all(
    p: ProblemSpec,
    T_hyp: float = DEFAULT_T_HYP,
    coarse_points: int = DEFAULT_COARSE_POINTS,
    r_max: float = DEFAULT_R_MAX,
    r_tol: float = DEFAULT_R_TOL,
    s_points: int = DEFAULT_S_POINTS,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> HypothesisReport:
    """Assemble the full hypothesis report for ``p``.

    Failures of individual items (domain errors) are collected in
    ``errors`` and the affected fields are left at neutral values. Missing
    ``m``, ``n`` or ``Phi`` raise :class:`MissingHypothesisData`.
    """
    for key in ("m", "n", "Phi"):
        if getattr(p, key) is None:
            raise MissingHypothesisData(key)
    assert p.Phi is not None
    bounds = build_bound_functions(p, s_points)
    errors: dict[str, str] = {}
    nan_sup = SupEstimate(math.nan, math.nan, False, math.nan)

    def guarded(key: str, fn: Callable[[], Any], default: Any) -> Any:
        try:
            return fn()
        except (ExpressionError, ArithmeticError, ValueError) as exc:
            errors[key] = str(exc)
            return default

    sups = {
        "a_sup": guarded("a_sup", lambda: sup_on_ray(lambda t: np.abs(np.broadcast_to(p.a(t=t), np.shape(t))), T_hyp, coarse_points), nan_sup),
    }
    for name in ("phi", "psi", "xi", "eta"):
        fn = getattr(bounds, name)
        sups[name] = guarded(f"{name}_star", lambda fn=fn: sup_on_ray(fn, T_hyp, coarse_points), nan_sup)

    phi_vanishes, phi_tail = guarded("phi_vanishes", lambda: _vanishes(bounds.phi, T_hyp, coarse_points), (False, math.nan))
    xi_vanishes, xi_tail = guarded("xi_vanishes", lambda: _vanishes(bounds.xi, T_hyp, coarse_points), (False, math.nan))

    sample_t = scan_points(T_hyp, 33)
    ustar = guarded("ustar_samples", lambda: u_star_values(p, sample_t, s_points), np.full(sample_t.shape, math.nan))

    rng = np.random.default_rng(seed)
    phi00 = float(p.Phi(p=0.0, q=0.0))
    violations = guarded("phi_monotone", lambda: _monotone_check(p.Phi, rng, samples, 2 * r_max), samples)
    f_bad, u_bad = guarded(
        "envelopes",
        lambda: _envelope_checks(p, rng, samples, min(T_hyp, UNIFORM_SPAN), 2 * r_max),
        (samples, samples),
    )

    stars = StarConstants(
        sups["a_sup"].value, sups["phi"].value, sups["psi"].value,
        sups["xi"].value, sups["eta"].value, p.alpha,
    )
    g = gamma_fn(p.alpha + 1.0)
    r0_min = r0 = G_r0 = k_num = k = None
    feasible = False
    if all(math.isfinite(v) for v in asdict(stars).values()):
        r0_min = guarded("r0", lambda: find_r0(stars, p.Phi, r_max, r_tol), None)
        r0 = p.r0 if p.r0 is not None else r0_min
        if r0 is not None:
            G_r0 = stars.G(r0, p.Phi)
            k_num = stars.phi_star * _phi(p.Phi, r0) + stars.psi_star
            k = k_num / g
            feasible = G_r0 <= 0.0 and k_num < g

    return HypothesisReport(
        a_sup=sups["a_sup"],
        ustar_samples=[(float(t), float(v)) for t, v in zip(sample_t, ustar)],
        phi_star=sups["phi"],
        psi_star=sups["psi"],
        xi_star=sups["xi"],
        eta_star=sups["eta"],
        phi_vanishes=phi_vanishes,
        phi_tail=phi_tail,
        xi_vanishes=xi_vanishes,
        xi_tail=xi_tail,
        Phi_at_origin=phi00,
        phi_monotone_ok=violations == 0,
        phi_monotone_violations=violations,
        f_envelope_violations=f_bad,
        u_envelope_violations=u_bad,
        r0_min=r0_min,
        r0=r0,
        r0_requested=p.r0,
        G_at_r0=G_r0,
        k_numerator=k_num,
        k=k,
        gamma_alpha_plus_1=g,
        feasible=feasible,
        scan={
            "alpha": p.alpha,
            "T_hyp": T_hyp,
            "coarse_points": coarse_points,
            "scan_point_count": int(scan_points(T_hyp, coarse_points).size),
            "s_points": s_points,
            "refine_width": REFINE_WIDTH,
            "r_max": r_max,
            "r_tol": r_tol,
            "random_samples": samples,
            "seed": seed,
        },
        errors=errors,
    )


# }}}
