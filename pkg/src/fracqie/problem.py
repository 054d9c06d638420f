"""Problem instances and the fixed-point operator on grid trajectories.

A problem is the quadratic fractional Volterra equation with a pantograph
term::

    x(t) = a(t) + f(t, x(t)) / Gamma(alpha) * int_0^t u(t, s, x(s), x(lam s)) (t - s)^(alpha-1) ds

The right-hand side is split into ``U x`` (the fractional integral of
``u``) and ``script_F x = a + f(., x) * U x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .expr import DomainError, Expression, ExpressionError, parse
from .quadrature import QuadWeights, UniformGrid, build_weights, gamma_fn, sequential_sum

DEFAULT_N = 1024

#: problem-file key -> variables the expression may use
EXPRESSION_SLOTS: dict[str, tuple[str, ...]] = {
    "a": ("t",),
    "f": ("t", "x"),
    "u": ("t", "s", "x", "y"),
    "m": ("t",),
    "n": ("t",),
    "Phi": ("p", "q"),
    "f0": ("t",),
}
REQUIRED_KEYS = ("alpha", "lambda", "T", "a", "f", "u")
OPTIONAL_KEYS = ("N", "m", "n", "Phi", "f0", "r0", "name")

# element budget of one evaluation block in eval_U_all
_BLOCK_ELEMENTS = 1 << 21


class ProblemError(ValueError):
    """Invalid problem document; ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float
    lam: float
    T: float
    N: int
    a: Expression
    f: Expression
    u: Expression
    m: Expression | None = None
    n: Expression | None = None
    Phi: Expression | None = None
    f0: Expression | None = None
    #: ball radius to certify; when absent the smallest feasible radius is used
    r0: float | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ProblemError(f"must lie in (0, 1], got {self.alpha!r}", "alpha")
        if not (0.0 < self.lam < 1.0):
            raise ProblemError(f"must lie in (0, 1), got {self.lam!r}", "lambda")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ProblemError(f"must be positive, got {self.T!r}", "T")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ProblemError(f"must be a positive integer, got {self.N!r}", "N")
        if self.r0 is not None and not (math.isfinite(self.r0) and self.r0 > 0):
            raise ProblemError(f"must be positive, got {self.r0!r}", "r0")
        for key, allowed in EXPRESSION_SLOTS.items():
            e = getattr(self, key)
            if e is not None and not e.variables <= set(allowed):
                extra = ", ".join(sorted(e.variables - set(allowed)))
                raise ProblemError(f"references variable(s) outside {allowed}: {extra}", key)
        if self.Phi is not None:
            phi00 = self.Phi(p=0.0, q=0.0)
            if abs(phi00) > 1e-12:
                raise ProblemError(f"Phi(0, 0) must be 0, got {phi00!r}", "Phi")

    @property
    def grid(self) -> UniformGrid:
        return UniformGrid(self.T, self.N)

    def with_N(self, N: int) -> ProblemSpec:
        return replace(self, N=int(N))

    def weights(self) -> QuadWeights:
        return build_weights(self.alpha, self.grid)

    def f_at_zero(self, t: Any) -> Any:
        """``|f(t, 0)|``, from ``f0`` when given."""
        if self.f0 is not None:
            return np.abs(self.f0(t=t))
        return np.abs(self.f(t=t, x=np.zeros_like(np.asarray(t, dtype=float))))

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.name:
            doc["name"] = self.name
        doc.update(alpha=self.alpha, **{"lambda": self.lam}, T=self.T, N=self.N)
        for key in EXPRESSION_SLOTS:
            e = getattr(self, key)
            if e is not None:
                doc[key] = str(e)
        if self.r0 is not None:
            doc["r0"] = self.r0
        return doc


@dataclass(frozen=True)
class Trajectory:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.grid.N + 1,):
            raise ValueError(f"trajectory has {v.size} values for {self.grid.N + 1} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: UniformGrid, g: Expression) -> Trajectory:
        return cls(grid, np.broadcast_to(g(t=grid.nodes), grid.nodes.shape))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


# {{{ loading


def _number(doc: Mapping[str, Any], key: str) -> float:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemError(f"expected a number, got {v!r}", key)
    return float(v)


def problem_from_mapping(doc: Mapping[str, Any]) -> ProblemSpec:
    if not isinstance(doc, Mapping):
        raise ProblemError("problem document must be an object")
    for key in REQUIRED_KEYS:
        if key not in doc:
            raise ProblemError("required field is missing", key)
    unknown = set(doc) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ProblemError("unknown field", sorted(unknown)[0])

    N = doc.get("N", DEFAULT_N)
    if isinstance(N, bool) or not isinstance(N, int):
        raise ProblemError(f"expected an integer, got {N!r}", "N")

    exprs: dict[str, Expression | None] = {}
    for key, variables in EXPRESSION_SLOTS.items():
        src = doc.get(key)
        if src is None:
            exprs[key] = None
            continue
        if not isinstance(src, str):
            raise ProblemError(f"expected an expression string, got {src!r}", key)
        try:
            exprs[key] = parse(src, variables)
        except ExpressionError as exc:
            raise ProblemError(str(exc), key) from exc

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ProblemError("expected a string", "name")

    return ProblemSpec(
        alpha=_number(doc, "alpha"),
        lam=_number(doc, "lambda"),
        T=_number(doc, "T"),
        N=N,
        r0=_number(doc, "r0") if doc.get("r0") is not None else None,
        name=name,
        **exprs,  # type: ignore[arg-type]
    )


def load_problem(document: str | bytes | Path | Mapping[str, Any]) -> ProblemSpec:
    """Build a validated :class:`ProblemSpec` from JSON text, a path or a mapping."""
    if isinstance(document, Path):
        document = document.read_text(encoding="utf-8")
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ProblemError(f"not valid JSON: {exc}") from exc
    return problem_from_mapping(document)  # type: ignore[arg-type]


# }}}


# {{{ operators


def _interp(x: Trajectory, tau: np.ndarray) -> np.ndarray:
    grid = x.grid
    pos = np.asarray(tau, dtype=np.float64) * grid.N / grid.T
    near = np.round(pos)
    # snap to nodes so interpolation is exact there
    pos = np.where(np.abs(pos - near) <= 1e-9 * np.maximum(1.0, near), near, pos)
    i = np.clip(np.floor(pos).astype(np.int64), 0, grid.N - 1)
    w = pos - i
    v = x.values
    return np.where(w == 0.0, v[i], (1.0 - w) * v[i] + w * v[i + 1])


def pantograph_value(x: Trajectory, tau: float) -> float:
    """Linear interpolation of ``x`` at ``tau``, exact at grid nodes."""
    T = x.grid.T
    if not (0.0 <= tau <= T * (1 + 1e-12)):
        raise ValueError(f"tau={tau!r} outside [0, {T}]")
    return float(_interp(x, np.asarray(min(tau, T))))


def pantograph_values(x: Trajectory, lam: float) -> np.ndarray:
    """``x(lam * t_j)`` for every node ``t_j``."""
    return _interp(x, lam * x.grid.nodes)


def _check_match(p: ProblemSpec, w: QuadWeights, x: Trajectory | None = None) -> None:
    if w.alpha != p.alpha or w.grid != p.grid:
        raise ValueError("quadrature weights do not match the problem's alpha/grid")
    if x is not None and x.grid != p.grid:
        raise ValueError("trajectory grid does not match the problem grid")


def _located(exc: DomainError, n: int, j: int | None) -> DomainError:
    where = f"node n={n}" if j is None else f"node n={n}, s-node j={j}"
    out = DomainError(f"{exc.kind} ({where})", exc.subexpression, exc.where)
    out.node = (n, j)  # type: ignore[attr-defined]
    return out


def eval_U(p: ProblemSpec, w: QuadWeights, x: Trajectory, n: int) -> float:
    """``(U x)(t_n)`` via the weight row at node ``n``."""
    _check_match(p, w, x)
    if not 0 <= n <= p.N:
        raise IndexError(f"node {n} outside 0..{p.N}")
    if n == 0:
        return 0.0
    t = x.grid.nodes
    y = pantograph_values(x, p.lam)
    try:
        vals = p.u(t=t[n], s=t[: n + 1], x=x.values[: n + 1], y=y[: n + 1])
    except DomainError as exc:
        j = exc.where[0] if exc.where else None
        raise _located(exc, n, j) from exc
    vals = np.broadcast_to(vals, (n + 1,))
    return float(sequential_sum(w.row(n) * vals)) / gamma_fn(p.alpha)


def eval_U_all(p: ProblemSpec, w: QuadWeights, x: Trajectory) -> np.ndarray:
    """``(U x)(t_n)`` for all nodes, evaluated in row blocks."""
    _check_match(p, w, x)
    N = p.N
    t = x.grid.nodes
    xv = x.values
    y = pantograph_values(x, p.lam)
    out = np.zeros(N + 1)

    block = max(1, _BLOCK_ELEMENTS // (N + 1))
    for n0 in range(1, N + 1, block):
        n1 = min(n0 + block, N + 1)
        rows = np.arange(n0, n1)
        # j > n is padding: clamp to the diagonal so u is only evaluated for s <= t
        J = np.minimum(np.arange(n1)[None, :], rows[:, None])
        try:
            vals = p.u(t=t[rows][:, None], s=t[J], x=xv[J], y=y[J])
        except DomainError as exc:
            r, j = exc.where if exc.where and len(exc.where) == 2 else (0, None)
            n = n0 + r
            raise _located(exc, n, None if j is None else min(j, n)) from exc
        vals = np.broadcast_to(vals, J.shape)
        out[n0:n1] = sequential_sum(w.block(n0, n1) * vals, axis=1)

    return out / gamma_fn(p.alpha)


def eval_scriptF(p: ProblemSpec, w: QuadWeights, x: Trajectory) -> Trajectory:
    """Apply ``x -> a + f(., x) * U x`` node-wise."""
    U = eval_U_all(p, w, x)
    t = x.grid.nodes
    try:
        a = np.broadcast_to(p.a(t=t), t.shape)
        fx = np.broadcast_to(p.f(t=t, x=x.values), t.shape)
    except DomainError as exc:
        raise _located(exc, exc.where[0] if exc.where else 0, None) from exc
    with np.errstate(all="ignore"):
        y = a + fx * U
    y[0] = a[0]
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.isfinite(y)))
        raise DomainError(f"non-finite result (node n={bad})", "a + f * U", (bad,))
    return Trajectory(x.grid, y)


# }}}
