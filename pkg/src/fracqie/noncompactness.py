"""Discrete estimators of the modulus-of-continuity measure of noncompactness.

For a finite family ``X`` on a shared grid:

* ``modulus(x, eps, T_cut)`` is the largest ``|x_i - x_j|`` over nodes in
  ``[0, T_cut]`` at distance at most ``eps``;
* ``diam_at(X, n)`` is the spread of the members at node ``n``;
* ``mu_estimate`` adds the modulus of the family at the smallest ``eps`` and
  the largest tail diameter on ``[tail_start, T]``.

These are finite-horizon, finite-family estimators; they never certify
membership in the kernel of the measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .problem import ProblemSpec, Trajectory, eval_scriptF
from .quadrature import QuadWeights, UniformGrid

DEFAULT_SLACK = 0.15
NOISE_FLOOR = 1e-8
DEFAULT_SEED = 1234
DEFAULT_MEMBERS = 8
DEFAULT_EPS_MULTIPLES = (8, 4, 2, 1)

_GRID_TOL = 1e-9


@dataclass(frozen=True, init=False)
class TrajectoryFamily:
    grid: UniformGrid
    members: tuple[np.ndarray, ...]
    tail_start: float

    def __init__(self, members: Sequence[Trajectory | np.ndarray], grid: UniformGrid | None = None, tail_start: float | None = None) -> None:
        if not members:
            raise ValueError("a family needs at least one member")
        if grid is None:
            first = members[0]
            if not isinstance(first, Trajectory):
                raise ValueError("grid is required when members are plain arrays")
            grid = first.grid
        arrays = []
        for m in members:
            if isinstance(m, Trajectory):
                if m.grid != grid:
                    raise ValueError("all members must share the family grid")
                m = m.values
            v = np.array(m, dtype=np.float64)
            if v.shape != (grid.N + 1,) or not np.all(np.isfinite(v)):
                raise ValueError("members must be finite and match the grid")
            v.setflags(write=False)
            arrays.append(v)
        if tail_start is None:
            tail_start = grid.T / 2
        if not 0.0 < tail_start < grid.T:
            raise ValueError(f"tail_start must lie in (0, {grid.T}), got {tail_start!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "members", tuple(arrays))
        object.__setattr__(self, "tail_start", float(tail_start))

    def as_matrix(self) -> np.ndarray:
        return np.vstack(self.members)

    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(self.grid, v) for v in self.members]

    def centered(self) -> TrajectoryFamily:
        """Members minus the first member.

        Differences against a member (rather than the mean) are exact, so a
        family of identical trajectories centers to exact zeros.
        """
        M = self.as_matrix()
        return TrajectoryFamily(list(M - M[0]), self.grid, self.tail_start)


def _lag(grid: UniformGrid, eps: float) -> int:
    if eps < grid.h * (1 - _GRID_TOL):
        raise ValueError(f"eps={eps!r} is below the grid step h={grid.h!r}")
    return int(math.floor(eps / grid.h * (1 + _GRID_TOL)))


def _last_node(grid: UniformGrid, T_cut: float | None) -> int:
    if T_cut is None:
        return grid.N
    if T_cut < 0:
        raise ValueError(f"T_cut must be nonnegative, got {T_cut!r}")
    return min(grid.N, int(math.floor(T_cut / grid.h * (1 + _GRID_TOL))))


def _window_oscillation(v: np.ndarray, lag: int) -> float:
    if v.size < 2 or lag == 0:
        return 0.0
    win = sliding_window_view(v, min(lag + 1, v.size), axis=-1)
    return float(np.max(win.max(axis=-1) - win.min(axis=-1)))


def modulus(x: Trajectory, eps: float, T_cut: float | None = None) -> float:
    """Discrete modulus of continuity of ``x`` on ``[0, T_cut]``."""
    lag = _lag(x.grid, eps)
    last = _last_node(x.grid, T_cut)
    return _window_oscillation(x.values[: last + 1], lag)


def family_modulus(X: TrajectoryFamily, eps: float, T_cut: float | None = None) -> float:
    lag = _lag(X.grid, eps)
    last = _last_node(X.grid, T_cut)
    return max(_window_oscillation(v[: last + 1], lag) for v in X.members)


def diam_at(X: TrajectoryFamily, n: int) -> float:
    if not 0 <= n <= X.grid.N:
        raise IndexError(f"node {n} outside 0..{X.grid.N}")
    col = [v[n] for v in X.members]
    return float(max(col) - min(col))


@dataclass(frozen=True)
class MuEstimate:
    omega_hat: float
    c_hat: float
    mu_hat: float
    eps_table: tuple[tuple[float, float], ...]


def mu_estimate(X: TrajectoryFamily, eps_list: Sequence[float], center: bool = False) -> MuEstimate:
    """Modulus part, tail-diameter part and their sum for the family ``X``.

    With ``center=True`` the moduli are measured on the members minus the
    first member; diameters are unaffected by the shift.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list must be nonempty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")

    Y = X.centered() if center else X
    table = tuple((e, family_modulus(Y, e)) for e in eps_list)
    omega_hat = table[-1][1]

    M = X.as_matrix()
    start = int(math.ceil(X.tail_start / X.grid.h * (1 - _GRID_TOL)))
    tail = M[:, start:]
    c_hat = float(np.max(tail.max(axis=0) - tail.min(axis=0)))
    return MuEstimate(omega_hat, c_hat, omega_hat + c_hat, table)


# {{{ generation test


@dataclass(frozen=True)
class GenerationRow:
    generation: int
    mu_hat: float
    ratio: float | None
    #: None for generation 0 and for ratios excluded below the noise floor
    passed: bool | None


@dataclass(frozen=True)
class GenerationTable:
    rows: tuple[GenerationRow, ...]
    k_ref: float
    slack: float
    centered: bool
    eps_list: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)

    def to_csv(self) -> str:
        lines = ["generation,mu_hat,ratio,pass"]
        for r in self.rows:
            ratio = "" if r.ratio is None else format(r.ratio, ".17g")
            flag = {None: "excluded" if r.ratio is not None else "", True: "true", False: "false"}[r.passed]
            lines.append(f"{r.generation},{format(r.mu_hat, '.17g')},{ratio},{flag}")
        return "\n".join(lines) + "\n"


def seed_family(
    p: ProblemSpec,
    r0: float,
    count: int = DEFAULT_MEMBERS,
    seed: int = DEFAULT_SEED,
    amplitude: float | None = None,
) -> TrajectoryFamily:
    """Samples of ``a`` plus ``count - 1`` uniform node-wise perturbations of them.

    The perturbation amplitude defaults to ``min(0.1, r0 / 4)`` and the
    perturbations come from ``numpy.random.default_rng(seed)``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    amp = min(0.1, r0 / 4) if amplitude is None else amplitude
    base = Trajectory.sample(p.grid, p.a).values
    rng = np.random.default_rng(seed)
    members = [base] + [base + rng.uniform(-amp, amp, base.shape) for _ in range(count - 1)]
    return TrajectoryFamily(members, p.grid)


def generation_test(
    p: ProblemSpec,
    seeds: TrajectoryFamily,
    generations: int,
    k_ref: float,
    r0: float | None = None,
    eps_list: Sequence[float] | None = None,
    slack: float = DEFAULT_SLACK,
    center: bool = True,
    weights: QuadWeights | None = None,
) -> GenerationTable:
    """Apply ``script_F`` to every member repeatedly and track ``mu_hat`` per generation.

    Generation ``g`` passes when ``mu_hat[g] / mu_hat[g-1] <= k_ref + slack``;
    ratios whose denominator is below ``1e-8`` are excluded.
    """
    if generations < 2:
        raise ValueError("generations must be at least 2")
    if seeds.grid != p.grid:
        raise ValueError("seed family grid does not match the problem grid")
    radius = p.r0 if r0 is None else r0
    if radius is None:
        raise ValueError("a ball radius r0 is required (argument or problem field)")
    sup = max(float(np.max(np.abs(v))) for v in seeds.members)
    if sup > radius * (1 + 1e-12):
        raise ValueError(f"seed family leaves the ball of radius {radius}: sup norm {sup}")

    h = p.grid.h
    eps = tuple(m * h for m in DEFAULT_EPS_MULTIPLES) if eps_list is None else tuple(eps_list)
    w = weights if weights is not None else p.weights()

    family = seeds
    rows = [GenerationRow(0, mu_estimate(family, eps, center).mu_hat, None, None)]
    for g in range(1, generations + 1):
        members = [eval_scriptF(p, w, x) for x in family.trajectories()]
        family = TrajectoryFamily(members, p.grid, seeds.tail_start)
        mu = mu_estimate(family, eps, center).mu_hat
        prev = rows[-1].mu_hat
        if prev >= NOISE_FLOOR:
            ratio = mu / prev
            rows.append(GenerationRow(g, mu, ratio, ratio <= k_ref + slack))
        else:
            rows.append(GenerationRow(g, mu, mu / prev if prev > 0 else None, None))
    return GenerationTable(tuple(rows), k_ref, slack, center, eps)


# }}}
