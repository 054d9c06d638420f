"""Product-trapezoid quadrature for the Riemann-Liouville fractional integral.

The rule integrates the piecewise-linear interpolant of ``g`` on a uniform grid
against the kernel ``(t_n - s)^(alpha - 1)`` exactly::

    int_0^{t_n} (t_n - s)^(alpha-1) g(s) ds  ~=  sum_j w[n, j] g(t_j)

with ``w[n, j] = h^alpha / (alpha (alpha + 1)) * c[n, j]`` and

* ``c[n, 0] = (n-1)^(alpha+1) - (n-1-alpha) n^alpha``
* ``c[n, j] = (k+1)^(alpha+1) + (k-1)^(alpha+1) - 2 k^(alpha+1)``, ``k = n - j``
* ``c[n, n] = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

GAMMA_RANGE = (0.05, 50.0)

# beyond this index the closed forms lose digits to cancellation
_SERIES_CUTOFF = 16
_SERIES_TERMS = 24


def gamma_fn(z: float) -> float:
    """Gamma function on the supported range ``[0.05, 50]``."""
    lo, hi = GAMMA_RANGE
    if not lo <= z <= hi:
        raise ValueError(f"gamma_fn argument {z!r} outside supported range [{lo}, {hi}]")
    return math.gamma(z)


@dataclass(frozen=True)
class UniformGrid:
    """Nodes ``t_i = i T / N`` for ``i = 0..N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ValueError(f"grid needs a positive integer N, got {self.N!r}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"grid needs a positive horizon T, got {self.T!r}")

    @property
    def h(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1, dtype=np.float64) * self.T / self.N
        t[-1] = self.T
        t.setflags(write=False)
        return t

    def __len__(self) -> int:
        return self.N + 1


def _binomials(p: float, count: int) -> np.ndarray:
    """Generalized binomial coefficients ``C(p, m)`` for ``m = 0..count-1``."""
    out = np.empty(count)
    out[0] = 1.0
    for m in range(1, count):
        out[m] = out[m - 1] * (p - m + 1) / m
    return out


def _second_differences(alpha: float, kmax: int) -> np.ndarray:
    """``b[k] = (k+1)^p + (k-1)^p - 2 k^p`` for ``k = 0..kmax`` (``b[0]`` unused)."""
    p = alpha + 1.0
    k = np.arange(kmax + 1, dtype=np.float64)
    b = np.zeros(kmax + 1)

    direct = (k >= 1) & (k < _SERIES_CUTOFF)
    kd = k[direct]
    b[direct] = (kd + 1) ** p + (kd - 1) ** p - 2 * kd**p

    far = k >= _SERIES_CUTOFF
    if far.any():
        kf = k[far]
        x = 1.0 / kf
        binom = _binomials(p, _SERIES_TERMS)
        acc = np.zeros_like(kf)
        # only even powers survive the symmetric difference
        for m in range(_SERIES_TERMS - 1, 1, -1):
            if m % 2 == 0:
                acc = acc * x * x + 2 * binom[m]
        b[far] = kf**p * x * x * acc
    return b


def _first_weights(alpha: float, nmax: int) -> np.ndarray:
    """``c0[n] = (n-1)^p - (n-1-alpha) n^alpha`` for ``n = 0..nmax`` (``c0[0]`` unused)."""
    p = alpha + 1.0
    n = np.arange(nmax + 1, dtype=np.float64)
    c0 = np.zeros(nmax + 1)

    direct = (n >= 1) & (n < _SERIES_CUTOFF)
    nd = n[direct]
    c0[direct] = (nd - 1) ** p - (nd - 1 - alpha) * nd**alpha

    far = n >= _SERIES_CUTOFF
    if far.any():
        nf = n[far]
        x = -1.0 / nf
        binom = _binomials(p, _SERIES_TERMS)
        acc = np.zeros_like(nf)
        # (1+x)^p - 1 - p x = sum_{m>=2} C(p, m) x^m
        for m in range(_SERIES_TERMS - 1, 1, -1):
            acc = acc * x + binom[m]
        c0[far] = nf**p * x * x * acc
    return c0


@dataclass(frozen=True)
class QuadWeights:
    """Product-trapezoid weights for ``(t - s)^(alpha - 1)`` on ``grid``.

    Rows are generated on demand from two length-``N + 1`` tables, so memory
    stays linear in ``N``.
    """

    alpha: float
    grid: UniformGrid
    _b: np.ndarray = field(init=False, repr=False, compare=False)
    _c0: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "_b", _second_differences(self.alpha, self.grid.N))
        object.__setattr__(self, "_c0", _first_weights(self.alpha, self.grid.N))

    @property
    def scale(self) -> float:
        a = self.alpha
        return self.grid.h**a / (a * (a + 1.0))

    def row(self, n: int) -> np.ndarray:
        """Weights ``w[n, 0..n]``; an empty row (``[0]``) for ``n = 0``."""
        if not 0 <= n <= self.grid.N:
            raise IndexError(f"row {n} outside 0..{self.grid.N}")
        if n == 0:
            return np.zeros(1)
        c = np.empty(n + 1)
        c[0] = self._c0[n]
        c[1:n] = self._b[n - 1 : 0 : -1]
        c[n] = 1.0
        return self.scale * c

    def block(self, n0: int, n1: int) -> np.ndarray:
        """Rows ``n0..n1-1`` as an ``(n1 - n0, n1)`` array, zero-padded for ``j > n``."""
        if not 1 <= n0 < n1 <= self.grid.N + 1:
            raise IndexError(f"block [{n0}, {n1}) outside 1..{self.grid.N}")
        rows = np.arange(n0, n1)[:, None]
        k = rows - np.arange(n1)[None, :]
        c = np.where(k >= 1, self._b[np.clip(k, 0, self.grid.N)], 0.0)
        c[k == 0] = 1.0
        c[:, 0] = self._c0[n0:n1]
        return self.scale * c

    def matrix(self) -> np.ndarray:
        """Full ``(N + 1, N + 1)`` lower-triangular weight matrix (row 0 is zero)."""
        out = np.zeros((self.grid.N + 1, self.grid.N + 1))
        out[1:, :] = self.block(1, self.grid.N + 1)
        return out


def build_weights(alpha: float, grid: UniformGrid) -> QuadWeights:
    return QuadWeights(float(alpha), grid)


def sequential_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Strict left-to-right summation along ``axis`` (bit-reproducible)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[axis] == 0:
        return np.sum(values, axis=axis)
    return np.take(np.cumsum(values, axis=axis), -1, axis=axis)


def rl_integral(alpha: float, weights: QuadWeights, samples: np.ndarray) -> float:
    r"""Approximate :math:`I^\alpha g(t_n)` from samples ``g(t_0), ..., g(t_n)``."""
    if not math.isclose(alpha, weights.alpha, rel_tol=0.0, abs_tol=0.0):
        raise ValueError(f"weights were built for alpha={weights.alpha}, not {alpha}")
    g = np.asarray(samples, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("samples must be a nonempty 1d array")
    n = g.size - 1
    if n > weights.grid.N:
        raise ValueError(f"{g.size} samples exceed the {weights.grid.N + 1} grid nodes")
    if n == 0:
        return 0.0
    return float(sequential_sum(weights.row(n) * g)) / gamma_fn(alpha)
