from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracqie.quadrature import UniformGrid, build_weights, gamma_fn, rl_integral, sequential_sum


def test_gamma_values():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert gamma_fn(1.5) == pytest.approx(0.886226925452758, rel=1e-14)


@pytest.mark.parametrize("z", [0.0, -1.0, 0.01, 60.0, math.nan])
def test_gamma_range(z):
    with pytest.raises(ValueError):
        gamma_fn(z)


def test_grid():
    g = UniformGrid(3.0, 7)
    assert g.h == pytest.approx(3 / 7)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 3.0 and len(g) == 8
    with pytest.raises(ValueError):
        g.nodes[0] = 1.0
    for bad in [(0.0, 4), (1.0, 0), (math.inf, 4)]:
        with pytest.raises(ValueError):
            UniformGrid(*bad)


def test_half_order_single_step():
    w = build_weights(0.5, UniformGrid(1.0, 1))
    np.testing.assert_allclose(w.row(1), [2 / 3, 4 / 3], rtol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 5, 10])
def test_alpha_one_is_trapezoid(n):
    g = UniformGrid(2.0, 10)
    row = build_weights(1.0, g).row(n)
    expected = np.full(n + 1, g.h)
    expected[[0, -1]] = g.h / 2
    np.testing.assert_allclose(row, expected, rtol=1e-14)


def test_row_sum_at_four_steps():
    assert build_weights(0.5, UniformGrid(1.0, 4)).row(4).sum() == pytest.approx(2.0, rel=1e-14)


def _brute_weights(alpha: float, T: float, N: int, n: int) -> list[float]:
    """Integrate hat functions against the kernel one subinterval at a time."""
    mpmath.mp.dps = 30
    h = mpmath.mpf(T) / N
    t = n * h
    out = []
    for j in range(n + 1):
        total = mpmath.mpf(0)
        for lo, hi, hat in ((j - 1, j, lambda s: (s - (j - 1) * h) / h), (j, j + 1, lambda s: ((j + 1) * h - s) / h)):
            if lo < 0 or hi > n:
                continue
            # v = (t - s)^alpha removes the endpoint singularity
            a = mpmath.mpf(alpha)
            total += mpmath.quad(lambda v: hat(t - v ** (1 / a)) / a, [(t - hi * h) ** a, (t - lo * h) ** a])
        out.append(float(total))
    return out


@pytest.mark.parametrize("alpha, n", [(0.5, 3), (0.25, 6), (0.75, 20), (0.3, 40)])
def test_weights_against_direct_integration(alpha, n):
    w = build_weights(alpha, UniformGrid(1.0, 40))
    np.testing.assert_allclose(w.row(n), _brute_weights(alpha, 1.0, 40, n), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("N", [1, 7, 64, 1000])
def test_exactness_identities(alpha, N):
    g = UniformGrid(3.0, N)
    W = build_weights(alpha, g).matrix()
    t = g.nodes
    np.testing.assert_allclose(W[1:].sum(axis=1), t[1:] ** alpha / alpha, rtol=1e-12)
    np.testing.assert_allclose(W[1:] @ t, t[1:] ** (alpha + 1) / (alpha * (alpha + 1)), rtol=1e-10)


def test_block_matches_rows():
    w = build_weights(0.4, UniformGrid(2.0, 50))
    B = w.block(10, 30)
    for i, n in enumerate(range(10, 30)):
        np.testing.assert_array_equal(B[i, : n + 1], w.row(n))
        assert not B[i, n + 1 :].any()
    assert w.row(0).tolist() == [0.0]
    with pytest.raises(IndexError):
        w.row(51)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(1, 300))
def test_weights_positive(alpha, N):
    assert (build_weights(alpha, UniformGrid(1.0, N)).matrix()[1:] > 0).sum() == N * (N + 3) // 2


@pytest.mark.parametrize("alpha, beta, t", [(0.5, 0.0, 1.0), (0.5, 1.0, 1.0), (0.25, 2.0, 2.0)])
def test_power_rule(alpha, beta, t):
    g = UniformGrid(t, 4096)
    w = build_weights(alpha, g)
    approx = rl_integral(alpha, w, g.nodes**beta)
    exact = gamma_fn(beta + 1) / gamma_fn(alpha + beta + 1) * t ** (alpha + beta)
    assert abs(approx - exact) <= 1e-6


def test_small_examples():
    g = UniformGrid(1.0, 16)
    assert rl_integral(0.5, build_weights(0.5, g), np.ones(17)) == pytest.approx(1.1283791670955126, rel=1e-13)
    assert rl_integral(0.5, build_weights(0.5, g), g.nodes) == pytest.approx(0.7522527780636751, rel=1e-12)
    g2 = UniformGrid(2.0, 8)
    assert rl_integral(1.0, build_weights(1.0, g2), g2.nodes) == pytest.approx(2.0, rel=1e-15)
    assert rl_integral(0.5, build_weights(0.5, g), np.ones(1)) == 0.0


def test_prefix_samples_integrate_to_intermediate_node():
    g = UniformGrid(1.0, 32)
    w = build_weights(0.5, g)
    val = rl_integral(0.5, w, np.ones(17))
    assert val == pytest.approx(0.5**0.5 / gamma_fn(1.5), rel=1e-13)


def test_rl_integral_errors():
    w = build_weights(0.5, UniformGrid(1.0, 4))
    with pytest.raises(ValueError):
        rl_integral(0.25, w, np.ones(5))
    with pytest.raises(ValueError):
        rl_integral(0.5, w, np.ones(6))


def test_second_order_for_smooth_data():
    mpmath.mp.dps = 30
    exact = float(mpmath.e * mpmath.erf(1))  # half-order integral of exp at t = 1
    errors = []
    for N in (64, 128, 256, 512):
        g = UniformGrid(1.0, N)
        errors.append(abs(rl_integral(0.5, build_weights(0.5, g), np.exp(g.nodes)) - exact))
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 1.9, orders


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(alpha, c1, c2):
    g = UniformGrid(1.5, 40)
    w = build_weights(alpha, g)
    f1, f2 = np.sin(g.nodes), g.nodes**2
    lhs = rl_integral(alpha, w, c1 * f1 + c2 * f2)
    rhs = c1 * rl_integral(alpha, w, f1) + c2 * rl_integral(alpha, w, f2)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_sequential_sum_is_left_to_right():
    v = np.array([1e16, 1.0, -1e16, 1.0])
    assert sequential_sum(v) == ((1e16 + 1.0) - 1e16) + 1.0
    np.testing.assert_array_equal(sequential_sum(np.arange(6.0).reshape(2, 3), axis=1), [3.0, 12.0])
