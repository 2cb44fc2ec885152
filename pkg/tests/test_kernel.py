import math

import numpy as np
import pytest
from scipy import integrate

from levypolymer.kernel import (LogValue, bridge_fill, heat_kernel_log, kernel_chain_log, log_sum,
                                simplex_series_coefficient, squared_kernel_integral)


def test_logvalue_arithmetic():
    a, b = LogValue.from_value(3.0), LogValue.from_value(5.0)
    assert (a + b).value == pytest.approx(8.0)
    assert (a * b).value == pytest.approx(15.0)
    assert (b / a).value == pytest.approx(5 / 3)
    assert (a ** 2).value == pytest.approx(9.0)
    assert (LogValue.zero() + a).value == pytest.approx(3.0)
    assert LogValue.zero().is_zero
    with pytest.raises(ValueError):
        LogValue.from_value(-1.0)
    # no overflow for huge values
    big = LogValue(1e4) + LogValue(1e4)
    assert big.log == pytest.approx(1e4 + math.log(2))


def test_log_sum_empty():
    assert log_sum([]) == -math.inf
    assert log_sum([0.0, 0.0]) == pytest.approx(math.log(2))


@pytest.mark.parametrize("d", [1, 2])
def test_heat_kernel_normalized(d):
    t = 0.37
    if d == 1:
        val, _ = integrate.quad(lambda y: math.exp(heat_kernel_log(t, [y])), -np.inf, np.inf)
    else:
        val, _ = integrate.dblquad(lambda y, z: math.exp(heat_kernel_log(t, [y, z])), -8, 8, -8, 8)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_heat_kernel_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        heat_kernel_log(0.0, [0.0])


def test_chapman_kolmogorov_chain():
    # int rho_s(y) rho_t(x - y) dy = rho_{s+t}(x)
    s, t, x = 0.2, 0.5, 0.3
    val, _ = integrate.quad(lambda y: math.exp(kernel_chain_log([s, s + t], [[y], [x]])), -np.inf, np.inf)
    assert val == pytest.approx(math.exp(heat_kernel_log(s + t, [x])), rel=1e-9)


def test_squared_kernel_integral():
    t = 0.3
    val, _ = integrate.quad(lambda y: math.exp(2 * heat_kernel_log(t, [y])), -np.inf, np.inf)
    assert squared_kernel_integral(t, 1) == pytest.approx(val, rel=1e-9)


def test_simplex_coefficients():
    e, T = 0.5, 2.0
    assert simplex_series_coefficient(0, e, T) == 1.0
    assert simplex_series_coefficient(1, e, T) == pytest.approx(T ** (1 - e) / (1 - e))
    val, _ = integrate.dblquad(lambda t2, t1: t1 ** -e * (t2 - t1) ** -e, 0, T, lambda t1: t1, lambda t1: T)
    assert simplex_series_coefficient(2, e, T) == pytest.approx(val, rel=1e-6)
    # with the final gap: m = 1 gives the Beta integral int_0^T t^-e (T-t)^-e dt
    val, _ = integrate.quad(lambda t: t ** -e * (T - t) ** -e, 0, T)
    assert simplex_series_coefficient(1, e, T, final_gap=True) == pytest.approx(val, rel=1e-7)
    with pytest.raises(ValueError):
        simplex_series_coefficient(2, 1.0)


def test_bridge_fill_hits_anchors_and_has_bridge_variance():
    rng = np.random.default_rng(2)
    at = np.array([0.0, 0.4, 1.0])
    ax = np.array([[0.0], [1.0], [-0.5]])
    grid = np.linspace(0, 1.5, 16)
    mids = []
    for _ in range(4000):
        times, pos = bridge_fill(at, ax, grid, rng)
        assert np.allclose(pos[np.searchsorted(times, at)], ax)
        mids.append(pos[np.searchsorted(times, 0.7), 0])
    # bridge from (0.4, 1) to (1, -0.5) at 0.7: mean 0.25, variance 0.3*0.3/0.6
    mids = np.array(mids)
    assert abs(mids.mean() - 0.25) < 4 * math.sqrt(0.15 / 4000)
    assert mids.var() == pytest.approx(0.15, rel=0.08)
