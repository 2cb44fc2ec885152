import math

import numpy as np
import pytest
from scipy import integrate, stats

from levypolymer.measures import (INF, AlphaStable, InvalidWindow, Tabulated, TruncationWindow,
                                  check_admissibility, compare_decreasing, compare_increasing,
                                  critical_alpha, drift_rate, kappa, mean_rate, mu,
                                  second_moment_mass, tail_bound_upper)


def stable_as_table(alpha):
    v = np.array([0.5, 1.0, 2.0])
    return Tabulated(v, alpha * v ** (-1 - alpha), head="power", tail="power")


def test_window_validation():
    with pytest.raises(InvalidWindow):
        TruncationWindow(0.0)
    with pytest.raises(InvalidWindow):
        TruncationWindow(2.0, 1.0)
    assert TruncationWindow(0.5).b == INF


def test_alpha_stable_closed_forms():
    lam = AlphaStable(1.5)
    assert lam.tail_mass(0.25) == pytest.approx(8.0)
    assert kappa(lam, 0.25) == pytest.approx(3.0 * (0.25 ** -0.5 - 1.0))
    assert mu(lam) == pytest.approx(3.0)
    # first moment of [a, inf) minus the compensator is mu
    assert mean_rate(lam, TruncationWindow(0.25)) == pytest.approx(3.0)
    assert second_moment_mass(lam, TruncationWindow(0.25)) == INF
    assert second_moment_mass(lam, TruncationWindow(0.25, 4.0)) == pytest.approx(3.0 * (2.0 - 0.5))


@pytest.mark.parametrize("p,lo,hi", [(0.0, 0.3, INF), (1.0, 0.1, 7.0), (2.0, 0.0, 1.0), (1.2, 0.2, 3.0)])
def test_stable_moments_match_quadrature(p, lo, hi):
    lam = AlphaStable(1.3)
    ref, _ = integrate.quad(lambda v: v ** p * lam.density(v), lo, hi, limit=200)
    assert lam.moment(p, lo, hi) == pytest.approx(ref, rel=1e-7)


def test_log_moment_quadrature():
    lam = AlphaStable(1.5)
    ref, _ = integrate.quad(lambda v: v * v * abs(math.log(v)) * lam.density(v), 0.01, 1.0)
    assert lam.log_moment(2.0, 1, 0.01, 1.0) == pytest.approx(ref, rel=1e-8)
    assert lam.log_moment(0.0, 1.0, 1.0, INF) < INF


def test_tabulated_reproduces_stable():
    tab, lam = stable_as_table(1.5), AlphaStable(1.5)
    for p, lo, hi in [(0.0, 0.2, INF), (1.0, 0.05, 1.0), (2.0, 0.0, 3.0), (1.0, 1.0, INF)]:
        assert tab.moment(p, lo, hi) == pytest.approx(lam.moment(p, lo, hi), rel=1e-12)
    assert tab.log_moment(2.0, 1, 0.01, 1.0) == pytest.approx(lam.log_moment(2.0, 1, 0.01, 1.0), rel=1e-7)
    assert tab.density([0.7, 3.0]) == pytest.approx(lam.density(np.array([0.7, 3.0])))


def test_tabulated_file_round_trip(tmp_path):
    tab = Tabulated([0.5, 1.0, 3.0], [2.0, 1.0, 0.1], head="power", tail="log-power", theta=0.7)
    f = tmp_path / "lam.txt"
    tab.to_file(f)
    back = Tabulated.from_file(f)
    assert back.descriptor() == tab.descriptor()
    assert back.tail_mass(0.2) == pytest.approx(tab.tail_mass(0.2))


def test_tabulated_rejects_bad_header(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0.5 1\n1 2\n")
    with pytest.raises(ValueError, match=":1:"):
        Tabulated.from_file(f)


def test_log_power_tail_mass_and_sampling():
    tab = Tabulated([0.5, 2.0], [1.0, 0.5], tail="log-power", theta=0.5)
    # continuity at the last node and the closed-form tail
    assert tab.density([2.0])[0] == pytest.approx(0.5)
    y = 50.0
    ref, _ = integrate.quad(lambda v: tab.density([v])[0], 2.0, y)
    assert tab.moment(0.0, 2.0, y) == pytest.approx(ref, rel=1e-6)
    rng = np.random.default_rng(3)
    lm = tab.sample_log_marks(2.0, 20000, rng)
    # P(log V > s | V >= 2) = (log 2 / s)^theta
    s = 3.0
    assert np.mean(lm > s) == pytest.approx((math.log(2.0) / s) ** 0.5, abs=0.015)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_stable_sampler_ks(p):
    lam = AlphaStable(1.5)
    rng = np.random.default_rng(11)
    lo, hi = 0.1, 5.0
    x = np.exp(lam.sample_log_marks(lo, 5000, rng, p=p, hi=hi))
    cdf = lambda y: lam.moment(p, lo, y) / lam.moment(p, lo, hi)
    assert stats.kstest(x, np.vectorize(cdf)).pvalue > 0.01


def test_tabulated_sampler_ks():
    tab = Tabulated([0.1, 0.5, 2.0, 4.0], [10.0, 3.0, 0.2, 0.05])
    rng = np.random.default_rng(5)
    x = np.exp(tab.sample_log_marks(0.1, 5000, rng))
    cdf = np.vectorize(lambda y: tab.moment(0.0, 0.1, y) / tab.tail_mass(0.1))
    assert stats.kstest(x, cdf).pvalue > 0.01


def test_drift_rate_window():
    lam = AlphaStable(1.5)
    w = TruncationWindow(0.25, 0.5)
    assert drift_rate(lam, w) == pytest.approx(kappa(lam, 0.25) - kappa(lam, 0.5))
    assert drift_rate(lam, TruncationWindow(2.0)) == 0.0


def test_admissibility_regimes():
    assert critical_alpha(1) == 2.0 and critical_alpha(3) == pytest.approx(5 / 3)
    assert check_admissibility(AlphaStable(1.5), 1).regime == "convergent"
    assert check_admissibility(AlphaStable(1.9), 3).regime == "degenerate-to-zero"
    assert check_admissibility(AlphaStable(1.2), 3).regime == "convergent"
    heavy = Tabulated([0.5, 2.0], [1.0, 0.5], head="power", tail="log-power", theta=0.2)
    assert check_admissibility(heavy, 1).regime == "degenerate-to-infinity"


def test_comparison_integrals():
    lam = AlphaStable(1.5)
    for m in (1, 2):
        for thr in (0.05, 0.5, 2.0):
            lhs, rhs = compare_increasing(lam, 2.0, 1.75, m, thr)
            assert lhs <= rhs * (1 + 1e-9)
            lhs, rhs = compare_decreasing(lam, 2.0, 1.75, m, thr)
            assert lhs <= rhs * (1 + 1e-9)


def test_tail_bound_single_fold_exact():
    lam = AlphaStable(1.5)
    r = tail_bound_upper(lam, 2.0, 1, 0.1, 0.5, "large")
    assert r.lhs == pytest.approx(lam.moment(1.0, 0.2, 2.0))
    assert r.holds
    r = tail_bound_upper(lam, 2.0, 1, 0.1, 0.1, "small")
    assert r.lhs == pytest.approx(lam.moment(2.0, 0.0, 0.2))
    assert r.holds
