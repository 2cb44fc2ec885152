import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import logsumexp

from levypolymer.cloud import CoupledCloudFamily, make_cloud, sample_cloud
from levypolymer.kernel import heat_kernel_log
from levypolymer.montecarlo import RunningMoments, make_rng
from levypolymer.measures import AlphaStable, TruncationWindow, drift_rate, kappa
from levypolymer.partition import (RestrictionParams, a_sweep, brute_force_enumeration, dp_tables,
                                   in_restricted_set, log_p2p, log_partition, moment_oracles,
                                   partition_between, partition_point_to_plane,
                                   partition_point_to_point, restricted_gap_bound,
                                   restricted_partition, restricted_second_moment_bound,
                                   second_moment_series, windowing_bias)

LAM = AlphaStable(1.5)


def small_cloud(n, d, seed):
    rng = np.random.default_rng(seed)
    return make_cloud(rng.random(n), rng.normal(size=(n, d)), np.exp(rng.normal(size=n)) + 0.3,
                      T=1.0, a_min=0.3, d=d, intensity=LAM)


def test_beta_zero_and_empty():
    c = small_cloud(5, 1, 0)
    assert log_partition(c, 0.0) == 0.0
    empty = make_cloud([], np.zeros((0, 1)), [], a_min=0.3, intensity=LAM)
    w = TruncationWindow(0.3)
    assert log_partition(empty, 0.8, w) == pytest.approx(-0.8 * kappa(LAM, 0.3))


def test_single_atom_closed_form():
    c = make_cloud([0.4], [[0.3]], [2.0], a_min=0.5, intensity=LAM)
    beta, w = 0.7, TruncationWindow(0.5)
    expect = math.exp(-beta * drift_rate(LAM, w)) * (1 + beta * 2.0 * math.exp(heat_kernel_log(0.4, [0.3])))
    assert partition_point_to_plane(c, beta, w).value == pytest.approx(expect, rel=1e-13)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_dp_equals_brute_force(d):
    for seed in range(5):
        c = small_cloud(10, d, seed)
        assert log_partition(c, 0.6) == pytest.approx(float(brute_force_enumeration(c, 0.6).log), abs=1e-11)
        x = np.full(d, 0.2)
        p2p = log_p2p(c, 0.6, None, 1.0, x)
        assert p2p == pytest.approx(brute_force_enumeration(c, 0.6, endpoint=(1.0, x)).log, abs=1e-11)


def test_forward_and_backward_agree():
    c = sample_cloud(LAM, 1.0, 3.0, 0.1, 2, seed=4)
    tab = dp_tables(c, 0.9)
    assert tab.log_Z_forward == pytest.approx(tab.log_Z_backward, abs=1e-10)


def test_p2p_integrates_to_point_to_plane():
    c = small_cloud(8, 1, 3)
    t = 0.8
    val, _ = integrate.quad(lambda y: math.exp(log_p2p(c, 0.5, None, t, [y])), -np.inf, np.inf,
                            points=None, limit=400)
    assert val == pytest.approx(math.exp(log_partition(c, 0.5, T=t)), rel=1e-7)


def test_p2p_vectorized_and_between():
    c = small_cloud(6, 1, 1)
    xs = np.linspace(-1, 1, 5)[:, None]
    vec = log_p2p(c, 0.5, None, 1.0, xs)
    single = [log_p2p(c, 0.5, None, 1.0, x) for x in xs]
    assert np.allclose(vec, single)
    # Chapman-Kolmogorov through a time with no atoms nearby
    tm = 0.5 * (c.t[2] + c.t[3])
    lhs = partition_point_to_point(c, 0.5, None, (1.0, [0.2])).value
    rhs, _ = integrate.quad(lambda y: partition_point_to_point(c, 0.5, None, (tm, [y])).value
                            * partition_between(c, 0.5, None, (tm, [y]), (1.0, [0.2])).value,
                            -np.inf, np.inf, limit=400)
    assert lhs == pytest.approx(rhs, rel=1e-7)


def test_brute_force_cap():
    with pytest.raises(ValueError):
        brute_force_enumeration(small_cloud(21, 1, 0), 0.5)


def test_restricted_partition_matches_filtered_enumeration():
    params = RestrictionParams(q=2.0, gamma=0.5)
    for seed in range(4):
        c = small_cloud(9, 1, seed)
        w = TruncationWindow(0.3, 2.0)
        view = c.view(0.3, 2.0)
        masks, logw = brute_force_enumeration(c, 0.8, w, return_terms=True)
        keep = [in_restricted_set(view.t[[k for k in range(len(view)) if m >> k & 1]],
                                  view.log_marks[[k for k in range(len(view)) if m >> k & 1]], 2.0, 0.5)
                for m in masks]
        expect = logsumexp(logw[np.array(keep)])
        got = restricted_partition(c, 0.8, w, params).log
        assert got == pytest.approx(expect, abs=1e-11)
        assert got <= log_partition(c, 0.8, w) + 1e-12


def test_restricted_cap_message():
    with pytest.raises(ValueError, match="smaller window"):
        restricted_partition(small_cloud(25, 1, 0), 0.5, TruncationWindow(0.3, 50.0),
                             RestrictionParams(q=50.0, gamma=0.5))


def test_restricted_bounds_positive_and_finite():
    params = RestrictionParams(q=2.0, gamma=0.5, p=1.75)
    g = restricted_gap_bound(LAM, 0.5, 2.0, params, 0.2)
    s = restricted_second_moment_bound(LAM, 0.5, 2.0, params, 0.1, 1)
    assert 0 < g < math.inf and 1 < s < math.inf


def test_moment_oracles():
    w = TruncationWindow(0.25)
    o = moment_oracles(LAM, 0.5, w, q=4.0)
    assert o.mean == pytest.approx(math.exp(1.5))
    assert o.truncation_gap == pytest.approx(math.exp(1.5) - math.exp(0.5 * LAM.moment(1.0, 1.0, 4.0)))
    o2 = moment_oracles(LAM, 0.5, TruncationWindow(0.25, 4.0))
    # replica series (beta^2 per atom) sums to the closed form
    assert o2.second_moment == pytest.approx(o2.second_moment_series_beta2, rel=1e-10)
    assert second_moment_series(0.0, 1.0, 2.0, 1.0) == pytest.approx(1.0)


def test_sweep_report(tmp_path):
    fam = CoupledCloudFamily.sample(LAM, 1.0, 3.0, [1.0, 0.5, 0.25], 1, seed=2)
    rep = a_sweep(fam, 0.5)
    assert rep.levels == [1.0, 0.5, 0.25] and math.isnan(rep.rel_diff[0])
    assert rep.log_Z[-1] == pytest.approx(log_partition(fam.view(0.25), 0.5, TruncationWindow(0.25)))
    rep.to_csv(tmp_path / "s.csv")
    assert open(tmp_path / "s.csv").readline().strip() == "a_level,log_Z,rel_diff,n_atoms"


def test_windowing_bias_small():
    assert windowing_bias(1.5, 6.0, 1.0) < 1e-7


def test_second_moment_series_selected_by_simulation():
    # Monte Carlo picks the replica series (beta^2 per shared atom)
    rng = make_rng(3)
    w = TruncationWindow(0.25, 4.0)
    z = np.exp([log_partition(sample_cloud(LAM, 1.0, 6.0, 0.25, 1, rng=rng), 0.5, w, 1.0, LAM)
                for _ in range(20000)])
    rm = RunningMoments.of(z * z)
    o = moment_oracles(LAM, 0.5, w, 1.0)
    assert abs(rm.mean - o.second_moment_series_beta2) < 4 * rm.se
    assert abs(rm.mean - o.second_moment_series_beta1) > 20 * rm.se
