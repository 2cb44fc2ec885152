import math

import numpy as np
import pytest

from levypolymer.cloud import CoupledCloudFamily, make_cloud, sample_cloud
from levypolymer.kernel import heat_kernel_log
from levypolymer.measures import AlphaStable, Tabulated
from levypolymer.montecarlo import make_rng
from levypolymer.stats import (blowup_events, blowup_rates, default_R, degeneracy_sweep, degeneracy_Y,
                               energy_G, entropy_energy_brute, entropy_energy_sup, entropy_H,
                               sample_blowup_cloud, size_biased_shift_test, sup_weight_statistic,
                               write_diagnostics, y_moments)

LAM = AlphaStable(1.5)
HEAVY = Tabulated([0.5, 2.0], [1.0, 0.5], tail="log-power", theta=0.5)


def test_empty_cloud_statistics():
    empty = make_cloud([], np.zeros((0, 1)), [], a_min=0.1)
    assert degeneracy_Y(empty, 0.1, 1.0) == 0.0
    assert entropy_energy_sup(empty, 1.0) == -math.inf
    assert sup_weight_statistic(empty) == -math.inf


@pytest.mark.parametrize("d,a", [(1, 0.05), (2, 0.05), (3, 0.3)])
def test_closed_form_means_match_mc(d, a):
    rep = size_biased_shift_test(LAM, 0.8, a, d, None, 3000, make_rng(10, d))
    assert abs(rep.mean_P - rep.closed_mean_P) < 4 * rep.se_P
    assert abs(rep.mean_sizebiased - rep.closed_mean_sizebiased) < 4 * rep.se_sizebiased
    assert rep.var_P == pytest.approx(rep.closed_var_P, rel=0.15)


def test_beta_zero_no_separation():
    rep = size_biased_shift_test(LAM, 0.0, 0.1, 1, None, 200, make_rng(1))
    assert rep.separation == 0.0 and rep.mean_P == rep.mean_sizebiased


def test_default_radius_grows():
    for d in (1, 2, 3):
        rs = [default_R(AlphaStable(1.9), a, d) for a in (0.1, 0.01, 0.001)]
        assert rs[0] < rs[1] < rs[2]


def test_d1_separation_stays_bounded_for_convergent_case():
    # closed-form separation (beta q m2)^2 / (2 Var) has a finite limit as a -> 0 for alpha < 2
    seps = []
    for a in (0.1, 0.01, 0.001, 1e-4):
        R = default_R(LAM, a, 1)
        m = y_moments(LAM, 1.0, a, R, 1)
        seps.append((m.mean_sizebiased - m.mean) ** 2 / (2 * m.var))
    assert seps == sorted(seps) and seps[-1] < 1.0


def test_entropy_energy_single_atom_and_brute_force():
    c = make_cloud([0.4], [[0.3]], [2.0], a_min=0.5)
    assert entropy_energy_sup(c, 0.5) == pytest.approx(math.log(2.0) - 0.25 * 0.09 / 0.4)
    rng = np.random.default_rng(0)
    for _ in range(20):
        n, d = rng.integers(1, 9), rng.integers(1, 4)
        c = make_cloud(rng.random(n), rng.normal(size=(n, d)), np.exp(rng.normal(size=n)), d=d)
        assert entropy_energy_sup(c, 0.7) == pytest.approx(entropy_energy_brute(c, 0.7), abs=1e-12)


def test_removing_small_mark_point():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = rng.integers(2, 8)
        t = np.sort(rng.random(n))
        x = rng.normal(size=(n, 2))
        lu = rng.normal(size=n)
        small = np.nonzero(lu < 0)[0]
        if len(small) == 0:
            continue
        k = small[0]
        keep = np.arange(n) != k
        assert entropy_H(t[keep], x[keep]) < entropy_H(t, x)
        assert energy_G(lu[keep]) > energy_G(lu)


def test_sup_weight():
    c = make_cloud([0.4, 0.7], [[0.3], [1.0]], [2.0, 0.5], a_min=0.5)
    expect = max(math.log(2.0) + heat_kernel_log(0.4, [0.3]), math.log(0.5) + heat_kernel_log(0.7, [1.0]))
    assert sup_weight_statistic(c) == pytest.approx(expect)
    fam = CoupledCloudFamily.sample(LAM, 1.0, 2.0, [2.0, 1.0, 0.5, 0.25], 1, seed=3)
    vals = [sup_weight_statistic(v) for v in fam]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_blowup_rates():
    bounded = Tabulated([0.5, 2.0], [1.0, 1.0])
    assert np.all(blowup_rates(bounded, 1, 10)[1] == 0)
    js, lj = blowup_rates(HEAVY, 1, 10)
    partial = np.cumsum(lj)
    # partial sums grow linearly: the series diverges
    assert lj[-1] == pytest.approx(lj[0], rel=1e-9) and partial[-1] > 9 * lj[0]
    assert np.all(np.diff(np.log(blowup_rates(LAM, 3, 3)[1])) < -50)


def test_blowup_frequencies():
    rng = make_rng(12)
    jmax, n = 3, 3000
    hits = np.array([blowup_events(sample_blowup_cloud(HEAVY, 1, jmax, rng), 1, jmax) for _ in range(n)])
    _, lj = blowup_rates(HEAVY, 1, jmax)
    p = -np.expm1(-lj)
    freq = hits.mean(axis=0)
    assert np.all(np.abs(freq - p) < 4 * np.sqrt(p * (1 - p) / n))


def test_diagnostics_csv(tmp_path):
    rows = degeneracy_sweep(LAM, 0.5, [0.5, 0.2], 1, 50, make_rng(2))
    write_diagnostics(tmp_path / "d.csv", rows)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "a,Y_mean_P,Y_mean_sizebiased,separation,T_entropy" and len(lines) == 3
