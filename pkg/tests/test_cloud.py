import math

import numpy as np
import pytest

from levypolymer.cloud import (CoupledCloudFamily, PointCloud, expected_count, make_cloud, sample_cloud,
                               shift, size_biased_augment, superpose, truncate)
from levypolymer.measures import AlphaStable, TruncationWindow
from levypolymer.montecarlo import make_rng


def test_sample_cloud_count_and_ranges():
    lam = AlphaStable(1.5)
    counts = [len(sample_cloud(lam, 1.0, 2.0, 0.5, 1, rng=make_rng(4, k))) for k in range(400)]
    mean = expected_count(lam, 1.0, 2.0, 0.5, 1)
    assert mean == pytest.approx(4 * 0.5 ** -1.5)
    assert abs(np.mean(counts) - mean) < 4 * math.sqrt(mean / 400)
    c = sample_cloud(lam, 2.0, 1.5, 0.5, 2, seed=3)
    assert np.all(np.diff(c.t) > 0) and c.t.min() >= 0 and c.t.max() <= 2.0
    assert np.all(np.abs(c.x) <= 1.5) and np.all(c.marks >= 0.5)


def test_same_seed_same_cloud():
    lam = AlphaStable(1.2)
    a = sample_cloud(lam, 1.0, 1.0, 0.3, 1, seed=9)
    b = sample_cloud(lam, 1.0, 1.0, 0.3, 1, seed=9)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.log_marks, b.log_marks)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        sample_cloud(AlphaStable(1.5), 1.0, 1.0, 0.0, 1)
    with pytest.raises(ValueError):
        PointCloud([0.2, 0.1], [[0.0], [0.0]], [0.0, 0.0], 1.0, 1.0, 0.5, 1)
    c = make_cloud([0.1], [0.0], [1.0], a_min=0.5)
    with pytest.raises(ValueError):
        truncate(c, TruncationWindow(0.1))


def test_csv_round_trip_is_exact(tmp_path):
    c = sample_cloud(AlphaStable(1.5), 1.0, 2.0, 0.2, 2, seed=1)
    f = tmp_path / "c.csv"
    c.to_csv(f)
    back = PointCloud.from_csv(f)
    assert np.array_equal(back.t, c.t) and np.array_equal(back.x, c.x)
    assert np.array_equal(back.log_marks, c.log_marks)
    assert back.intensity.descriptor() == c.intensity.descriptor()
    assert open(f).readline().strip() == "t,x_1,x_2,mark"


def test_truncation_and_coupling():
    fam = CoupledCloudFamily.sample(AlphaStable(1.5), 1.0, 2.0, [1.0, 0.3, 0.1], 1, seed=5)
    views = list(fam)
    assert [len(v) for v in views] == sorted(len(v) for v in views)
    # coarse views are subsets of fine ones
    assert set(views[0].t) <= set(views[1].t) <= set(views[2].t)
    mid = fam.view(0.1, 0.3)
    assert np.all((mid.marks >= 0.1) & (mid.marks < 0.3))
    assert len(mid) + len(views[1]) == len(views[2])


def test_shift_and_superpose():
    c = make_cloud([0.2, 0.6], [[0.1], [0.5]], [1.0, 2.0])
    s = shift(c, 0.1, 0.1)
    assert np.allclose(s.t, [0.1, 0.5]) and np.allclose(s.x[:, 0], [0.0, 0.4])
    u = superpose(c, [0.4], [[0.0]], [math.log(3.0)])
    assert np.allclose(u.t, [0.2, 0.4, 0.6]) and np.allclose(u.marks, [1.0, 3.0, 2.0])


def test_size_biased_augment_rate():
    lam = AlphaStable(1.5)
    rng = make_rng(8)
    base = make_cloud([], np.zeros((0, 1)), [], a_min=0.5)
    beta, a = 0.7, 0.5
    counts = [len(size_biased_augment(base, beta, a, rng, lam=lam)[0]) for _ in range(2000)]
    rate = beta * lam.moment(1.0, a)
    assert abs(np.mean(counts) - rate) < 4 * math.sqrt(rate / 2000)
    c, (tn, bn) = size_biased_augment(base, 0.0, a, rng, lam=lam)
    assert len(c) == 0 and len(tn) == 0
