import numpy as np
import pytest

from ceaudit.sampler import label, read_dataset, sample_dataset, write_dataset
from ceaudit.scm import preset


def test_deterministic_and_chunk_independent():
    scm = preset("chain")
    a = sample_dataset(scm, 503, 7)
    b = sample_dataset(scm, 503, 7)
    c = sample_dataset(scm, 503, 7, chunk_size=64)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.X, c.X)
    np.testing.assert_array_equal(a.y, c.y)
    assert not np.array_equal(a.X, sample_dataset(scm, 503, 8).X)


def test_prefix_stable():
    scm = preset("fork")
    small = sample_dataset(scm, 100, 3)
    big = sample_dataset(scm, 400, 3)
    np.testing.assert_array_equal(small.X, big.X[:100])


def test_root_marginals():
    ds = sample_dataset(preset("chain"), 5000, 1)
    assert ds.column("x1").mean() == pytest.approx(50, abs=0.3)
    assert ds.column("x1").std() == pytest.approx(5, rel=0.05)
    assert ds.column("x2").mean() == pytest.approx(20, abs=0.05)
    assert ds.column("x4").mean() == pytest.approx(0.6, abs=0.03)
    assert ds.column("x5").mean() == pytest.approx(0.3, abs=0.03)
    assert set(np.unique(ds.column("x4"))) <= {0.0, 1.0}


def test_labels_against_mean():
    ds = sample_dataset(preset("collider"), 1000, 0)
    assert ds.threshold == pytest.approx(ds.y.mean())
    np.testing.assert_array_equal(ds.classes, (ds.y >= ds.threshold).astype(int))
    assert 0.3 < ds.classes.mean() < 0.7
    assert label(1.0, 1.0) == 1 and label(0.999, 1.0) == 0


def test_small_n_rejected():
    with pytest.raises(ValueError):
        sample_dataset(preset("chain"), 1, 0)


def test_csv_round_trip(tmp_path):
    ds = sample_dataset(preset("fork"), 50, 2)
    path = write_dataset(ds, tmp_path / "d.csv")
    back = read_dataset(path)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.classes, ds.classes)
    assert back.threshold == ds.threshold
    assert back.seed == 2
