import os

import numpy as np
import pytest

from mcbn import metrics
from mcbn.data import (DataError, SplitPlan, denormalize_prediction, fit_normalizer, heteroscedastic_dataset,
                       load_csv, load_dataset, load_registered, make_split, make_splits, normalize, registry,
                       toy_dataset)
from mcbn.errors import DomainError
from mcbn.inference import predictive_moments
from mcbn.mathcore import rng_stream

DATA_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "datasets")


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_csv_round_trip(tmp_path):
    path = write(tmp_path, "a,b,y\n1.5,2,3\n-4,5e-3,6\n7,8,0.25\n")
    ds = load_csv(path, "y")
    np.testing.assert_array_equal(ds.X, [[1.5, 2], [-4, 5e-3], [7, 8]])
    np.testing.assert_array_equal(ds.y, [3, 6, 0.25])
    assert ds.feature_names == ("a", "b") and ds.target_name == "y"


def test_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(str(tmp_path / "missing.csv"))
    with pytest.raises(DataError, match="row 2"):
        load_csv(write(tmp_path, "a,y\n1,2\nx,3\n"))
    with pytest.raises(DataError, match="row 1"):
        load_csv(write(tmp_path, "a,y\n1\n"))
    with pytest.raises(DataError, match="target"):
        load_csv(write(tmp_path, "a,y\n1,2\n"), "z")
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "a,y\n1,\n"))


def test_drop_column(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,Y1,Y2\n1,2,3,4\n"), "Y1", drop=["Y2"])
    assert ds.feature_names == ("a", "b") and ds.y[0] == 3


def test_registry_covers_benchmarks():
    reg = registry()
    assert set(reg) == {"boston", "concrete", "energy", "kin8nm", "power", "protein", "wine-red", "yacht"}
    assert (reg["boston"]["N"], reg["boston"]["Q"]) == (506, 13)
    assert (reg["yacht"]["N"], reg["yacht"]["Q"]) == (308, 6)
    assert reg["energy"]["target"] == "Y1" and reg["protein"]["hidden"] == [100, 100]


@pytest.mark.parametrize("name", sorted(registry()))
def test_registered_files_match_registry(name):
    entry = registry()[name]
    if not os.path.exists(os.path.join(DATA_DIR, entry["file"])):
        pytest.skip(f"{entry['file']} not present")
    ds = load_registered(name, DATA_DIR)
    assert (ds.n, ds.q) == (entry["N"], entry["Q"])


def test_unknown_dataset():
    with pytest.raises(DataError):
        load_dataset("nope")


def test_normalize_standard_data_unchanged():
    rng = rng_stream(0)
    X = rng.normal(size=(50, 3))
    X = (X - X.mean(0)) / X.std(0)
    y = rng.normal(size=50)
    y = (y - y.mean()) / y.std()
    from mcbn.data import Dataset
    ds = normalize(Dataset("s", X, y), np.arange(50))
    np.testing.assert_allclose(ds.X, X, atol=1e-12)
    np.testing.assert_allclose(ds.y, y, atol=1e-12)


def test_normalize_constant_feature_flagged():
    from mcbn.data import Dataset
    X = np.column_stack([np.full(10, 4.0), np.arange(10.0)])
    with pytest.warns(UserWarning):
        ds = normalize(Dataset("c", X, np.arange(10.0)), np.arange(10))
    assert ds.norm.constant.tolist() == [True, False]
    assert np.all(ds.X[:, 0] == 0)
    with pytest.raises(DomainError):
        normalize(Dataset("c", X, np.arange(10.0)), [])


def test_normalization_uses_training_rows_only():
    ds = heteroscedastic_dataset(200)
    split = make_split(ds.n, 0)
    a = fit_normalizer(ds, split.train)
    b = fit_normalizer(ds, split.test)
    np.testing.assert_allclose(a.x_mean, ds.X[split.train].mean(0), rtol=1e-14)
    assert not np.allclose(a.x_mean, b.x_mean)


def test_normalize_denormalize_round_trip():
    ds = heteroscedastic_dataset(100)
    n = normalize(ds, np.arange(80))
    np.testing.assert_allclose(n.norm.y_inverse(n.y), ds.y, atol=1e-12)
    pd = predictive_moments(n.y[:, None] + np.zeros((1, 3)), 2.0)
    back = denormalize_prediction(pd, n.norm)
    np.testing.assert_allclose(back.mean, ds.y, atol=1e-12)


def test_denormalize_scaling():
    from mcbn.data import Normalizer
    pd = predictive_moments([[0.0, 1.0], [2.0, 2.5]], 4.0)
    ident = denormalize_prediction(pd, Normalizer(np.zeros(1), np.ones(1), 0.0, 1.0, np.zeros(1, bool)))
    np.testing.assert_array_equal(ident.variance, pd.variance)
    np.testing.assert_array_equal(ident.samples, pd.samples)
    two = denormalize_prediction(pd, Normalizer(np.zeros(1), np.ones(1), 3.0, 2.0, np.zeros(1, bool)))
    np.testing.assert_array_equal(two.variance, 4 * pd.variance)
    np.testing.assert_array_equal(two.mean, 2 * pd.mean + 3)
    # CRPS is scale equivariant: CRPS(2 pd, 2 y + 3) = 2 CRPS(pd, y)
    y = np.array([0.3, 1.1])
    np.testing.assert_allclose(metrics.crps_gaussian(two.mean, two.variance, 2 * y + 3),
                               2 * metrics.crps_gaussian(pd.mean, pd.variance, y), rtol=1e-12)


def test_split_sizes_and_partition():
    s = make_split(100, 0)
    assert len(s.test) == 20 and len(s.train) == 80
    assert [len(f) for f in s.folds] == [16] * 5
    splits = make_splits(101, SplitPlan())
    for s in splits:
        assert len(s.test) == 20
        assert set(s.test).isdisjoint(s.train)
        assert sorted(np.concatenate([s.train, s.test]).tolist()) == list(range(101))
        folds = np.concatenate(s.folds)
        assert sorted(folds.tolist()) == sorted(s.train.tolist())
        assert set(folds).isdisjoint(s.test)


def test_split_determinism_and_minimum():
    a, b = make_split(60, 3), make_split(60, 3)
    np.testing.assert_array_equal(a.test, b.test)
    for fa, fb in zip(a.folds, b.folds):
        np.testing.assert_array_equal(fa, fb)
    assert not np.array_equal(a.test, make_split(60, 4).test)
    with pytest.raises(DomainError):
        make_split(24, 0)


def test_toy_dataset():
    ds = toy_dataset()
    assert ds.X.shape == (100, 1)
    assert np.all((np.abs(ds.X) >= 1) & (np.abs(ds.X) <= 4))
    np.testing.assert_array_equal(toy_dataset().y, ds.y)
