import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfx import data
from cfx.errors import FormatError, InputError


def test_two_moons_noiseless_separable():
    ds = data.make_two_moons(1000, 0.0, seed=0)
    c0, c1 = ds.class_counts()
    assert abs(c0 - c1) <= 1
    raw = ds.denormalize(ds.features)
    upper = raw[ds.labels == 0]
    lower = raw[ds.labels == 1]
    # upper arc: unit circle around the origin, y >= 0
    np.testing.assert_allclose(np.linalg.norm(upper, axis=1), 1.0, atol=1e-9)
    assert np.all(upper[:, 1] >= -1e-12)
    # lower arc: unit circle around (1, 0.5), y <= 0.5
    np.testing.assert_allclose(np.linalg.norm(lower - [1.0, 0.5], axis=1), 1.0, atol=1e-9)
    assert np.all(lower[:, 1] <= 0.5 + 1e-12)


def test_two_moons_deterministic_and_in_cube():
    a, b = data.make_two_moons(300, 0.1, seed=4), data.make_two_moons(300, 0.1, seed=4)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.features.min() == 0.0 and a.features.max() == 1.0
    assert abs(np.subtract(*a.class_counts())) <= 1


def test_sphere_quadrant():
    ds = data.make_sphere_quadrant(10_000, 2, seed=0)
    assert abs(ds.labels.mean() - np.pi / 4) <= 0.02
    with pytest.raises(InputError):
        data.make_sphere_quadrant(10, 1)


def test_sphere_quadrant_labels_follow_distance():
    ds = data.make_sphere_quadrant(2000, 3, seed=1)
    dist = np.sqrt(((ds.features - 1.0) ** 2).sum(axis=1))
    np.testing.assert_array_equal(ds.labels, (dist <= 1.0).astype(int))
    near_corner = ds.features[np.argmax(ds.features.sum(axis=1))]
    far_corner = ds.features[np.argmin(ds.features.sum(axis=1))]
    assert ds.labels[np.argmax(ds.features.sum(axis=1))] == 1 and near_corner.min() > 0
    assert ds.labels[np.argmin(ds.features.sum(axis=1))] == 0 and far_corner.max() < 1


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_load_csv_minmax_and_categoricals(tmp_path):
    p = _write(tmp_path, "a,c,y\n3,a,0\n7,b,1\n5,a,1\n")
    ds = data.load_csv(p, "y", ["c"])
    np.testing.assert_allclose(ds.features[:, 0], [0.0, 1.0, 0.5])
    np.testing.assert_array_equal(ds.features[:, 1], [0.0, 1.0, 0.0])
    assert ds.categories == {"c": ["a", "b"]}
    np.testing.assert_allclose(ds.denormalize(ds.features)[:, 0], [3, 7, 5])


def test_load_csv_errors(tmp_path):
    with pytest.raises(FormatError):
        data.load_csv(_write(tmp_path, "a,b\n1,2\n"), "y")
    with pytest.raises(FormatError) as info:
        data.load_csv(_write(tmp_path, "a,y\n1,0\nx,1\n2,3\n4\n"), "y")
    assert [line for line, _ in info.value.row_errors] == [3, 4, 5]


def test_load_csv_constant_feature_warns(tmp_path):
    with pytest.warns(RuntimeWarning):
        ds = data.load_csv(_write(tmp_path, "a,b,y\n1,5,0\n2,5,1\n"), "y")
    np.testing.assert_array_equal(ds.features[:, 1], [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=2), min_size=2, max_size=20))
def test_normalization_round_trip(rows):
    raw = np.array(rows)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X, norm = data.minmax(raw)
    ds = data.Dataset(X, np.zeros(len(X), dtype=int), ("a", "b"), norm)
    ok = norm[:, 1] > norm[:, 0]
    back = ds.denormalize(ds.normalize(raw))
    scale = np.maximum(np.abs(raw), 1.0)
    assert np.all(np.abs(back - raw)[:, ok] <= 1e-9 * scale[:, ok])
    assert np.all((X >= 0) & (X <= 1))


def test_balance_classes():
    X = np.random.default_rng(0).random((40, 2))
    y = np.array([0] * 30 + [1] * 10)
    ds = data.Dataset(X, y, ("a", "b"), np.tile([0.0, 1.0], (2, 1)))
    out = data.balance_classes(ds, seed=1)
    assert out.class_counts() == (10, 10)
    np.testing.assert_array_equal(data.balance_classes(ds, 1).features, out.features)
    same = data.balance_classes(out, 3)
    assert sorted(map(tuple, same.features)) == sorted(map(tuple, out.features))
    with pytest.raises(InputError):
        data.balance_classes(ds.subset(np.arange(30)), 0)


def test_balance_large_counts():
    y = np.array([0] * 24720 + [1] * 7841)
    X = np.zeros((len(y), 1))
    ds = data.Dataset(X, y, ("a",), np.array([[0.0, 1.0]]))
    assert data.balance_classes(ds, 0).class_counts() == (7841, 7841)


def test_split_sizes_and_disjoint():
    y = np.arange(100) % 2
    train, test, attack = data.split_indices(100, y, data.SplitSpec(0.6, 0.2, 0.2, seed=3))
    assert (len(train), len(test), len(attack)) == (60, 20, 20)
    allidx = np.concatenate([train, test, attack])
    assert sorted(allidx) == list(range(100))


def test_split_attack_balance():
    y = np.arange(400) % 2
    _, _, attack = data.split_indices(400, y, data.SplitSpec(0.5, 0.25, 0.25, 0, (0.8, 0.2)))
    n0 = int(np.sum(y[attack] == 0))
    assert abs(n0 - round(0.8 * len(attack))) <= 1 and len(attack) > 0


def test_split_validation():
    with pytest.raises(InputError):
        data.SplitSpec(0.5, 0.5, 0.5)
    y = np.zeros(20, dtype=int)
    with pytest.raises(InputError):
        data.split_indices(20, y, data.SplitSpec(0.5, 0.25, 0.25, 0, (0.5, 0.5)))


def test_dataset_to_csv_round_trip(tmp_path, moons):
    p = tmp_path / "m.csv"
    moons.to_csv(p)
    back = data.load_csv(p)
    np.testing.assert_allclose(back.features, moons.features, atol=1e-15)
    np.testing.assert_array_equal(back.labels, moons.labels)
