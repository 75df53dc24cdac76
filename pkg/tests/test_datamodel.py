import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iis_sqda.datamodel import (
    AugmentedIndexMap,
    DataError,
    LabeledDataset,
    ReducedIndexSet,
    augment,
    augmented_design,
    load_csv,
    read_table,
    reduced_augment,
    save_csv,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_small_file(tmp_path):
    f = _write(tmp_path / "d.csv", "a,b,class\n0.5,1,1\n2,3,1\n-1,0,2\n4,4e-3,2\n")
    d = load_csv(f)
    assert (d.n, d.n1, d.n2, d.p) == (4, 2, 2, 2)
    assert d.feature_names == ("a", "b")
    np.testing.assert_array_equal(d.features[:, 1], [1, 3, 0, 4e-3])


def test_third_label_value_rejected(tmp_path):
    f = _write(tmp_path / "d.csv", "a,class\n1,x\n2,y\n3,z\n4,x\n")
    with pytest.raises(DataError, match="not a two-class problem"):
        load_csv(f)


def test_gene_expression_shape(tmp_path, rng):
    X = rng.standard_normal((77, 231))
    labels = np.array([1] * 44 + [2] * 33)
    save_csv(LabeledDataset(X, labels), tmp_path / "genes.csv")
    d = load_csv(tmp_path / "genes.csv")
    assert (d.n1, d.n2, d.p) == (44, 33, 231)


@pytest.mark.parametrize("text, msg", [
    ("a,class\n1,1\nfoo,1\n2,2\n3,2\n", "non-numeric"),
    ("a,class\n1,1\n2,2\n3,2\n", "at least 2"),
    ("a,class\n1,1\n,1\n2,2\n3,2\n", "non-numeric"),
    ("a,class\n1,1\nnan,1\n2,2\n3,2\n", "non-finite"),
    ("a,b\n1,1\n", "label column"),
])
def test_bad_files(tmp_path, text, msg):
    with pytest.raises(DataError, match=msg):
        load_csv(_write(tmp_path / "d.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "nope.csv")


def test_label_mapping_and_override(tmp_path):
    f = _write(tmp_path / "d.csv", "a,class\n1,good\n2,good\n3,poor\n4,poor\n5,poor\n")
    d = load_csv(f)
    assert d.label_values == ("good", "poor") and (d.n1, d.n2) == (2, 3)
    d2 = load_csv(f, class1_label="poor")
    assert d2.label_values == ("poor", "good") and (d2.n1, d2.n2) == (3, 2)


def test_read_table_without_labels(tmp_path):
    f = _write(tmp_path / "d.csv", "a,b\n1,2\n3,4\n")
    X, names, raw = read_table(f, require_labels=False)
    assert raw is None and names == ("a", "b") and X.shape == (2, 2)


def test_csv_roundtrip_lossless(tmp_path, rng):
    X = rng.standard_normal((9, 4)) * 10.0 ** rng.integers(-8, 8, (9, 4))
    d = LabeledDataset(X, [1, 2, 1, 2, 1, 2, 1, 2, 2], ("u", "v", "w", "x"), ("A", "B"))
    save_csv(d, tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.features, d.features)
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.feature_names == d.feature_names


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((4, 2)), [1, 1, 1, 2])
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((4, 2)), [1, 1, 3, 2])
    with pytest.raises(DataError):
        LabeledDataset(np.array([[np.inf], [0], [0], [0]]), [1, 1, 2, 2])
    d = LabeledDataset(np.arange(8.0).reshape(4, 2), [2, 1, 2, 1])
    np.testing.assert_array_equal(d.delta, [0, 1, 0, 1])
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0


def test_augment_examples():
    a, b = 1.5, -2.0
    np.testing.assert_allclose(augment([a, b], AugmentedIndexMap(2)), [1, a, b, a * a, a * b, b * b])
    np.testing.assert_allclose(augment([3.0], AugmentedIndexMap(1)), [1, 3, 9])
    assert AugmentedIndexMap(200).p_tilde == 20301
    with pytest.raises(ValueError):
        augment([1.0, 2.0, 3.0], AugmentedIndexMap(2))


def test_reduced_examples():
    z = np.array([2.0, 3.0, 5.0])
    r = ReducedIndexSet(3, (0, 2))
    np.testing.assert_allclose(reduced_augment(z, r), [1, 2, 3, 5, 4, 10, 25])
    assert r.d == 2 and len(r.active_columns) == 7
    empty = ReducedIndexSet(3, ())
    np.testing.assert_allclose(reduced_augment(z, empty), [1, 2, 3, 5])
    full = ReducedIndexSet.full(3)
    np.testing.assert_allclose(reduced_augment(z, full), augment(z, AugmentedIndexMap(3)))
    with pytest.raises(IndexError):
        ReducedIndexSet(3, (3,))


@given(st.integers(1, 40))
def test_index_map_roundtrip(p):
    amap = AugmentedIndexMap(p)
    assert amap.p_tilde == (p + 1) * (p + 2) // 2
    kinds = [amap.kind(i) for i in range(amap.p_tilde)]
    assert kinds[0] == ("intercept",)
    assert all(k[0] == "main" for k in kinds[1:p + 1])
    assert all(k[0] == "inter" for k in kinds[p + 1:])
    assert len(set(kinds)) == amap.p_tilde
    assert all(amap.index(k) == i for i, k in enumerate(kinds))
    # row-major order over j <= l
    inter = [k[1:] for k in kinds[p + 1:]]
    assert inter == sorted(inter) and all(j <= l for j, l in inter)


@given(st.data())
def test_reduced_matches_full_restriction(data):
    p = data.draw(st.integers(1, 8))
    z = data.draw(arrays(np.float64, p, elements=st.floats(-1e3, 1e3)))
    screened = data.draw(st.sets(st.integers(0, p - 1)))
    r = ReducedIndexSet(p, tuple(sorted(screened)))
    d = len(screened)
    assert len(r.active_columns) == 1 + p + d * (d + 1) // 2
    full = augment(z, AugmentedIndexMap(p))
    np.testing.assert_array_equal(reduced_augment(z, r), full[np.asarray(r.active_columns)])
    np.testing.assert_array_equal(augmented_design(z[None, :])[0], full)
