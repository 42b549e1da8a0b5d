import numpy as np
import pytest

from fairtune.data import (CsvFormatError, CsvSchema, Dataset, SplitSpec,
                           append_protected_feature, largest_remainder_sizes, load_csv,
                           one_hot_encode, save_csv, split, standardize)

SCHEMA = CsvSchema(label_column="outcome", positive_label="yes",
                   protected_column="group", privileged_value="m")


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_mixed_columns(tmp_path):
    path = write(tmp_path, "age,city,outcome,group\n"
                           "30,paris,yes,m\n"
                           "40,oslo,no,f\n"
                           "50,paris,yes,f\n")
    data = load_csv(path, SCHEMA)
    assert data.feature_names == ["age", "city=oslo", "city=paris"]
    np.testing.assert_array_equal(data.features,
                                  [[30, 0, 1], [40, 1, 0], [50, 0, 1]])
    np.testing.assert_array_equal(data.labels, [1, 0, 1])
    np.testing.assert_array_equal(data.protected, [1, 0, 0])


def test_load_csv_missing_column(tmp_path):
    path = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(CsvFormatError, match="outcome"):
        load_csv(path, SCHEMA)


def test_load_csv_empty_and_ragged(tmp_path):
    with pytest.raises(CsvFormatError, match="empty"):
        load_csv(write(tmp_path, "", "empty.csv"), SCHEMA)
    with pytest.raises(CsvFormatError, match="line 3"):
        load_csv(write(tmp_path, "age,outcome,group\n1,yes,m\n2,no\n", "ragged.csv"), SCHEMA)


def test_load_csv_all_positive_labels(tmp_path):
    path = write(tmp_path, "age,outcome,group\n1,yes,m\n2,yes,f\n")
    assert load_csv(path, SCHEMA).labels.tolist() == [1.0, 1.0]


def test_load_csv_quoted_fields_and_determinism(tmp_path):
    text = 'age,city,outcome,group\n30,"x,y",yes,m\n40,oslo,no,f\n'
    d1 = load_csv(write(tmp_path, text, "a.csv"), SCHEMA)
    d2 = load_csv(write(tmp_path, text, "b.csv"), SCHEMA)
    assert "city=x,y" in d1.feature_names
    np.testing.assert_array_equal(d1.features, d2.features)


def test_load_csv_drop_and_protected_feature(tmp_path):
    path = write(tmp_path, "age,junk,outcome,group\n30,q,yes,m\n40,w,no,f\n")
    schema = CsvSchema("outcome", "yes", "group", "m", drop_columns=("junk",),
                       protected_as_feature=True)
    data = load_csv(path, schema)
    assert data.feature_names == ["age", "group"]
    np.testing.assert_array_equal(data.features[:, 1], [1, 0])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(20, 3)), rng.integers(0, 2, 20),
                   rng.integers(0, 2, 20))
    path = tmp_path / "round.csv"
    save_csv(data, path)
    schema = CsvSchema("label", "1", "protected", "1")
    loaded = load_csv(path, schema)
    np.testing.assert_allclose(loaded.features, data.features, rtol=0, atol=0)
    np.testing.assert_array_equal(loaded.labels, data.labels)


def test_dataset_validation():
    with pytest.raises(ValueError, match="binary"):
        Dataset(np.zeros((2, 2)), [0, 2], [0, 1])
    with pytest.raises(ValueError, match="length"):
        Dataset(np.zeros((3, 2)), [0, 1], [0, 1, 0])


def test_largest_remainder_exact_and_rounded():
    assert largest_remainder_sizes(10, (0.6, 0.2, 0.2)) == [6, 2, 2]
    assert sum(largest_remainder_sizes(11, (0.6, 0.2, 0.2))) == 11


def test_split_sizes_and_determinism():
    data = Dataset(np.arange(20).reshape(10, 2), [0, 1] * 5, [1, 0] * 5)
    spec = SplitSpec(seed=4)
    tr, va, te = split(data, spec)
    assert (len(tr), len(va), len(te)) == (6, 2, 2)
    tr2, va2, te2 = split(data, spec)
    np.testing.assert_array_equal(tr.features, tr2.features)
    np.testing.assert_array_equal(te.features, te2.features)


def test_split_partition_disjoint_exhaustive():
    rng = np.random.default_rng(5)
    data = Dataset(rng.normal(size=(37, 2)), rng.integers(0, 2, 37), rng.integers(0, 2, 37))
    tr, va, te = split(data, SplitSpec(seed=6))
    rows = np.vstack([tr.features, va.features, te.features])
    assert rows.shape[0] == 37
    key = lambda m: sorted(map(tuple, m))
    assert key(rows) == key(data.features)


def test_split_stratified_rounding_oracle():
    labels = np.array([1.0] * 30 + [0.0] * 70)
    data = Dataset(np.arange(200).reshape(100, 2), labels, np.zeros(100))
    tr, va, te = split(data, SplitSpec(seed=7, stratify_by_label=True))
    assert (len(tr), len(va), len(te)) == (60, 20, 20)
    assert tr.labels.sum() == 18
    assert va.labels.sum() == 6
    assert te.labels.sum() == 6


def test_split_stratified_small_class_error():
    data = Dataset(np.zeros((6, 1)), [1, 0, 0, 0, 0, 0], np.zeros(6))
    with pytest.raises(ValueError, match="fewer than 3"):
        split(data, SplitSpec(stratify_by_label=True))


def test_standardize_train_stats_applied_to_others():
    tr = Dataset(np.array([[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]]), [0, 1, 0], [0, 1, 1])
    va = Dataset(np.array([[10.0, 7.0]]), [1], [0])
    (trs, vas), stats = standardize(tr, va)
    np.testing.assert_allclose(trs.features[:, 0].mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(trs.features[:, 0].std(), 1.0, atol=1e-12)
    # constant column: centred, not divided
    np.testing.assert_allclose(trs.features[:, 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(vas.features[0, 1], 2.0, atol=1e-12)
    # validation transformed with train statistics, not its own
    expected = (10.0 - stats.mean[0]) / stats.sd[0]
    assert vas.features[0, 0] == pytest.approx(expected)
    assert vas.features[0, 0] != pytest.approx(0.0)


def test_one_hot_encode_sums_to_one():
    data = Dataset(np.array([[0.0, 3.0], [1.0, 5.0], [2.0, 3.0]]), [0, 1, 0], [1, 0, 1],
                   ["cat", "num"])
    enc = one_hot_encode(data, ["cat"])
    assert enc.feature_names == ["cat=0", "cat=1", "cat=2", "num"]
    np.testing.assert_array_equal(enc.features[:, :3].sum(axis=1), np.ones(3))
    with pytest.raises(ValueError, match="unknown"):
        one_hot_encode(data, ["nope"])


def test_append_protected_feature():
    data = Dataset(np.zeros((3, 1)), [0, 1, 0], [1, 0, 1])
    out = append_protected_feature(data)
    np.testing.assert_array_equal(out.features[:, 1], data.protected)
    assert out.feature_names[-1] == "protected"
