import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabtransformer.data import (EncodedDataset, RawTable, Schema, SplitAssignment, decode_codes, encode,
                                 fit_schema, load_csv, semisup_split, split)
from tabtransformer.errors import ConfigError, DataError, SchemaError


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def table(cols: dict, target="y") -> RawTable:
    header = list(cols)
    n = len(next(iter(cols.values())))
    return RawTable(header, [[str(cols[h][i]) for h in header] for i in range(n)])


# ---- load_csv -----------------------------------------------------------------

def test_three_line_file_has_two_rows(tmp_path):
    t = load_csv(write(tmp_path, "a,b,y\n1,x,0\n2,z,1\n"))
    assert t.header == ["a", "b", "y"] and len(t) == 2


def test_ragged_row_names_line(tmp_path):
    with pytest.raises(DataError, match="line 2"):
        load_csv(write(tmp_path, "a,b,y\n1,x\n2,z,1\n"))


def test_quoted_delimiter_is_one_cell(tmp_path):
    t = load_csv(write(tmp_path, 'a,b,y\n"1,5",x,0\n'))
    assert t.rows[0] == ["1,5", "x", "0"]


def test_headerless_and_custom_delimiter(tmp_path):
    t = load_csv(write(tmp_path, "1;x;0\n2;z;1\n"), has_header=False, delimiter=";")
    assert len(t) == 2 and len(t.header) == 3


def test_write_then_load_round_trip(tmp_path):
    t = table({"a": ["p", "q,r", ""], "y": [0, 1, 0]})
    t.write_csv(tmp_path / "o.csv")
    back = load_csv(tmp_path / "o.csv")
    assert back.header == t.header and back.rows == t.rows


# ---- fit_schema ---------------------------------------------------------------

def test_first_occurrence_vocabulary():
    t = table({"c": ["a", "b", "a"], "y": [0, 1, 0]})
    s = fit_schema(t, [0, 1, 2], "y")
    (col,) = s.categorical
    assert col.cardinality == 2 and col.code_of("a") == 1 and col.code_of("b") == 2


def test_zscore_arithmetic():
    vals = [8.0] * 6 + [12.0] * 6  # mean 10, population std 2
    t = table({"x": vals, "y": [0, 1] * 6})
    s = fit_schema(t, range(12), "y", overrides={"x": "continuous"})
    (col,) = s.continuous
    assert col.rescale(np.array([14.0]))[0] == pytest.approx(2.0)


def test_quantile_median_maps_to_half():
    n = 101
    vals = np.random.default_rng(0).permutation(np.arange(n, dtype=float) * 1.7)
    t = table({"x": vals.tolist(), "y": [i % 2 for i in range(n)]})
    s = fit_schema(t, range(n), "y", rescaling="quantile")
    (col,) = s.continuous
    r = col.rescale(vals)
    assert abs(col.rescale(np.array([np.median(vals)]))[0] - 0.5) <= 1 / n
    assert r.min() >= 0 and r.max() <= 1
    assert np.all(np.diff(r[np.argsort(vals)]) > 0)


def test_log_rescaling_at_min_is_zero():
    vals = [-3.0, 0.0, 5.0] + list(range(10, 20))
    t = table({"x": vals, "y": [i % 2 for i in range(len(vals))]})
    s = fit_schema(t, range(len(vals)), "y", rescaling="log")
    (col,) = s.continuous
    assert col.rescale(np.array([-3.0]))[0] == 0.0
    assert col.rescale(np.array([2.0]))[0] == pytest.approx(np.log(1 + 2.0 + 3.0))


def test_small_numeric_column_is_categorical_and_threshold_respected():
    t = table({"x": [1, 2, 3, 1, 2, 3], "y": [0, 1] * 3})
    assert len(fit_schema(t, range(6), "y").categorical) == 1
    assert len(fit_schema(t, range(6), "y", categorical_threshold=2).continuous) == 1


def test_target_checks():
    t = table({"x": ["a", "b", "c"], "y": [0, 0, 0]})
    with pytest.raises(SchemaError):
        fit_schema(t, range(3), "y")
    with pytest.raises(SchemaError):
        fit_schema(t, range(3), "label")


def test_positive_label_default_and_override():
    t = table({"x": ["a", "b"], "y": [">50K", "<=50K"]})
    assert fit_schema(t, [0, 1], "y").positive_label == ">50K"
    assert fit_schema(t, [0, 1], "y", positive_label="<=50K").positive_label == "<=50K"


def test_unknown_override_column_rejected():
    t = table({"x": ["a", "b"], "y": [0, 1]})
    with pytest.raises(ConfigError):
        fit_schema(t, [0, 1], "y", overrides={"nope": "drop"})


def test_drop_override():
    t = table({"x": ["a", "b"], "z": ["u", "v"], "y": [0, 1]})
    s = fit_schema(t, [0, 1], "y", overrides={"z": "drop"})
    assert [c.name for c in s.columns] == ["x"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_non_training_rows_do_not_affect_schema(seed):
    rng = np.random.default_rng(seed)
    n = 40
    cats = rng.choice(list("abcdef"), size=n)
    nums = rng.normal(size=n)
    y = np.arange(n) % 2
    t1 = table({"c": cats.tolist(), "x": nums.tolist(), "y": y.tolist()})
    sp = split(n, seed)
    cats2, nums2 = cats.copy(), nums.copy()
    held = np.concatenate([sp.val, sp.test])
    cats2[held] = rng.choice(list("uvwxyz"), size=held.size)
    nums2[held] = rng.normal(size=held.size) * 100
    t2 = table({"c": cats2.tolist(), "x": nums2.tolist(), "y": y.tolist()})
    a = fit_schema(t1, sp.train, "y", overrides={"x": "continuous"})
    b = fit_schema(t2, sp.train, "y", overrides={"x": "continuous"})
    assert a.canonical() == b.canonical()


def test_zscore_training_column_is_standardized():
    rng = np.random.default_rng(3)
    vals = rng.normal(7, 3, size=500)
    t = table({"x": vals.tolist(), "y": (np.arange(500) % 2).tolist()})
    s = fit_schema(t, range(500), "y")
    z = encode(t, s).x_cont[:, 0].astype(np.float64)
    (col,) = s.continuous
    z64 = col.rescale(np.array([float(v) for v in t.column("x")]))
    assert abs(z64.mean()) < 1e-6 and abs(z64.std() - 1) < 1e-6
    assert np.allclose(z, z64, atol=1e-6)


def test_schema_json_round_trip_and_fingerprint(tmp_path):
    t = table({"c": ["a", "b", "a"], "x": list(range(3)), "y": [0, 1, 0]})
    s = fit_schema(t, range(3), "y", overrides={"x": {"kind": "continuous", "rescaling": "log"}})
    s.save(tmp_path / "s.json")
    back = Schema.load(tmp_path / "s.json")
    assert back.canonical() == s.canonical() and back.fingerprint() == s.fingerprint()
    t2 = table({"c": ["a", "c", "a"], "x": list(range(3)), "y": [0, 1, 0]})
    s2 = fit_schema(t2, range(3), "y", overrides={"x": {"kind": "continuous", "rescaling": "log"}})
    assert s2.fingerprint() != s.fingerprint()


# ---- encode -------------------------------------------------------------------

def _fitted():
    t = table({"c": ["a", "b", "a"], "y": [0, 1, 0]})
    return fit_schema(t, range(3), "y")


def test_unseen_class_and_missing_get_code_zero():
    s = _fitted()
    test = table({"c": ["z", "b", ""], "y": [0, 1, 1]})
    ds = encode(test, s)
    assert ds.x_cat[:, 0].tolist() == [0, 2, 0]
    assert ds.y.tolist() == [0, 1, 1]


def test_continuous_missing_filled_with_training_mean():
    t = table({"x": [1.0, 3.0, 5.0, 7.0], "y": [0, 1, 0, 1]})
    s = fit_schema(t, range(4), "y", overrides={"x": "continuous"}, rescaling="none")
    ds = encode(table({"x": ["", "2"], "y": [0, 1]}), s)
    assert ds.x_cont[:, 0].tolist() == [4.0, 2.0]


@given(st.lists(st.sampled_from(list("abcde")), min_size=2, max_size=30))
def test_decode_encode_lossless(values):
    t = table({"c": values, "y": [i % 2 for i in range(len(values))]})
    if len(set(t.column("y"))) < 2:
        return
    s = fit_schema(t, range(len(values)), "y")
    ds = encode(t, s)
    assert [r[0] for r in decode_codes(ds.x_cat, s)] == values
    assert decode_codes(np.zeros((1, 1), dtype=int), s) == [[None]]


def test_encoded_dataset_save_load(tmp_path):
    ds = EncodedDataset(np.arange(6).reshape(3, 2), np.ones((3, 1), np.float32), np.array([0, 1, 0]))
    ds.save(tmp_path / "e.npz")
    back = EncodedDataset.load(tmp_path / "e.npz")
    assert np.array_equal(back.x_cat, ds.x_cat) and np.array_equal(back.y, ds.y)


# ---- split --------------------------------------------------------------------

@pytest.mark.parametrize("n,sizes", [(100, (65, 15, 20)), (101, (66, 15, 20))])
def test_split_sizes(n, sizes):
    sp = split(n, 0)
    assert (len(sp.train), len(sp.val), len(sp.test)) == sizes


@given(st.integers(20, 500), st.integers(0, 2**31 - 1))
def test_split_is_a_partition_and_deterministic(n, seed):
    a, b = split(n, seed), split(n, seed)
    allidx = np.concatenate([a.train, a.val, a.test])
    assert sorted(allidx.tolist()) == list(range(n))
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("train", "val", "test"))


def test_split_too_small():
    with pytest.raises(DataError):
        split(19, 0)


def test_stratified_split_keeps_class_ratio():
    labels = np.array([1] * 30 + [0] * 170)
    sp = split(200, 1, labels=labels, stratify=True)
    assert (len(sp.train), len(sp.val), len(sp.test)) == (130, 30, 40)
    assert labels[sp.test].sum() == 6 and labels[sp.val].sum() == 4


def test_split_file_round_trip(tmp_path):
    sp = split(50, 4)
    sp.save(tmp_path / "s.csv")
    back = SplitAssignment.load(tmp_path / "s.csv")
    assert np.array_equal(back.train, sp.train) and np.array_equal(back.test, sp.test)
    sp.save(tmp_path / "s2.csv")
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()


def test_semisup_split_examples():
    sp = SplitAssignment(np.arange(5000), np.arange(5000, 5100), np.arange(5100, 5200))
    lab, unl = semisup_split(sp, 50)
    assert len(lab) == 50 and len(unl) == 4950
    assert set(lab) | set(unl) == set(sp.train) and not set(lab) & set(unl)
    lab, unl = semisup_split(sp, 5000)
    assert len(unl) == 0
    with pytest.raises(ConfigError):
        semisup_split(sp, 5001)
    with pytest.raises(ConfigError):
        semisup_split(sp, 0)
