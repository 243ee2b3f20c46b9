import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairmap import data
from fairmap.exceptions import (BlockShapeMismatch, ClampWarning, EmptyGroupWarning,
                                EncoderMismatch, GroupTooSmall, MissingColumn, NonNumericValue,
                                SchemaError, UnfittedEncoder, UnknownCategory)

SCHEMA = [
    {"name": "sex", "kind": "categorical", "role": "sensitive"},
    {"name": "age", "kind": "numeric"},
    {"name": "job", "kind": "categorical", "categories": ["a", "b", "c"]},
    {"name": "y", "kind": "numeric", "role": "decision"},
]


def write(tmp_path, text):
    path = tmp_path / "table.csv"
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_valid_file(self, tmp_path):
        path = write(tmp_path, "sex,age,job,y\nf,30,a,0\nm,40,b,1\nf,22,c,1\nm,51,a,1\n")
        ds = data.load_csv(path, SCHEMA)
        assert ds.n_rows == 4 and ds.k == 2
        # m has the higher positive rate and becomes group 0
        assert ds.group_labels == ["m", "f"]
        assert ds.groups.tolist() == [1, 0, 1, 0]
        assert ds.group_proportions()[0] == 0.5

    def test_empty_file(self, tmp_path):
        with pytest.raises(MissingColumn):
            data.load_csv(write(tmp_path, ""), SCHEMA)

    def test_unknown_category_names_row_and_column(self, tmp_path):
        path = write(tmp_path, "sex,age,job,y\nf,30,a,0\nm,40,z,1\n")
        with pytest.raises(UnknownCategory) as err:
            data.load_csv(path, SCHEMA)
        assert err.value.row == 3 and err.value.column == "job"

    def test_non_numeric(self, tmp_path):
        path = write(tmp_path, "sex,age,job,y\nf,thirty,a,0\nm,40,b,1\n")
        with pytest.raises(NonNumericValue) as err:
            data.load_csv(path, SCHEMA)
        assert (err.value.row, err.value.column) == (2, "age")

    def test_missing_and_extra_columns(self, tmp_path):
        with pytest.raises(MissingColumn):
            data.load_csv(write(tmp_path, "sex,age,y\nf,1,0\n"), SCHEMA)
        with pytest.raises(SchemaError):
            data.load_csv(write(tmp_path, "sex,age,job,y,z\nf,1,a,0,9\n"), SCHEMA)


class TestCombineSensitive:
    def frame(self):
        # the (f, b) combination never occurs
        return pd.DataFrame({"sex": ["m", "m", "f", "m", "f", "m"],
                             "race": ["a", "b", "a", "a", "a", "b"],
                             "x": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                             "y": [1, 1, 0, 0, 1, 0]})

    def schema(self):
        return [data.AttributeSpec("sex", "categorical", "sensitive", ("f", "m")),
                data.AttributeSpec("race", "categorical", "other", ("a", "b")),
                data.AttributeSpec("x"),
                data.AttributeSpec("y", role="decision")]

    def test_missing_combination_reported(self):
        ds = data.from_frame(self.frame(), self.schema())
        with pytest.warns(EmptyGroupWarning):
            combined = data.combine_sensitive(ds, ["sex", "race"])
        assert combined.k == 3
        assert combined.empty_groups == ["f-b"]
        rates = combined.positive_rates()
        assert rates[0] == rates.max()

    def test_idempotent(self):
        ds = data.from_frame(self.frame(), self.schema())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyGroupWarning)
            once = data.combine_sensitive(ds, ["sex", "race"])
        twice = data.combine_sensitive(once, [once.sensitive.name])
        assert twice.group_labels == once.group_labels
        np.testing.assert_array_equal(twice.groups, once.groups)
        pd.testing.assert_frame_equal(twice.frame, once.frame)

    def test_single_attribute_identity_relabeling(self, mixed_dataset):
        again = data.combine_sensitive(mixed_dataset, ["sex"])
        assert again.group_labels == mixed_dataset.group_labels == ["m", "f"]


class TestEncoding:
    def test_numeric_scaling(self):
        frame = pd.DataFrame({"s": ["a", "b", "a"], "v": [0.0, 5.0, 10.0], "y": [0, 1, 1]})
        schema = [data.AttributeSpec("s", "categorical", "sensitive"),
                  data.AttributeSpec("v", numeric_range=(0, 10)),
                  data.AttributeSpec("y", role="decision")]
        m = data.encode(data.from_frame(frame, schema))
        np.testing.assert_allclose(m.values[:, m.blocks["v"][0]], [0, 0.5, 1])

    def test_one_hot_and_sensitive_excluded(self, mixed_dataset):
        m = data.encode(mixed_dataset)
        assert m.blocks["job"] == (1, 4)
        assert "sex" not in m.blocks
        assert m.values.shape == (6, 5)
        np.testing.assert_array_equal(m.values[:, 1:4].sum(axis=1), 1)

    def test_decode_examples(self, mixed_dataset):
        m = data.encode(mixed_dataset)
        v = m.values.copy()
        v[0, 1:4] = [0, 1, 0]
        v[1, 1:4] = [0.2, 0.5, 0.3]
        v[2, 1:4] = [0.4, 0.4, 0.2]  # tie goes to the lowest index
        lo, hi = m.encoder.ranges_["age"]
        v[3, 0] = 0.5
        out = data.decode(m.with_values(v))
        assert out.frame.job.tolist()[:3] == ["b", "b", "a"]
        assert out.frame.age[3] == pytest.approx(lo + 0.5 * (hi - lo))

    def test_round_trip(self, mixed_dataset):
        out = data.decode(data.encode(mixed_dataset))
        pd.testing.assert_frame_equal(out.frame, mixed_dataset.frame, check_dtype=False)
        np.testing.assert_array_equal(out.groups, mixed_dataset.groups)

    def test_clamp_warning(self, mixed_dataset):
        enc = data.TabularEncoder().fit(mixed_dataset)
        frame = mixed_dataset.frame.copy()
        frame.loc[0, "age"] = 500.0
        with pytest.warns(ClampWarning):
            m = enc.transform(mixed_dataset.with_frame(frame))
        assert m.values[0, 0] == 1.0

    def test_errors(self, mixed_dataset, lipton):
        with pytest.raises(UnfittedEncoder):
            data.TabularEncoder().transform(mixed_dataset)
        enc = data.TabularEncoder().fit(mixed_dataset)
        with pytest.raises(EncoderMismatch):
            enc.transform(lipton)
        with pytest.raises(BlockShapeMismatch):
            enc.inverse_transform(np.zeros((2, 3)), groups=[0, 1])
        m = data.encode(mixed_dataset)
        with pytest.raises(UnfittedEncoder):
            data.decode(data.EncodedMatrix(m.values, m.blocks, m.groups, None))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["p", "q", "r"]),
                          st.floats(-1e6, 1e6, allow_nan=False),
                          st.sampled_from(["a", "b"]),
                          st.integers(0, 1)), min_size=2, max_size=30))
def test_round_trip_property(rows):
    frame = pd.DataFrame(rows, columns=["s", "v", "c", "y"])
    if frame.s.nunique() < 2:
        frame.loc[0, "s"] = "p" if frame.s[1] != "p" else "q"
    schema = [data.AttributeSpec("s", "categorical", "sensitive"),
              data.AttributeSpec("v"),
              data.AttributeSpec("c", "categorical"),
              data.AttributeSpec("y", role="decision")]
    ds = data.from_frame(frame, schema)
    out = data.decode(data.encode(ds))
    assert out.frame.c.tolist() == ds.frame.c.tolist()
    assert out.frame.s.tolist() == ds.frame.s.tolist()
    assert out.frame.y.tolist() == ds.frame.y.tolist()
    v, w = ds.frame.v.to_numpy(float), out.frame.v.to_numpy(float)
    np.testing.assert_allclose(w, v, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(v).max()))


class TestLipton:
    @pytest.mark.parametrize("seed", range(10))
    def test_composition(self, seed):
        ds = data.generate_lipton(2000, seed)
        assert ds.group_labels == ["female", "male"]
        assert ds.group_proportions()[0] == 0.5
        assert abs(ds.y.mean() - 0.3425) <= 0.02
        assert abs(ds.positive_rates()[0] - 0.27) <= 0.02

    def test_deterministic(self):
        a, b = data.generate_lipton(200, 7), data.generate_lipton(200, 7)
        assert data.fingerprint(a) == data.fingerprint(b)
        assert data.fingerprint(a) != data.fingerprint(data.generate_lipton(200, 8))

    def test_odd_size_rejected(self):
        with pytest.raises(ValueError):
            data.generate_lipton(3)


class TestFolds:
    def test_lipton_three_folds(self):
        ds = data.generate_lipton(2000, 0)
        plan = data.split_kfold(ds, 3, seed=0)
        sizes = sorted(len(test) for _, test in plan)
        assert sizes == [666, 667, 667]
        for _, test in plan:
            assert abs(np.mean(ds.groups[test] == 0) - 0.5) <= 0.02

    def test_leave_one_out(self):
        groups = np.array([0, 1, 0, 1, 1])
        plan = data.split_kfold(groups, 5, seed=1)
        assert sorted(len(t) for _, t in plan) == [1] * 5

    def test_small_group(self):
        with pytest.raises(GroupTooSmall):
            data.split_kfold(np.array([0, 0, 0, 0, 1, 1]), 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 2), min_size=12, max_size=80), st.integers(2, 4),
           st.integers(0, 10 ** 6))
    def test_partition(self, groups, n_folds, seed):
        groups = np.array(groups)
        counts = np.bincount(groups)
        if np.any((counts > 0) & (counts < n_folds)):
            return
        plan = data.split_kfold(groups, n_folds, seed)
        tests = np.concatenate([t for _, t in plan])
        assert sorted(tests.tolist()) == list(range(len(groups)))
        sizes = [len(t) for _, t in plan]
        assert max(sizes) - min(sizes) <= 1
        for train, test in plan:
            assert not set(train) & set(test)

    def test_stratified_split(self, lipton):
        tr, te = data.stratified_split(lipton, 1 / 3, seed=0)
        assert len(tr) + len(te) == lipton.n_rows
        assert not set(tr) & set(te)
        assert abs(np.mean(lipton.groups[te] == 0) - 0.5) <= 0.01
