import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairmap import data, metrics
from fairmap.exceptions import DegenerateGroupWarning, MissingGroup, ShapeMismatch

unit_rows = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 5)),
                   elements=st.floats(0, 1))


class Constant:
    """Stub classifier predicting one label."""

    def __init__(self, label):
        self.label = label

    def predict(self, x):
        return np.full(len(x), self.label)


class TestBer:
    def test_perfect(self):
        g = np.array([0, 1, 2, 1])
        assert metrics.ber(g, g) == 0

    def test_uniform_random_k4(self, rng):
        g = rng.integers(0, 4, 20000)
        assert metrics.ber(rng.integers(0, 4, 20000), g, 4) == pytest.approx(0.75, abs=0.02)

    def test_unequal_groups(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        assert metrics.ber(probs, [0, 0, 1]) == pytest.approx(0.25)

    def test_missing_group(self):
        with pytest.raises(MissingGroup):
            metrics.ber([0, 0], [0, 0], k=2)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 30), st.integers(2, 4), st.integers(0, 2 ** 31))
    def test_balanced_hard_is_one_minus_sacc(self, per_group, k, seed):
        rng = np.random.default_rng(seed)
        g = np.repeat(np.arange(k), per_group)
        pred = rng.integers(0, k, len(g))
        assert metrics.ber(pred, g, k) == pytest.approx(1 - metrics.sacc(pred, g))


class TestOptimalProtection:
    def test_values(self):
        assert metrics.optimal_protection(2, [0.63, 0.37]) == (0.5, 0.63)
        assert metrics.optimal_protection(4, [0.597, 0.2, 0.1, 0.103]) == (0.75, 0.597)
        with pytest.raises(ValueError):
            metrics.optimal_protection(1)


class TestSacc:
    def test_values(self):
        g = np.array([0, 0, 0, 1])
        assert metrics.sacc(g, g) == 1
        assert metrics.sacc(np.zeros(4), g) == 0.75
        assert metrics.sacc([0, 0, 1, 0], g) == 0.5


class TestMiDiscrete:
    def test_values(self):
        g = np.array([0, 1] * 4)
        assert metrics.mi_discrete(np.zeros(8), g) == pytest.approx(0, abs=1e-15)
        assert metrics.mi_discrete(g, g) == pytest.approx(np.log(2))
        assert metrics.mi_discrete(1 - g, g) == pytest.approx(np.log(2))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.int64, st.integers(2, 40), elements=st.integers(0, 3)),
           st.permutations(range(4)), st.integers(0, 2 ** 31))
    def test_relabeling_invariance(self, pred, perm, seed):
        g = np.random.default_rng(seed).integers(0, 3, len(pred))
        relabeled = np.asarray(perm)[pred]
        assert metrics.mi_discrete(relabeled, g) == pytest.approx(
            metrics.mi_discrete(pred, g), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5))
    def test_zero_on_product_table(self, a, b, reps):
        # every (label, prediction) pair equally often: the joint factorizes
        g, p = np.meshgrid(np.arange(a), np.arange(b))
        g = np.tile(g.ravel(), reps)
        p = np.tile(p.ravel(), reps)
        assert abs(metrics.mi_discrete(p, g)) <= 1e-12


class TestFidelity:
    def test_values(self):
        x = np.zeros((3, 2))
        assert metrics.fidelity(x, x) == 1
        assert metrics.fidelity(x, np.ones((3, 2))) == 0
        with pytest.raises(ShapeMismatch):
            metrics.fidelity(x, np.zeros((3, 3)))

    def test_scope(self):
        a = np.zeros((4, 1))
        b = np.array([[0.0], [1.0], [0.0], [1.0]])
        groups = np.array([0, 1, 0, 1])
        assert metrics.fidelity(a, b, "priv", groups) == 1
        assert metrics.fidelity(a, b, "prot", groups) == 0
        assert metrics.fidelity(a, b, "all", groups) == 0.5

    @settings(max_examples=40, deadline=None)
    @given(unit_rows, st.integers(0, 2 ** 31))
    def test_symmetric_and_one_iff_equal(self, a, seed):
        b = np.random.default_rng(seed).uniform(size=a.shape)
        assert metrics.fidelity(a, b) == metrics.fidelity(b, a)
        assert metrics.fidelity(a, a) == 1
        assert metrics.fidelity(a, b) < 1

    def test_permutation_baseline(self, lipton):
        m = data.encode(lipton)
        shuffled = metrics.permutation_baseline(m, seed=1)
        np.testing.assert_array_equal(np.sort(shuffled, axis=0), np.sort(m.values, axis=0))
        assert 0 < metrics.fidelity(m.values, shuffled) < 1


class TestDiversity:
    def test_values(self):
        assert metrics.diversity(np.full((4, 3), 0.2)) == 0
        assert metrics.diversity(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])) == pytest.approx(1)
        assert metrics.diversity(np.zeros((1, 3))) == 0

    def test_chunking(self, rng):
        x = rng.uniform(size=(50, 4))
        assert metrics.diversity(x, chunk_size=7) == pytest.approx(metrics.diversity(x))

    @settings(max_examples=40, deadline=None)
    @given(unit_rows, st.floats(-5, 5))
    def test_bounded_and_translation_invariant(self, x, shift):
        d = metrics.diversity(x)
        assert -1e-12 <= d <= 1 + 1e-12
        assert metrics.diversity(x + shift) == pytest.approx(d, abs=1e-9)


class TestCategoricalDamage:
    def test_identity_and_half(self, mixed_dataset):
        rates, median = metrics.categorical_damage(mixed_dataset, mixed_dataset)
        assert rates == {"job": 0.0} and median == 0
        frame = mixed_dataset.frame.copy()
        frame.loc[:2, "job"] = ["c", "c", "a"]
        rates, median = metrics.categorical_damage(mixed_dataset, mixed_dataset.with_frame(frame))
        assert rates["job"] == 0.5 and median == 0.5


class TestPc:
    def test_values(self):
        x = np.zeros((4, 2))
        groups = np.array([0, 1, 1, 1])
        assert metrics.classification_pc(Constant(0), x, "prot", groups) == 1
        assert metrics.classification_pc(Constant(1), x, "prot", groups) == 0


class TestFairnessGaps:
    def test_identical_rates(self):
        y = np.array([1, 0, 1, 0])
        gaps = metrics.fairness_gaps(y, y, [0, 0, 1, 1])
        assert (gaps.demo_parity, gaps.tp_gap, gaps.fp_gap) == (0, 0, 0)
        assert gaps.within_epsilon

    def test_two_groups(self):
        groups = np.repeat([0, 1], 10)
        pred = np.zeros(20, int)
        pred[:3] = 1
        pred[10] = 1
        y = pred.copy()
        y[[5, 15]] = 1  # one missed positive per group keeps both rates defined
        gaps = metrics.fairness_gaps(y, pred, groups)
        assert gaps.demo_parity == pytest.approx(0.2)

    def test_max_pair_k4(self):
        rates = [0.3, 0.1, 0.2, 0.25]
        groups = np.repeat(np.arange(4), 20)
        pred = np.concatenate([np.arange(20) < 20 * r for r in rates]).astype(int)
        y = np.tile(np.arange(20) % 2, 4)
        assert metrics.fairness_gaps(y, pred, groups).demo_parity == pytest.approx(0.2)

    def test_degenerate_group_flagged(self):
        with pytest.warns(DegenerateGroupWarning):
            gaps = metrics.fairness_gaps([1, 0, 0, 0], [1, 0, 1, 0], [0, 0, 1, 1])
        assert (1, "no positives") in gaps.degenerate
        assert np.isnan(gaps.per_group.tp_rate[1])


class TestWorstCase:
    def test_rules(self):
        per = {"a": {"ber": 0.4, "sacc": 0.6, "mi": 0.01, "pc": 0.9},
               "b": {"ber": 0.3, "sacc": 0.55, "mi": 0.02, "pc": 0.95}}
        assert metrics.worst_case(per) == {"ber": "b", "sacc": "a", "mi": "b", "pc": "b"}
        assert metrics.worst_case({"a": per["a"]}) == {m: "a" for m in per["a"]}
        with pytest.raises(ValueError):
            metrics.worst_case({})

    def test_protection_report_single_classifier(self, lipton):
        m = data.encode(lipton)
        train = (m.values, m.groups)
        rep = metrics.protection_report(["logistic"], train, train, "og_prv")
        assert rep.ber == rep.per_classifier["logistic"]["ber"]
        assert rep.worst["ber"] == "logistic"
        assert [r["metric"] for r in rep.to_rows()] == ["ber", "sacc", "mi"]
        with pytest.raises(ValueError):
            metrics.ProtectionReport(0.5, 0.5, 0.0, "new_prv")


def test_variant_matrix():
    orig = np.zeros((3, 2))
    trans = np.ones((3, 2))
    groups = np.array([0, 1, 1])
    og = metrics.variant_matrix(orig, trans, groups, "og_prv")
    rc = metrics.variant_matrix(orig, trans, groups, "rc_prv")
    np.testing.assert_array_equal(og[0], [0, 0])
    np.testing.assert_array_equal(rc[0], [1, 1])
    np.testing.assert_array_equal(og[1:], trans[1:])


def test_frame_helpers_accept_encoded_matrix(lipton):
    m = data.encode(lipton)
    assert metrics.fidelity(m, m, "prot") == 1
    assert isinstance(metrics.fairness_gaps(lipton.y, lipton.y, lipton.groups).per_group,
                      pd.DataFrame)
