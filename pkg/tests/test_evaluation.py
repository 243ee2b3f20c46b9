import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairmap import data, mapping
from fairmap.evaluation import (CROSSVAL_ROWS, SCENARIOS, ParetoPoint, Perspective, SearchSpace,
                                SelectionCoefficients, aggregate_folds, crossval, pareto_front,
                                perspective, read_pareto_csv, reevaluate_perspective,
                                run_all_scenarios, run_scenario, score_mapping, select_tradeoff,
                                selection_score, sweep, write_pareto_csv)
from fairmap.exceptions import ClampWarning, MissingMetric


def brute_front(vectors):
    """Indices of the non-dominated vectors (maximise all), first copy of duplicates."""
    keep = []
    for i, v in enumerate(vectors):
        if any(np.array_equal(v, vectors[j]) for j in range(i)):
            continue
        dominated = any(all(w[t] >= v[t] for t in range(len(v))) and
                        any(w[t] > v[t] for t in range(len(v)))
                        for w in vectors)
        if not dominated:
            keep.append(i)
    return keep


def make_points(values, names):
    return [ParetoPoint(i, {}, dict(zip(names, row))) for i, row in enumerate(values)]


def maximise_all(names):
    return Perspective("test", tuple((n, "max") for n in names))


class TestPareto:
    def test_single_point(self):
        pts = make_points([[0.3, 0.4]], ["a", "b"])
        assert pareto_front(pts, maximise_all(["a", "b"])) == pts

    def test_incomparable_pair(self):
        pts = make_points([[1, 0], [0, 1]], ["a", "b"])
        assert len(pareto_front(pts, maximise_all(["a", "b"]))) == 2

    def test_duplicates_kept_once(self):
        pts = make_points([[1, 1], [1, 1], [0, 0]], ["a", "b"])
        assert [p.model_id for p in pareto_front(pts, maximise_all(["a", "b"]))] == [0]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 4), st.integers(1, 60), st.integers(0, 2 ** 31))
    def test_matches_brute_force(self, m, n, seed):
        rng = np.random.default_rng(seed)
        # coarse values force ties and duplicates
        values = rng.integers(0, 4, size=(n, m)).astype(float)
        names = [f"o{j}" for j in range(m)]
        got = [p.model_id for p in pareto_front(make_points(values, names), maximise_all(names))]
        assert got == brute_front(values)

    def test_minimised_objective(self):
        persp = perspective("fairmapping", use_sacc=True)
        assert persp.names == ["Fid_priv", "SAcc_rc_prv", "Pc_prot"]
        a = ParetoPoint(0, {}, {"Fid_priv": 1, "SAcc_rc_prv": 0.5, "Pc_prot": 1})
        b = ParetoPoint(1, {}, {"Fid_priv": 1, "SAcc_rc_prv": 0.7, "Pc_prot": 1})
        assert pareto_front([b, a], persp) == [a]

    def test_perspectives(self):
        assert perspective("fairmapping").names == ["Fid_priv", "BER_rc_prv", "Pc_prot"]
        assert perspective("fairmapping", variant="og_prv").names[1] == "BER_og_prv"
        assert perspective("wgan").names == ["Pc_all"]
        assert perspective("attgan").names == ["Fid_all", "Pc_all"]
        assert perspective("gansan_dirm").names == ["Fid_all", "BER_rc_prv"]
        with pytest.raises(ValueError):
            perspective("vae")

    def test_missing_metric(self):
        with pytest.raises(MissingMetric):
            pareto_front([ParetoPoint(0, {}, {"a": 1.0})], maximise_all(["a", "b"]))
        with pytest.raises(MissingMetric):
            pareto_front([ParetoPoint(0, {}, {"a": float("nan")})], maximise_all(["a"]))


class TestReevaluate:
    def test_same_perspective_is_subset(self, rng):
        names = ["a", "b"]
        pts = make_points(rng.uniform(size=(30, 2)), names)
        front = pareto_front(pts, maximise_all(names))
        again = reevaluate_perspective(front, maximise_all(names), lambda p: {})
        assert {p.model_id for p in again} <= {p.model_id for p in front}

    def test_rescoring(self, rng):
        pts = make_points(rng.uniform(size=(40, 2)), ["a", "b"])
        front = pareto_front(pts, maximise_all(["a", "b"]))
        c = {p.model_id: rng.uniform() for p in front}
        new = reevaluate_perspective(front, maximise_all(["a", "c"]),
                                     lambda p: {"c": c[p.model_id]})
        vectors = np.array([[p.metrics["a"], c[p.model_id]] for p in front])
        assert [p.model_id for p in new] == [front[i].model_id for i in brute_front(vectors)]
        one = reevaluate_perspective(front[:1], maximise_all(["c"]), lambda p: {"c": 7.0})
        assert one[0].metrics["c"] == 7.0


def sel_metrics(ber, mi, pc, fid):
    return {"BER_rc_prv": ber, "MI_rc_prv": mi, "Pc_prot": pc, "Fid_priv": fid}


class TestSelection:
    def test_worked_example(self):
        coeffs = SelectionCoefficients(1, 0, 0.2, 1)
        a = ParetoPoint(0, {}, sel_metrics(0.48, 0.01, 0.92, 0.996))
        b = ParetoPoint(1, {}, sel_metrics(0.30, 0.02, 1.0, 0.999))
        assert selection_score(a.metrics, coeffs, 2) == pytest.approx(0.001696)
        assert selection_score(b.metrics, coeffs, 2) == pytest.approx(0.040001)
        assert select_tradeoff([b, a], coeffs, 2) is a

    def test_ideal_point(self):
        ideal = ParetoPoint(5, {}, sel_metrics(0.75, 0.0, 1.0, 1.0))
        other = ParetoPoint(1, {}, sel_metrics(0.7, 0.01, 0.99, 0.999))
        assert selection_score(ideal.metrics, SelectionCoefficients.defaults(4), 4) == 0
        assert select_tradeoff([other, ideal], k=4) is ideal

    def test_defaults(self):
        assert SelectionCoefficients.defaults(2) == SelectionCoefficients(1, 0, 0.2, 1)
        assert SelectionCoefficients.defaults(4).beta == 1.7
        with pytest.raises(ValueError):
            SelectionCoefficients(alpha=-1)

    def test_ties(self):
        m = sel_metrics(0.4, 0.0, 1.0, 1.0)
        pts = [ParetoPoint(3, {}, m), ParetoPoint(2, {}, dict(m))]
        assert select_tradeoff(pts).model_id == 2

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(1, 20))
    def test_order_invariance(self, seed, n):
        rng = np.random.default_rng(seed)
        pts = [ParetoPoint(i, {}, sel_metrics(*rng.uniform(size=4))) for i in range(n)]
        first = select_tradeoff(pts).model_id
        assert select_tradeoff([pts[i] for i in rng.permutation(n)]).model_id == first

    def test_missing_metric(self):
        with pytest.raises(MissingMetric):
            select_tradeoff([ParetoPoint(0, {}, {"Fid_priv": 1.0})])


@pytest.fixture(scope="module")
def split():
    ds = data.generate_lipton(300, seed=5)
    tr, te = data.stratified_split(ds, 1 / 3, seed=0)
    enc = data.TabularEncoder().fit(ds.subset(tr))
    with pytest.warns(ClampWarning):
        test = enc.transform(ds.subset(te))
    return ds, enc.transform(ds.subset(tr)), test


def tiny_config(**kw):
    return mapping.TrainConfig(epochs=1, batch_size=64, critic_steps=1, classifier_epochs=3, **kw)


class TestScenarios:
    def test_identity_reproduces_baseline(self, split):
        _, tr, te = split
        frame = run_all_scenarios(lambda v: v.copy(), tr, te, task_classifiers=("logistic",))
        assert frame.scenario.tolist() == list(SCENARIOS)
        numeric = frame.drop(columns=["scenario", "classifier"])
        for i in range(1, 4):
            pd.testing.assert_series_equal(numeric.iloc[i], numeric.iloc[0], check_names=False)

    def test_compositions(self, split):
        _, tr, te = split
        # zeroed attributes only reach the side the scenario maps
        flat = run_scenario("local_sanitization", lambda v: np.zeros_like(v), tr, te, "dtree")
        base = run_scenario("baseline", lambda v: np.zeros_like(v), tr, te, "dtree")
        assert flat.accuracy != base.accuracy
        assert SCENARIOS["local_sanitization"] == ("original", "transformed")
        assert SCENARIOS["fair_classification"] == ("transformed", "original")

    def test_result_row(self, split):
        _, tr, te = split
        res = run_scenario("baseline", lambda v: v, tr, te, "logistic")
        row = res.to_row()
        assert {"scenario", "accuracy", "accuracy_g0", "accuracy_g1", "demo_parity",
                "tp_gap", "fp_gap"} <= set(row)
        assert res.per_group.shape[0] == 2


class TestScoring:
    def test_identity_mapping(self, split):
        _, tr, te = split
        metrics, details = score_mapping(lambda v: v.copy(), tr, te, ("logistic",))
        assert metrics["Fid_all"] == metrics["Fid_priv"] == metrics["Fid_prot"] == 1
        assert metrics["BER_rc_prv"] == metrics["BER_og_prv"]
        assert set(CROSSVAL_ROWS) <= set(metrics)
        assert details["rc_prv"]["worst"]["ber"] == "logistic"

    def test_constant_mapping_is_protected(self, split):
        _, tr, te = split
        metrics, _ = score_mapping(lambda v: np.full_like(v, 0.5), tr, te, ("logistic",))
        assert metrics["BER_rc_prv"] == pytest.approx(0.5)
        assert metrics["MI_rc_prv"] == pytest.approx(0, abs=1e-12)


class TestCrossval:
    def test_aggregate_hand_computed(self):
        folds = [{"a": 1.0, "b": 0.0}, {"a": 2.0, "b": 0.0}, {"a": 4.0, "b": 0.0}]
        table = aggregate_folds(folds, rows=("a", "b"))
        assert table["mean"].tolist() == pytest.approx([7 / 3, 0.0])
        # sample variance of (1, 2, 4): ((4/3)^2 + (1/3)^2 + (5/3)^2) / 2 = 7/3
        assert table["std"].tolist() == pytest.approx([np.sqrt(7 / 3), 0.0])

    def test_identity_transform(self, split):
        ds, _, _ = split
        table, per_fold = crossval(ds, None, n_folds=3, classifiers=("logistic",),
                                   fit=lambda m: (lambda v: v.copy()))
        assert table.metric.tolist() == list(CROSSVAL_ROWS)
        fid = table.set_index("metric").loc["Fid_priv"]
        assert fid["mean"] == 1 and fid["std"] == 0
        assert len(per_fold) == 3

    def test_trained_folds(self, split):
        ds, _, _ = split
        table, _ = crossval(ds, tiny_config(), n_folds=2, classifiers=("logistic",))
        assert np.isfinite(table[["mean", "std"]].to_numpy()).all()


class TestSweep:
    def test_sampling_is_log_uniform_and_seeded(self):
        space = SearchSpace(tiny_config())
        a, b = space.sample(0, 3), space.sample(0, 3)
        assert a == b and a != space.sample(0, 4)
        samples = np.array([space.sample(1, t).weights.lambda_d for t in range(300)])
        assert samples.min() >= 1e-2 and samples.max() <= 1e2
        assert abs(np.mean(np.log10(samples))) < 0.3

    def test_mode_zeros(self):
        base = tiny_config(mode="wgan", weights={"lambda_rec": 0, "lambda_c": 0, "lambda_d": 0})
        cfg = SearchSpace(base).sample(0, 0)
        assert cfg.weights.lambda_rec == cfg.weights.lambda_c == cfg.weights.lambda_d == 0
        with pytest.raises(ValueError):
            SearchSpace(ranges={"lambda_x": (1, 2)})

    def test_budget_and_determinism(self, split):
        _, tr, te = split
        space = SearchSpace(tiny_config())
        one = sweep(tr, te, space, budget=1, classifiers=("logistic",))
        assert len(one) == 1 and not one[0].failed
        again = sweep(tr, te, space, budget=1, classifiers=("logistic",))
        assert one[0].metrics == again[0].metrics
        assert one[0].hyperparameters == again[0].hyperparameters

    def test_failures_recorded(self, split):
        _, tr, te = split
        points = sweep(tr, te, SearchSpace(tiny_config()), budget=1, classifiers=("nope",))
        assert points[0].failed and "nope" in points[0].error

    def test_resume_and_csv(self, split, tmp_path):
        _, tr, te = split
        space = SearchSpace(tiny_config())
        path = tmp_path / "pareto.csv"
        first = sweep(tr, te, space, budget=2, classifiers=("logistic",), csv_path=path)
        assert len(pd.read_csv(path)) == 2
        both = sweep(tr, te, space, budget=3, classifiers=("logistic",), csv_path=path,
                     resume=True)
        frame = pd.read_csv(path)
        assert len(frame) == 3 and sorted(frame.model_id) == [0, 1, 2]
        for old, new in zip(first, both[:2]):
            assert new.metrics == pytest.approx(old.metrics)
        back = read_pareto_csv(path)
        assert {p.model_id for p in back} == {0, 1, 2}

    def test_csv_round_trip(self, tmp_path):
        pts = [ParetoPoint(0, {"lambda_d": 0.5, "seed": 1}, {"BER_rc_prv": 0.4, "Fid_priv": 0.9}),
               ParetoPoint(1, {"lambda_d": 2.0, "seed": 2}, {}, error="ValueError: boom")]
        write_pareto_csv(tmp_path / "p.csv", pts)
        back = read_pareto_csv(tmp_path / "p.csv")
        assert back[0].metrics == pts[0].metrics and not back[0].failed
        assert back[1].error == "ValueError: boom" and back[1].metrics == {}
        assert back[0].hyperparameters["lambda_d"] == 0.5
