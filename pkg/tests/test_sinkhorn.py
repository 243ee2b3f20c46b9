import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairmap.exceptions import NoConvergenceWarning, ShapeMismatch
from fairmap.sinkhorn import (SinkhornConfig, audit_divergences, entropic_ot,
                              sinkhorn_divergence)

points = st.integers(1, 3).flatmap(
    lambda d: st.tuples(arrays(np.float64, (1, d), elements=st.floats(-3, 3)),
                        arrays(np.float64, (1, d), elements=st.floats(-3, 3))))


@settings(max_examples=40, deadline=None)
@given(points, st.floats(0.01, 10))
def test_singletons_give_squared_distance(pair, eps):
    a, b = pair
    value = sinkhorn_divergence(a, b, SinkhornConfig(epsilon=eps)).value
    assert value == pytest.approx(float(((a - b) ** 2).sum()), abs=1e-9)


def test_self_divergence_is_zero(rng):
    a = rng.normal(size=(60, 3))
    assert abs(sinkhorn_divergence(a, a).value) <= 1e-9


def test_symmetry(rng):
    a, b = rng.normal(size=(40, 2)), rng.normal(1.0, 1.0, size=(50, 2))
    cfg = SinkhornConfig(epsilon=0.5)
    assert sinkhorn_divergence(a, b, cfg).value == pytest.approx(
        sinkhorn_divergence(b, a, cfg).value, abs=1e-9)


def test_monotone_in_translation(rng):
    a = rng.normal(size=(50, 2))
    cfg = SinkhornConfig(epsilon=0.5)
    values = [sinkhorn_divergence(a, a + [t, 0.0], cfg).value for t in (0.25, 0.5, 1, 2, 4)]
    assert np.all(np.diff(values) > 0)


def test_plain_ot_is_biased(rng):
    a = rng.normal(size=(30, 2))
    plain = sinkhorn_divergence(a, a, SinkhornConfig(epsilon=1.0, debiased=False)).value
    assert plain > 0


def test_entropic_ot_converges(rng):
    a, b = rng.normal(size=(20, 2)), rng.normal(size=(25, 2))
    value, converged, n_iter = entropic_ot(a, b, 1.0)
    assert converged and n_iter < 500 and np.isfinite(value)


def test_non_convergence_warns(rng):
    a, b = rng.normal(size=(20, 2)), rng.normal(3.0, 1.0, size=(20, 2))
    with pytest.warns(NoConvergenceWarning):
        res = sinkhorn_divergence(a, b, SinkhornConfig(epsilon=0.01, max_iters=2))
    assert not res.converged


def test_subsampling_is_seeded(rng):
    a, b = rng.normal(size=(300, 2)), rng.normal(size=(300, 2))
    cfg = SinkhornConfig(epsilon=0.5, max_points=100, seed=3)
    r1, r2 = sinkhorn_divergence(a, b, cfg), sinkhorn_divergence(a, b, cfg)
    assert r1.subsampled and (r1.n_a, r1.n_b) == (100, 100)
    assert r1.value == r2.value


def test_errors(rng):
    with pytest.raises(ShapeMismatch):
        sinkhorn_divergence(rng.normal(size=(3, 2)), rng.normal(size=(3, 3)))
    with pytest.raises(ShapeMismatch):
        sinkhorn_divergence(np.empty((0, 2)), rng.normal(size=(3, 2)))
    with pytest.raises(ValueError):
        SinkhornConfig(epsilon=0)


def test_audit_identity_mapping(rng):
    x = rng.uniform(size=(40, 3))
    groups = np.repeat([0, 1], 20)
    out = audit_divergences(x, x, groups, SinkhornConfig(epsilon=0.1))
    assert set(out) == {"sk_prot_vs_mapped", "sk_recpriv_vs_mapped", "sk_priv_vs_mapped"}
    assert abs(out["sk_prot_vs_mapped"]) <= 1e-9
    assert out["sk_recpriv_vs_mapped"] == pytest.approx(out["sk_priv_vs_mapped"])
