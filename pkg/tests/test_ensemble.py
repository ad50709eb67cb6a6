import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dvsnet.ensemble import (EnsembleSpec, argmax_label, ensemble_predict, fit_linear_fusion, read_probabilities,
                             write_probabilities)


def _spec(m, **kw):
    return EnsembleSpec([f"m{i}" for i in range(m)], **kw)


def _acc(p, y):
    return float(np.mean(np.argmax(p, axis=1) == y))


def test_mean_examples():
    np.testing.assert_allclose(ensemble_predict([[[1.0, 0.0]], [[0.0, 1.0]]], _spec(2)), [[0.5, 0.5]])
    three = [[[0.6, 0.4]], [[0.7, 0.3]], [[0.2, 0.8]]]
    np.testing.assert_allclose(ensemble_predict(three, _spec(3)), [[0.5, 0.5]])


def test_weighted():
    out = ensemble_predict([[[1.0, 0.0]], [[0.0, 1.0]]], _spec(2, fusion="weighted", weights=[0.25, 0.75]))
    np.testing.assert_allclose(out, [[0.25, 0.75]])


@pytest.mark.parametrize("kw", [dict(fusion="weighted"), dict(fusion="weighted", weights=[0.5]),
                                dict(fusion="weighted", weights=[0.7, 0.7]), dict(fusion="vote")])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        _spec(2, **kw)


def test_single_member_rejected():
    with pytest.raises(ValueError):
        _spec(1)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        ensemble_predict([np.full((2, 3), 1 / 3), np.full((3, 3), 1 / 3)], _spec(2))


def test_argmax_ties_lowest():
    assert argmax_label([0.1, 0.7, 0.2]) == 1
    assert argmax_label([0.5, 0.5]) == 0
    assert argmax_label([0.25] * 4) == 0


def test_identical_members_noop(ensemble_fixture):
    p = ensemble_fixture[0][0]
    assert np.array_equal(ensemble_predict([p, p, p], _spec(3)), p)
    assert np.array_equal(ensemble_predict([p, p], _spec(2)), p)


def test_constructed_improvement(ensemble_fixture):
    members, y = ensemble_fixture
    accs = [_acc(p, y) for p in members]
    assert all(a == pytest.approx(0.6) for a in accs)
    fused = _acc(ensemble_predict(members, _spec(3)), y)
    assert fused > max(accs)


def test_trained_linear_fusion(ensemble_fixture):
    members, y = ensemble_fixture
    spec = _spec(3, fusion="trained_linear")
    with pytest.raises(ValueError):
        ensemble_predict(members, spec)
    spec.linear = fit_linear_fusion(members, y, seed=0)
    out = ensemble_predict(members, spec)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert _acc(out, y) > 0.6


def test_probability_csv_round_trip(ensemble_fixture, tmp_path):
    p = ensemble_fixture[0][1][:50]
    ids = [f"s{i}" for i in range(50)]
    write_probabilities(tmp_path / "p.csv", ids, p, "seed=0")
    ids2, p2 = read_probabilities(tmp_path / "p.csv")
    assert ids2 == ids and np.array_equal(p2, p)


def _dist(n, k):
    return arrays(np.float64, (n, k), elements=st.floats(0.01, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True))


member_sets = st.tuples(st.integers(2, 4), st.integers(1, 6), st.integers(2, 5)).flatmap(
    lambda t: st.lists(_dist(t[1], t[2]), min_size=t[0], max_size=t[0]))


@settings(max_examples=60, deadline=None)
@given(member_sets)
def test_fusion_preserves_normalization(members):
    m = len(members)
    np.testing.assert_allclose(ensemble_predict(members, _spec(m)).sum(axis=1), 1.0, atol=1e-6)
    w = list(np.full(m, 1 / m))
    np.testing.assert_allclose(ensemble_predict(members, _spec(m, fusion="weighted", weights=w)).sum(axis=1),
                               1.0, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(member_sets, st.floats(0.01, 100))
def test_argmax_invariant_to_common_scale(members, c):
    m = len(members)
    a = argmax_label(ensemble_predict(members, _spec(m)))
    b = argmax_label(ensemble_predict([p * c for p in members], _spec(m)))
    assert np.array_equal(a, b)
