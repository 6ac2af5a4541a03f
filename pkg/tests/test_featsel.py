import numpy as np
import pytest
from hypothesis import given, strategies as st

from pvhybrid import featsel
from pvhybrid.errors import InputShapeError, PreconditionError
from pvhybrid.featsel import ElasticNetConfig


def _std_col(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    return (x - x.mean()) / x.std()


def closed_form(x, y, lam, alpha):
    # one standardized column: beta = S(x'y/n, lam*alpha) / (1 + lam*(1-alpha))
    n = len(y)
    z = sum(a * b for a, b in zip(x, y)) / n
    t = lam * alpha
    s = (abs(z) - t) if abs(z) > t else 0.0
    return (1 if z > 0 else -1) * s / (1 + lam * (1 - alpha))


def test_soft_threshold():
    assert featsel.soft_threshold(3.0, 1.0) == 2.0
    assert featsel.soft_threshold(-3.0, 1.0) == -2.0
    assert featsel.soft_threshold(0.5, 1.0) == 0.0


def test_unpenalized_single_column_is_projection():
    x = _std_col(100, 0)
    y = 0.7 * x + np.random.default_rng(1).normal(size=100) * 0.1
    y -= y.mean()
    res = featsel.elastic_net_fit(x[:, None], y, ElasticNetConfig(lam=0.0))
    assert res.coef[0] == pytest.approx(x @ y / 100, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.01, 0.1, 0.5, 1.0, 5.0])
@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_single_column_matches_closed_form(lam, alpha):
    x = _std_col(80, 3)
    y = -0.4 * x + np.random.default_rng(4).normal(size=80) * 0.3
    y -= y.mean()
    res = featsel.elastic_net_fit(x[:, None], y, ElasticNetConfig(lam=lam, alpha=alpha))
    assert abs(res.coef[0] - closed_form(x, y, lam, alpha)) < 1e-8


def test_large_penalty_zeroes_everything():
    X = featsel.standardize(np.random.default_rng(0).normal(size=(50, 4)))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0])
    y -= y.mean()
    assert np.all(featsel.elastic_net_fit(X, y, ElasticNetConfig(lam=1e6, alpha=0.5)).coef == 0)
    z = np.zeros(50)
    assert np.all(featsel.elastic_net_fit(X, z).coef == 0)


@pytest.mark.parametrize("seed", range(10))
def test_objective_non_increasing(seed):
    rng = np.random.default_rng(seed)
    X = featsel.standardize(rng.normal(size=(60, 5)) @ rng.normal(size=(5, 5)))
    y = X @ rng.normal(size=5) + rng.normal(size=60)
    y -= y.mean()
    res = featsel.elastic_net_fit(X, y, ElasticNetConfig(lam=0.05, alpha=0.7))
    tr = res.objective_trace
    assert all(b <= a + 8 * np.finfo(float).eps * abs(a) for a, b in zip(tr, tr[1:]))
    assert res.converged


def test_requires_standardized_input():
    X = np.random.default_rng(0).normal(size=(30, 2)) * 5 + 1
    with pytest.raises(PreconditionError):
        featsel.elastic_net_fit(X, np.zeros(30))


def test_boost_finds_step_feature():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(300, 2))
    y = np.where(X[:, 0] > 0.5, 1.0, 0.0) + rng.normal(size=300) * 0.01
    res = featsel.boosted_stump_importance(X, y)
    assert res.gains[0] > 10 * res.gains[1]


def test_boost_constant_target():
    X = np.random.default_rng(0).uniform(size=(20, 3))
    assert np.all(featsel.boosted_stump_importance(X, np.full(20, 2.0)).gains == 0)


def test_boost_single_feature_and_accounting():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(100, 1))
    y = np.sin(6 * X[:, 0])
    res = featsel.boosted_stump_importance(X, y, rounds=30)
    tr = res.sse_trace
    assert all(b <= a for a, b in zip(tr, tr[1:]))
    assert res.gains[0] == pytest.approx(tr[0] - tr[-1], rel=1e-9)


def test_boost_needs_two_rows():
    with pytest.raises(InputShapeError):
        featsel.boosted_stump_importance(np.zeros((1, 2)), np.zeros(1))


def test_rank_disjoint_scores():
    rep = featsel.rank_features([1.0, 0.0], [0.0, 1.0])
    assert [f.combined for f in rep.features] == [0.5, 0.5]
    assert [f.rank for f in rep.features] == [1, 2]


def test_rank_agreeing_scores():
    rep = featsel.rank_features([0.1, 3.0, 1.0], [0.1, 3.0, 1.0], ["a", "b", "c"])
    assert rep.top(3) == ["b", "c", "a"]


def test_rank_length_mismatch():
    with pytest.raises(InputShapeError):
        featsel.rank_features([1.0, 2.0], [1.0])


pos = st.floats(0.0, 1e3, allow_nan=False)


@given(st.lists(st.tuples(pos, pos), min_size=1, max_size=8), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_rank_invariant_to_rescaling(pairs, a, b):
    en = np.array([p[0] for p in pairs])
    bo = np.array([p[1] for p in pairs])
    r1 = [f.rank for f in featsel.rank_features(en, bo).features]
    r2 = [f.rank for f in featsel.rank_features(en * a, bo * b).features]
    c1 = np.array([f.combined for f in featsel.rank_features(en, bo).features])
    c2 = np.array([f.combined for f in featsel.rank_features(en * a, bo * b).features])
    assert np.allclose(c1, c2, rtol=1e-9, atol=1e-12)
    # ranks can only move between near-tied entries
    if len(set(np.round(c1, 9))) == len(c1):
        assert r1 == r2


def test_report_csv():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = 3 * X[:, 1] + 0.1 * rng.normal(size=200)
    rep = featsel.importance_report(X, y, ["a", "b", "c"])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "feature,en_score,boost_score,combined,rank"
    assert lines[1].startswith("b,")
