import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasaudit.basis import DegenerateDictionaryError, FixedBasis
from biasaudit.ensemble_basis import DEFAULT_MENU, RegressorSpec, build_estimated_basis, fit_regressor
from biasaudit.pilots import Fold, FoldError

SPECS = [RegressorSpec.parse(s) for s in ("knn:7", "kernel_nw:0.1", "series_ols:4", "boosted_stumps:20:0.2")]


def brute_knn(x, r, q, k):
    out = []
    for t in q:
        idx = np.lexsort((x, np.abs(x - t)))[:k]
        out.append(r[idx].mean())
    return np.array(out)


def brute_nw(x, r, q, h):
    w = np.exp(-0.5 * ((q[:, None] - x[None, :]) / h) ** 2)
    return (w * r).sum(axis=1) / w.sum(axis=1)


def brute_stumps(x, r, m, nu):
    """Direct search over every split of the sorted sample at each round."""
    xs = np.sort(x)
    rs = r[np.argsort(x, kind="stable")]
    fit = np.full(len(xs), rs.mean())
    rules = []
    for _ in range(m):
        res = rs - fit
        best = None
        for i in range(len(xs) - 1):
            if xs[i + 1] == xs[i]:
                continue
            left, right = res[: i + 1], res[i + 1 :]
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            if best is None or sse < best[0] - 1e-12:
                best = (sse, 0.5 * (xs[i] + xs[i + 1]), left.mean(), right.mean())
        _, thr, lv, rv = best
        rules.append((thr, lv, rv))
        fit = fit + nu * np.where(xs <= thr, lv, rv)
    offset = rs.mean()
    return lambda q: offset + nu * sum(np.where(q <= t, lv, rv) for t, lv, rv in rules)


@pytest.mark.parametrize("spec", SPECS + list(DEFAULT_MENU), ids=lambda s: s.label)
def test_constant_residuals(spec):
    x = np.random.default_rng(0).random(60)
    f = fit_regressor(spec, Fold(x, "ens"), np.full(60, 0.37))
    assert np.allclose(f(np.linspace(0, 1, 11)), 0.37, atol=1e-12)


def test_knn_with_all_neighbors_is_mean():
    rng = np.random.default_rng(1)
    x, r = rng.random(30), rng.normal(size=30)
    f = fit_regressor(RegressorSpec("knn", neighbors=30), Fold(x, "ens"), r)
    assert np.allclose(f(np.linspace(0, 1, 9)), r.mean(), atol=1e-14)


def test_series_recovers_in_span_target():
    x = np.random.default_rng(2).random(200)
    r = 0.3 * math.sqrt(2) * np.cos(np.pi * x)
    f = fit_regressor(RegressorSpec("series_ols", J=3), Fold(x, "ens"), r)
    phi = FixedBasis("cosine", 3).evaluate(x)
    normal = np.linalg.solve(phi.T @ phi, phi.T @ r)
    assert np.allclose(f.coefficients, [0.0, 0.3, 0.0], atol=1e-8)
    assert np.allclose(f.coefficients, normal, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_knn_matches_brute_force(n, k, seed):
    rng = np.random.default_rng(seed)
    x, r = rng.random(n), rng.normal(size=n)
    q = np.concatenate([rng.random(25), x[:5], [0.0, 1.0]])
    f = fit_regressor(RegressorSpec("knn", neighbors=k), Fold(x, "ens"), r)
    assert np.allclose(f(q), brute_knn(x, r, q, min(k, n)), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.floats(0.02, 1.0), st.integers(0, 2**32 - 1))
def test_nw_matches_direct_formula(n, h, seed):
    rng = np.random.default_rng(seed)
    x, r = rng.random(n), rng.normal(size=n)
    q = rng.random(40)
    f = fit_regressor(RegressorSpec("kernel_nw", bandwidth=h), Fold(x, "ens"), r)
    assert np.allclose(f(q), brute_nw(x, r, q, h), atol=1e-10)


def test_nw_far_query_falls_back_to_mean():
    f = fit_regressor(RegressorSpec("kernel_nw", bandwidth=0.001), Fold([0.0, 0.01], "ens"), [1.0, 3.0])
    assert f(1.0)[0] == 2.0


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 30), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_stumps_match_brute_force(n, m, seed):
    rng = np.random.default_rng(seed)
    x, r = rng.random(n), rng.normal(size=n)
    f = fit_regressor(RegressorSpec("boosted_stumps", stumps=m, shrinkage=0.3), Fold(x, "ens"), r)
    ref = brute_stumps(x, r, m, 0.3)
    q = rng.random(30)
    assert np.allclose(f(q), ref(q), atol=1e-10)


def test_spec_parsing():
    assert RegressorSpec.parse("knn:5").neighbors == 5
    assert RegressorSpec.parse("kernel_nw:0.05").bandwidth == 0.05
    assert RegressorSpec.parse("series_ols:15").J == 15
    s = RegressorSpec.parse("boosted_stumps:50:0.1")
    assert (s.stumps, s.shrinkage, s.label) == (50, 0.1, "boosted_stumps:50:0.1")
    for bad in ("forest:3", "knn:x", "knn:0"):
        with pytest.raises(ValueError):
            RegressorSpec.parse(bad)


def test_constant_predictor_gives_unit_function():
    test = Fold(np.random.default_rng(3).random(40), "test")
    basis = build_estimated_basis([lambda x: np.full_like(x, 2.5)], test)
    assert basis.size == 1
    assert np.allclose(basis.evaluate([0.1, 0.9])[:, 0], 1.0, atol=1e-12)


def test_scaled_duplicate_dropped():
    test = Fold(np.random.default_rng(4).random(40), "test")
    f = lambda x: np.sin(5 * x)
    basis = build_estimated_basis([f, lambda x: 2 * f(x)], test)
    assert basis.size == 1


def test_with_fixed_prefix():
    rng = np.random.default_rng(5)
    ens = Fold(rng.random(100), "ens", (rng.random(100) < 0.5).astype(float))
    test = Fold(rng.random(100), "test")
    preds = [fit_regressor(s, ens, ens.a - 0.5) for s in SPECS[:2]]
    basis = build_estimated_basis(preds, test, concat_fixed=(FixedBasis("cosine", 8), 2))
    assert basis.size <= 4
    assert basis.labels[:2] == ("cosine:1", "cosine:2")
    assert np.max(np.abs(basis.empirical_gram() - np.eye(basis.size))) < 1e-8


def test_test_mode_refuses_training_fold():
    ens = Fold(np.random.default_rng(6).random(30), "ens")
    pred = fit_regressor(RegressorSpec("knn", neighbors=3), ens, np.arange(30.0))
    with pytest.raises(FoldError):
        build_estimated_basis([pred], ens, mode="test")
    assert build_estimated_basis([pred], ens, mode="aux").size == 1


def test_all_zero_predictors():
    with pytest.raises(DegenerateDictionaryError):
        build_estimated_basis([lambda x: 0 * x], Fold([0.1, 0.5], "test"))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_estimated_basis_is_orthonormal(seed, prefix):
    rng = np.random.default_rng(seed)
    ens = Fold(rng.random(80), "ens")
    resid = rng.normal(size=80)
    test = Fold(rng.random(80), "test")
    preds = [fit_regressor(s, ens, resid) for s in SPECS]
    concat = (FixedBasis("cosine", 8), prefix) if prefix else None
    basis = build_estimated_basis(preds, test, concat_fixed=concat)
    assert basis.size <= len(preds) + prefix
    assert np.max(np.abs(basis.empirical_gram() - np.eye(basis.size))) < 1e-8
