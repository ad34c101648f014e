import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from biasaudit.basis import (
    BasisError,
    DegenerateDictionaryError,
    FixedBasis,
    eval_fixed,
    gram_matrix,
    orthonormalize,
)
from biasaudit.quadrature import QuadratureError


def test_first_cosine_is_constant():
    assert eval_fixed(FixedBasis("cosine"), 1, 0.37) == 1.0


def test_second_cosine_at_zero():
    assert eval_fixed(FixedBasis("cosine"), 2, 0.0) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_third_cosine_quarter_point_is_zero():
    assert abs(eval_fixed(FixedBasis("cosine"), 3, 0.25)) < 1e-15


def test_haar_values_match_hand_definition():
    b = FixedBasis("haar", 8)
    # phi_2 is the mother wavelet, phi_3/phi_4 are its level-1 children
    assert eval_fixed(b, 2, 0.1) == 1.0
    assert eval_fixed(b, 2, 0.6) == -1.0
    assert eval_fixed(b, 3, 0.1) == pytest.approx(math.sqrt(2))
    assert eval_fixed(b, 3, 0.3) == pytest.approx(-math.sqrt(2))
    assert eval_fixed(b, 3, 0.7) == 0.0
    assert eval_fixed(b, 4, 1.0) == pytest.approx(-math.sqrt(2))


@pytest.mark.parametrize("j,x", [(0, 0.5), (65, 0.5), (1, -0.1), (1, 1.1), (2, float("nan"))])
def test_eval_fixed_rejects_bad_input(j, x):
    with pytest.raises(BasisError):
        eval_fixed(FixedBasis("cosine", 64), j, x)


def test_unknown_kind():
    with pytest.raises(BasisError):
        FixedBasis("legendre")


def test_evaluate_shape_and_domain():
    b = FixedBasis("cosine", 8)
    assert b.evaluate(np.linspace(0, 1, 5), 3).shape == (5, 3)
    with pytest.raises(BasisError):
        b.evaluate([0.5, 1.2])
    with pytest.raises(BasisError):
        b.evaluate([0.5], 9)


def test_gram_cosine_identity():
    g = gram_matrix(FixedBasis("cosine"), 4, 2049)
    assert np.max(np.abs(g - np.eye(4))) < 1e-10


def test_gram_haar_identity():
    g = gram_matrix(FixedBasis("haar"), 4, 2049)
    assert np.max(np.abs(g - np.eye(4))) < 1e-8


def test_gram_cosine_single():
    assert np.allclose(gram_matrix(FixedBasis("cosine"), 1, 257), [[1.0]], atol=1e-14)


@pytest.mark.parametrize("nodes", [2, 128, 256, 1000])
def test_gram_rejects_bad_node_count(nodes):
    with pytest.raises(QuadratureError):
        gram_matrix(FixedBasis("cosine"), 2, nodes)


def test_gram_rejects_k_beyond_size():
    with pytest.raises(BasisError):
        gram_matrix(FixedBasis("cosine", 4), 5)


@pytest.mark.parametrize("kind,i,j", [("cosine", 3, 5), ("haar", 2, 6), ("haar", 7, 7)])
def test_gram_entries_against_adaptive_quadrature(kind, i, j):
    b = FixedBasis(kind, 8)
    pts = b.breakpoints(8)
    ref, _ = quad(lambda t: eval_fixed(b, i, t) * eval_fixed(b, j, t), 0, 1, points=pts or None, limit=200)
    assert gram_matrix(b, 8)[i - 1, j - 1] == pytest.approx(ref, abs=1e-8)


def test_identical_members_are_dropped():
    f = lambda x: np.sin(3 * x)
    eb = orthonormalize([f, f], np.linspace(0, 1, 50))
    assert eb.size == 1 and eb.retained == (0,)


def test_cosine_dictionary_on_grid_is_nearly_diagonal():
    b = FixedBasis("cosine", 3)
    dictionary = [lambda x, j=j: b.evaluate(x)[:, j] for j in range(3)]
    # midpoint grid (i - 1/2) / 512, the same grid the fixed design uses
    sample = (np.arange(512) + 0.5) / 512
    eb = orthonormalize(dictionary, sample)
    # oracle: the transform is the inverse Cholesky factor of the empirical Gram
    vals = b.evaluate(sample)
    gram = vals.T @ vals / len(sample)
    expected = np.linalg.inv(np.linalg.cholesky(gram))
    assert np.allclose(eb.transform, expected, atol=1e-10)
    assert np.max(np.abs(eb.transform - np.diag(np.diag(eb.transform)))) < 1e-6
    assert np.max(np.abs(np.diag(eb.transform) - 1)) < 1e-6


def test_cosine_dictionary_with_endpoint_grid_is_not_diagonal():
    # including both end points breaks discrete orthogonality at O(1/n)
    b = FixedBasis("cosine", 3)
    dictionary = [lambda x, j=j: b.evaluate(x)[:, j] for j in range(3)]
    eb = orthonormalize(dictionary, np.linspace(0, 1, 512))
    off = np.abs(eb.transform - np.diag(np.diag(eb.transform))).max()
    assert 1e-4 < off < 1e-2


def test_two_point_pair_by_hand():
    eb = orthonormalize([lambda x: np.ones_like(x), lambda x: x], [0.0, 1.0])
    # by hand: q1 = 1, q2 = (x - 1/2) / 0.5 = 2x - 1
    assert np.allclose(eb.evaluate([0.0, 0.25, 1.0]), [[1, -1], [1, -0.5], [1, 1]], atol=1e-12)
    assert np.max(np.abs(eb.empirical_gram() - np.eye(2))) < 1e-12


def test_all_zero_dictionary_is_degenerate():
    with pytest.raises(DegenerateDictionaryError):
        orthonormalize([lambda x: 0 * x], np.linspace(0, 1, 10))


def test_sample_smaller_than_dictionary():
    with pytest.raises(BasisError):
        orthonormalize([np.sin, np.cos, np.exp], [0.1, 0.2])


def test_transform_is_lower_triangular_and_reproduces_values():
    rng = np.random.default_rng(1)
    dictionary = [lambda x: np.ones_like(x), np.sin, lambda x: x**2, np.cos]
    sample = rng.random(40)
    eb = orthonormalize(dictionary, sample)
    assert np.allclose(np.triu(eb.transform, 1), 0)
    direct = eb.dictionary_values(sample) @ eb.transform.T
    assert np.allclose(eb.evaluate(sample), direct)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=20, max_value=200),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_orthonormality_property(m, n, seed):
    rng = np.random.default_rng(seed)
    coefs = rng.normal(size=(m, 5))
    b = FixedBasis("cosine", 5)
    dictionary = [lambda x, c=c: b.evaluate(x) @ c for c in coefs]
    eb = orthonormalize(dictionary, rng.random(n))
    assert 1 <= eb.size <= m
    assert np.max(np.abs(eb.empirical_gram() - np.eye(eb.size))) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**32 - 1))
def test_duplicates_never_increase_rank(m, seed):
    rng = np.random.default_rng(seed)
    b = FixedBasis("cosine", 6)
    coefs = rng.normal(size=(m, 6))
    base = [lambda x, c=c: b.evaluate(x) @ c for c in coefs]
    doubled = base + [lambda x, c=c: 2.0 * (b.evaluate(x) @ c) for c in coefs]
    sample = rng.random(100)
    assert orthonormalize(doubled, sample).size == orthonormalize(base, sample).size
