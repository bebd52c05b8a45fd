import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecomem.splinebasis import (
    InvalidDimension,
    build_design,
    difference_matrix,
    generalized_inverse_logdet,
    knot_vector,
)


def cox_de_boor(x, t, i, order):
    """Plain recursive B-spline evaluation, right-closed at the last knot."""
    if order == 1:
        if t[i] <= x < t[i + 1]:
            return 1.0
        if x == t[-1] and t[i] < t[i + 1] == t[-1]:
            return 1.0
        return 0.0
    out = 0.0
    d1 = t[i + order - 1] - t[i]
    d2 = t[i + order] - t[i + 1]
    if d1 > 0:
        out += (x - t[i]) / d1 * cox_de_boor(x, t, i, order - 1)
    if d2 > 0:
        out += (t[i + order] - x) / d2 * cox_de_boor(x, t, i + 1, order - 1)
    return out


@pytest.mark.parametrize("L,k", [(10, 7), (6, 4), (12, 10), (3, 4)])
def test_basis_matches_recursive_definition(L, k):
    d = build_design(L, k)
    t = knot_vector(L, k)
    ref = np.array([[cox_de_boor(x, t, i, 4) for i in range(k)] for x in range(L + 1)])
    np.testing.assert_allclose(d.H, ref, atol=1e-13)


def test_partition_of_unity_L10_k7():
    d = build_design(10, 7)
    assert d.H.shape == (11, 7)
    np.testing.assert_allclose(d.H.sum(1), 1.0, atol=1e-12)


def test_k4_penalty_by_hand():
    D = difference_matrix(4)
    np.testing.assert_array_equal(D, [[1, -2, 1, 0], [0, 1, -2, 1]])
    S = build_design(5, 4).S
    np.testing.assert_array_equal(S[0], [1, -2, 1, 0])
    logdet, rank = generalized_inverse_logdet(S)
    assert rank == 2
    # nonzero eigenvalues of D D^T = [[6,-4],[-4,6]] are 2 and 10
    assert logdet == pytest.approx(np.log(20.0), abs=1e-12)


def test_pseudo_logdet_zero_matrix():
    assert generalized_inverse_logdet(np.zeros((4, 4))) == (0.0, 0)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(4, 15), c=st.floats(0.01, 100.0))
def test_pseudo_logdet_scaling(k, c):
    S = difference_matrix(k).T @ difference_matrix(k)
    ld, r = generalized_inverse_logdet(S)
    ld_c, r_c = generalized_inverse_logdet(c * S)
    assert r == r_c == k - 2
    assert ld_c == pytest.approx(ld + r * np.log(c), abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40).flatmap(lambda L: st.tuples(st.just(L), st.integers(4, min(L + 1, 12)))))
def test_design_invariants(Lk):
    L, k = Lk
    d = build_design(L, k)
    np.testing.assert_allclose(d.H.sum(1), 1.0, atol=1e-12)
    assert np.all(d.H >= 0)
    assert np.linalg.matrix_rank(d.H) == k
    np.testing.assert_array_equal(d.S, d.S.T)
    idx = np.arange(k, dtype=float)
    assert np.abs(d.S @ np.ones(k)).max() < 1e-10
    assert np.abs(d.S @ idx).max() < 1e-10


@pytest.mark.parametrize("L,k", [(2, 4), (10, 3), (10, 12)])
def test_invalid_dimensions(L, k):
    with pytest.raises(InvalidDimension):
        build_design(L, k)


def test_quadratic_basis_allows_k3():
    d = build_design(2, 3, order=3)
    assert d.H.shape == (3, 3)
    np.testing.assert_allclose(d.H.sum(1), 1.0, atol=1e-12)
