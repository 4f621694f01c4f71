from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlab.core import FAIL, PASS, UNMET, DomainError, as_array
from gridlab.norms import (
    flat_operator_norm,
    flat_p_norm,
    flat_sandwich_audit,
    grid_norm,
    grid_norm_direct_power,
    grid_norm_power,
    holder_conjugate,
    lp_norm,
    lp_power,
    matrix_sandwich_audit,
    operator_norm,
    operator_value,
)


def subset_flat_p(v, p):
    """Brute force over all nonempty subsets, compared by exact powers."""
    n = len(v)
    best = None
    for mask in range(1, 1 << n):
        S = [i for i in range(n) if mask >> i & 1]
        mean = Fraction(sum(v[i] for i in S), len(S))
        key = mean ** p * Fraction(len(S), n)
        best = key if best is None else max(best, key)
    return best


def subset_flat_op(A, l, r):
    """Float brute force over all S x T."""
    nx, ny = A.shape
    best = 0.0
    for sm in range(1, 1 << nx):
        S = [i for i in range(nx) if sm >> i & 1]
        for tm in range(1, 1 << ny):
            T = [j for j in range(ny) if tm >> j & 1]
            v = A[np.ix_(S, T)].mean() * (len(S) / nx) ** (1 / l) * (len(T) / ny) ** (1 / r)
            best = max(best, v)
    return best


def test_holder_conjugate():
    assert holder_conjugate(2) == 2
    assert holder_conjugate(3) == Fraction(3, 2)
    with pytest.raises(DomainError):
        holder_conjugate(1)


@given(st.fractions(min_value=Fraction(101, 100), max_value=50))
def test_holder_conjugate_identity(p):
    assert 1 / p + 1 / holder_conjugate(p) == 1


def test_lp_norm_closed_forms():
    assert lp_norm([3, 3, 3], 5) == pytest.approx(3)
    ind = [1, 0, 0, 1, 0, 0, 0, 0]
    for p in (1, 2, 7):
        assert lp_norm(ind, p) == pytest.approx(0.25 ** (1 / p))
    with pytest.raises(DomainError):
        lp_norm([1, -1], 2)


def test_lp_norm_matches_summation():
    rng = np.random.default_rng(0)
    v = rng.random(30)
    assert lp_norm(v, 4) == pytest.approx(np.mean(v ** 4) ** 0.25, rel=1e-12)
    assert lp_power(as_array([1, 2, 3], True), 3) == Fraction(36, 3)


def test_flat_p_norm_examples():
    val, wit = flat_p_norm(as_array([2, 2, 2], True), 3)
    assert val == pytest.approx(2) and wit.data == (0, 1, 2)
    val, wit = flat_p_norm(as_array([0, 1, 0, 1, 1, 0], True), 4)
    assert val == pytest.approx(0.5 ** 0.25) and wit.data == (1, 3, 4)
    val, wit = flat_p_norm(as_array([0, 0], True), 2)
    assert val == 0 and wit.data == ()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=12), st.integers(1, 9))
def test_flat_p_norm_equals_subset_enumeration(v, p):
    if not any(v):
        return
    _, wit = flat_p_norm(as_array(v, True), p)
    assert wit.power == subset_flat_p(v, p)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 16), min_size=1, max_size=40), st.integers(1, 3))
def test_flat_sandwich_smooth_vectors(v, k):
    hi = 2 ** k
    v = [min(x, hi) for x in v]
    p = 1 if k == 1 else int(np.ceil(10 * np.log2(k) / 0.1))
    rep = flat_sandwich_audit(as_array(v, True), p, k, Fraction(1, 10))
    assert rep.status in (PASS, UNMET)
    assert rep.values["upper_holds"]


def test_flat_sandwich_constant_and_indicator():
    rep = flat_sandwich_audit(as_array([5] * 6, True), 40, 1, Fraction(1, 10))
    assert rep.status == PASS
    assert rep.values["lp_norm"] == pytest.approx(rep.values["flat_norm"])
    rep = flat_sandwich_audit(as_array([1, 0, 1, 0], True), 40, 1, Fraction(1, 10))
    assert rep.values["lp_norm"] == pytest.approx(rep.values["flat_norm"])


def test_grid_norm_examples():
    J = as_array(np.ones((3, 4), int), True)
    for l, k in [(1, 1), (2, 2), (2, 3), (3, 2)]:
        assert grid_norm_power(J, l, k) == 1
    dJ = J * Fraction(1, 3)
    assert grid_norm_power(dJ, 2, 2) == Fraction(1, 81)
    assert grid_norm(dJ, 3, 2) == pytest.approx(1 / 3)
    I2 = as_array(np.eye(2, dtype=int), True)
    assert grid_norm_power(I2, 2, 2) == Fraction(1, 8)
    assert grid_norm(I2, 2, 2) == pytest.approx(8 ** -0.25)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=6, max_size=6), st.integers(1, 3), st.integers(1, 3))
def test_grid_norm_routes_agree(v, l, k):
    M = as_array(np.array(v).reshape(2, 3), True)
    assert grid_norm_power(M, l, k) == grid_norm_direct_power(M, l, k)


def test_grid_norm_signed_gram():
    M = as_array([[1, -1], [-1, 2]], True)
    assert grid_norm_power(M, 2, 2, signed=True) == grid_norm_direct_power(M, 2, 2)
    with pytest.raises(DomainError):
        grid_norm_power(M, 2, 2)


def test_u11_is_mean_and_monotone_in_k():
    rng = np.random.default_rng(3)
    M = as_array(rng.integers(0, 5, (4, 5)), True)
    assert grid_norm_power(M, 1, 1) == M.sum() / 20
    vals = [grid_norm(M, 2, k) for k in range(1, 5)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_operator_norm_examples():
    J = np.ones((4, 3))
    res = operator_norm(J, 3, 3)
    assert res.value == pytest.approx(1)
    u = np.array([1.0, 2.0, 0.5])
    v = np.array([3.0, 1.0, 1.0, 2.0])
    l, r = 3.0, 4.0
    expected = np.mean(u ** l) ** (1 / l) * np.mean(v ** r) ** (1 / r)
    res = operator_norm(np.outer(u, v), l, r, restarts=4)
    assert res.value == pytest.approx(expected, rel=1e-6)
    f, g = map(np.array, res.witness.data)
    assert operator_value(np.outer(u, v), f, g, l, r) == pytest.approx(res.value, rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_operator_dominates_flat(seed):
    rng = np.random.default_rng(seed)
    A = rng.random((4, 4))
    flat, _ = flat_operator_norm(A, 3, 2)
    assert flat == pytest.approx(subset_flat_op(A, 3, 2), rel=1e-12)
    assert operator_norm(A, 3, 2, seed=seed).value >= flat - 1e-12


def test_flat_operator_examples():
    val, wit = flat_operator_norm(as_array(np.ones((3, 4), int), True), 2, 2)
    assert val == pytest.approx(1) and wit.data == ((0, 1, 2), (0, 1, 2, 3))
    B = np.zeros((6, 6), int)
    B[:2, 1:4] = 1
    val, wit = flat_operator_norm(as_array(B, True), 2, 3)
    assert val == pytest.approx(subset_flat_op(B.astype(float), 2, 3))
    assert wit.data == ((0, 1), (1, 2, 3))


@pytest.mark.parametrize("seed", range(3))
def test_flat_operator_random_5x5(seed):
    rng = np.random.default_rng(10 + seed)
    M = rng.integers(0, 6, (5, 5))
    val, wit = flat_operator_norm(as_array(M, True), 3, 3)
    assert val == pytest.approx(subset_flat_op(M.astype(float), 3, 3), rel=1e-12)
    assert wit.power is not None


def test_matrix_sandwich_audit():
    dJ = as_array(np.full((4, 4), 1), True) / 3
    rep = matrix_sandwich_audit(dJ, 40, 40, 1, Fraction(1, 2))
    assert rep.values["flat"] == pytest.approx(1 / 3)
    assert rep.values["operator_lower_bound"] == pytest.approx(1 / 3)
    rng = np.random.default_rng(5)
    M = rng.integers(0, 2, (6, 6))
    M[0, 0] = 1
    rep = matrix_sandwich_audit(as_array(M, True), 60, 60, 2, Fraction(1, 2))
    assert rep.values["first_inequality"]
    assert rep.status != FAIL
    spike = np.zeros((6, 6), int)
    spike[0, 0] = 1
    rep = matrix_sandwich_audit(as_array(spike, True), 60, 60, 2, Fraction(1, 2))
    assert rep.status == UNMET and not rep.hypotheses["smooth"]


def test_direct_oracle_small_case():
    M = as_array([[1, 0], [1, 1]], True)
    total = Fraction(0)
    for x1, x2, y1, y2 in product(range(2), repeat=4):
        total += M[x1, y1] * M[x1, y2] * M[x2, y1] * M[x2, y2]
    assert grid_norm_power(M, 2, 2) == total / 16
