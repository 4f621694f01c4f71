from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlab.core import FAIL, PASS, UNMET, DomainError, Grid2, as_array
from gridlab.spread import (
    MomentProfile,
    SpreadParams,
    decoupling_audit,
    density_increment,
    gram_moment_profile,
    grid_bound_audit,
    is_spread,
    matrix_product,
    matrix_shift_audit,
    product_theorem_audit,
    row_average,
    spectral_positivity_audit,
)

EPS = Fraction(1, 10)


def exact(m):
    return as_array(np.asarray(m), True)


def quarter_block(n=8, delta=Fraction(1, 100)):
    M = np.full((n, n), delta, dtype=object)
    M[: n // 2, : n // 2] = Fraction(1)
    return M


def quarter_ints(shape):
    n = shape[0] * shape[1]
    return st.lists(st.integers(0, 4), min_size=n, max_size=n).map(
        lambda v: exact(np.array(v).reshape(shape)) / 4
    )


def test_spread_params_validation():
    SpreadParams(1, 0.5)
    with pytest.raises(DomainError):
        SpreadParams(0, EPS)
    with pytest.raises(DomainError):
        SpreadParams(2, 1)


def test_is_spread_examples():
    params = SpreadParams(2, EPS)
    assert is_spread(exact(np.ones((5, 4), int)), params) == (True, None)
    assert is_spread(exact(np.ones((5, 4), int)) / 7, params)[0]
    ok, wit = is_spread(quarter_block(), params)
    assert not ok
    assert wit.data == ((0, 1, 2, 3), (0, 1, 2, 3))


def test_density_increment_examples():
    params = SpreadParams(2, EPS)
    (rows, cols), trace = density_increment(exact(np.ones((4, 4), int)), params)
    assert rows == cols == (0, 1, 2, 3) and trace.steps == [] and trace.final_spread
    (rows, cols), trace = density_increment(quarter_block(), params)
    assert rows == cols == (0, 1, 2, 3)
    assert len(trace.steps) == 1 and trace.final_spread
    _, trace = density_increment(quarter_block(), params, size_floor=Fraction(1, 2))
    assert trace.floor_hit and not trace.final_spread


@pytest.mark.parametrize("seed", range(4))
def test_density_increment_random(seed):
    rng = np.random.default_rng(seed)
    M = exact(rng.integers(1, 5, (6, 6)))
    params = SpreadParams(2, Fraction(1, 20))
    (rows, cols), trace = density_increment(M, params)
    dens = [s.density_before for s in trace.steps] + [trace.steps[-1].density_after] if trace.steps else []
    assert all(a < b for a, b in zip(dens, dens[1:]))
    for s in trace.steps:
        assert s.density_after > (1 + params.eps) * s.density_before
    assert trace.final_spread
    assert is_spread(M[np.ix_(rows, cols)], params)[0]


def test_grid_bound_examples():
    dJ = exact(np.ones((4, 4), int)) / 2
    rep = grid_bound_audit(dJ, 100, 1, Fraction(1, 5))
    assert rep.status == PASS and rep.values["ratio"] == pytest.approx(1)
    planted = np.zeros((8, 8), int)
    planted[:4, :4] = 1
    rep = grid_bound_audit(exact(planted), 100, 2, Fraction(1, 5))
    assert rep.status == UNMET and not rep.hypotheses["spread"]


def test_row_average_examples():
    u, v = np.array([1, 2, 3]), np.array([2, 4])
    R = row_average(exact(np.outer(u, v)))
    assert all(R[i, j] == u[i] * 3 for i in range(3) for j in range(2))
    g = Grid2.of([[1, 2], [3, 3]], exact=True)
    assert isinstance(row_average(g), Grid2)


@given(quarter_ints((3, 5)))
def test_row_average_idempotent(f):
    R = row_average(f)
    assert (row_average(R) == R).all()
    for i in range(3):
        assert R[i, 0] == sum(f[i]) / 5


@given(quarter_ints((3, 4)), quarter_ints((2, 4)))
def test_matrix_product_matches_loops(f, g):
    P = matrix_product(f, g)
    for x in range(3):
        for z in range(2):
            assert P[x, z] == sum(f[x, y] * g[z, y] for y in range(4)) / 4


def test_matrix_product_examples():
    J = exact(np.ones((3, 3), int))
    assert (matrix_product(J, J) == J).all()
    assert (matrix_product(J, exact(np.zeros((2, 3), int))) == 0).all()
    with pytest.raises(DomainError):
        matrix_product(J, exact(np.ones((2, 2), int)))


def test_decoupling_constant_rows():
    rng = np.random.default_rng(0)
    flat_rows = exact(np.repeat(rng.integers(0, 4, (4, 1)), 5, axis=1))
    other = exact(rng.integers(0, 4, (3, 5)))
    for f, g in [(flat_rows, other), (other[:, :5], flat_rows)]:
        rep = decoupling_audit(f, g, 2)
        assert rep.status == PASS and rep.values["lhs"] == 0


@settings(max_examples=40, deadline=None)
@given(quarter_ints((3, 4)), quarter_ints((4, 4)), st.sampled_from([1, 2, 3, 4]))
def test_decoupling_holds(f, g, k):
    assert decoupling_audit(f, g, k).status == PASS


def test_decoupling_fault_injection_detected():
    f = exact([[1, 0], [0, 1]])
    assert decoupling_audit(f, f, 2).status == PASS
    assert decoupling_audit(f, f, 2, rhs_scale=Fraction(1, 2)).status == FAIL


def test_spectral_positivity_examples():
    e = Fraction(1, 10)
    rep = spectral_positivity_audit(MomentProfile.constant(2 * e), 2, e, 20)
    assert rep.status == PASS
    assert rep.values["lhs"] == (1 + 2 * e) ** 20
    rep = spectral_positivity_audit(MomentProfile.constant(Fraction(0)), 2, e, 20)
    assert rep.status == UNMET and not rep.hypotheses["kth_moment_large"]
    with pytest.raises(DomainError):
        MomentProfile(((Fraction(1), Fraction(1, 2)),))


@pytest.mark.parametrize("seed", range(5))
def test_spectral_positivity_gram_profiles(seed):
    rng = np.random.default_rng(seed)
    A = gram_moment_profile(exact(rng.integers(0, 5, (4, 4))))
    assert A.moment(1) >= 0 and A.moment(2) >= 0
    e = Fraction(1, 10)
    rep = spectral_positivity_audit(A, 2, e, 20)
    assert rep.status in (PASS, UNMET)


def test_gram_profile_first_moment_is_centered_norm():
    f = exact([[1, 0, 1], [0, 0, 1]])
    A = gram_moment_profile(f)
    assert sum(p for _, p in A.support) == 1
    assert A.moment(1) >= 0


def test_matrix_shift_vacuous_cases():
    J = exact(np.ones((4, 4), int))
    for M in (J, J / 3):
        rep = matrix_shift_audit(M, 2, Fraction(1, 4), 16)
        assert rep.values["antecedent"] is False
        assert rep.status == PASS


@pytest.mark.parametrize("seed", range(4))
def test_matrix_shift_random(seed):
    rng = np.random.default_rng(seed)
    f = exact(rng.integers(1, 5, (4, 4))) / 4
    rep = matrix_shift_audit(f, 2, Fraction(1, 4), 16)
    assert rep.status != FAIL
    if rep.values["strict_implication"]:
        assert rep.values["slack_implication"]


def test_product_theorem_constant_pairs():
    J = exact(np.ones((4, 4), int))
    for M in (J, J / 2):
        rep = product_theorem_audit(M, M, 2, Fraction(1, 10))
        assert rep.values["deviation"] == 0
        assert rep.status in (PASS, UNMET)
    assert product_theorem_audit(J, J, 2, Fraction(1, 10)).status == PASS


def test_product_theorem_random_pair():
    rng = np.random.default_rng(7)
    f = exact(rng.integers(9, 11, (8, 8))) / 10
    g = exact(rng.integers(9, 11, (8, 8))) / 10
    rep = product_theorem_audit(f, g, 3, Fraction(1, 10))
    assert rep.status != FAIL
    assert rep.values["ratio"] >= 0
