import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlab import cover
from gridlab.core import (
    CylinderIntersection,
    DegenerateInputError,
    DensityFunction,
    DomainError,
    Grid3Indicator,
    SliceFunction,
    SubCube,
    as_array,
)
from gridlab.cover import (
    as_slice,
    build_faces,
    largeness_certificate,
    pricing_oracle,
    removal_lemma,
    round_cover,
    slice_weight,
    solve_dual_packing,
    solve_fractional_cover,
    subcube_maximize,
    subcube_phi,
    triple_product_mean,
    truncate_and_condition,
)
from oracles import every_subcube, min_reduced_cost

SHAPE4 = (4, 4, 4)


def single_point(shape=SHAPE4, w=(1, 2, 3)):
    F = np.zeros(shape, bool)
    F[w] = True
    return F


def test_slice_weight():
    assert slice_weight(SliceFunction.full(SHAPE4, "XY|Z")) == 1
    assert slice_weight(SliceFunction("XZ|Y", {(0, 0)}, {2}, SHAPE4)) == Fraction(1, 64)
    rng = np.random.default_rng(0)
    for _ in range(10):
        pairs = {(int(a), int(b)) for a, b in rng.integers(0, 4, (5, 2))}
        points = set(rng.integers(0, 4, 2).tolist())
        s = SliceFunction("YZ|X", pairs, points, SHAPE4)
        assert slice_weight(s) == Fraction(int(s.indicator().sum()), 64)


def test_pricing_examples():
    shape = (3, 3, 3)
    _, rc = pricing_oracle(as_array(np.ones(shape, int), True), Fraction(1, 27))
    assert rc == 0
    s, rc = pricing_oracle(as_array(np.zeros(shape, int), True), Fraction(1, 9))
    assert rc == Fraction(1, 9) and s.density() == Fraction(1, 9)
    y = np.zeros(shape, int)
    y[1, 1, 1] = 100
    s, rc = pricing_oracle(as_array(y, True), Fraction(1, 27))
    assert rc < 0 and s(1, 1, 1) and s.size() == 1
    assert rc == min_reduced_cost(y, Fraction(1, 27))
    with pytest.raises(DomainError):
        pricing_oracle(as_array(np.zeros(shape, int), True), Fraction(2))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=27, max_size=27), st.sampled_from([1, 3, 9, 27]))
def test_pricing_matches_exhaustive(vals, denom):
    y = np.array(vals).reshape(3, 3, 3)
    floor = Fraction(1, denom)
    s, rc = pricing_oracle(as_array(y, True), floor)
    assert rc == min_reduced_cost(y, floor)
    assert s.density() >= floor
    assert rc == s.density() - Fraction(int(y[s.indicator()].sum()), 27)


def test_fractional_cover_examples():
    fc = solve_fractional_cover(np.ones(SHAPE4, bool), Fraction(1, 64))
    assert fc.value == 1 and fc.converged
    fc = solve_fractional_cover(np.zeros(SHAPE4, bool), Fraction(1, 64))
    assert fc.value == 0 and fc.slices == []
    fc = solve_fractional_cover(single_point(), Fraction(1, 64))
    assert fc.value == Fraction(1, 64)
    fc = solve_fractional_cover(single_point(), Fraction(1, 4))
    assert fc.value == Fraction(1, 4)


def assert_optimal(F, floor, fc):
    bits = np.asarray(F, bool)
    cov = fc.coverage(bits.shape)
    assert all(v >= 1 for v in cov[bits])
    assert all(c > 0 for c in fc.coeffs)
    assert all(s.density() >= floor for s in fc.slices)
    assert fc.value == sum(c * s.density() for s, c in zip(fc.slices, fc.coeffs))
    y = fc.duals
    assert all(v >= 0 for v in y.reshape(-1))
    assert all(v == 0 for v in y[~bits])
    assert min_reduced_cost(y, floor) >= 0
    assert fc.value == sum(y.reshape(-1), Fraction(0)) / bits.size


@pytest.mark.parametrize("seed", range(4))
def test_fractional_cover_certified_by_duality(seed):
    rng = np.random.default_rng(seed)
    F = rng.random(SHAPE4) < rng.uniform(0.1, 0.6)
    floor = Fraction(1, 2 ** int(rng.integers(2, 7)))
    fc = solve_fractional_cover(F, floor)
    assert fc.converged and fc.exact
    assert_optimal(F, floor, fc)


def test_float_mode_close_to_exact():
    rng = np.random.default_rng(9)
    F = rng.random((3, 3, 3)) < 0.4
    ex = solve_fractional_cover(F, Fraction(1, 9))
    fl = solve_fractional_cover(F, Fraction(1, 9), exact=False)
    assert fl.value == pytest.approx(float(ex.value), abs=1e-6)


def test_dual_packing():
    dp = solve_dual_packing(np.ones(SHAPE4, bool), Fraction(1, 64))
    assert dp.objective == 1
    dp = solve_dual_packing(single_point(), Fraction(1, 64))
    assert dp.objective == Fraction(1, 64)
    # the singleton slice is tight: E[p s] = w(s)
    assert dp.p.data[1, 2, 3] / 64 == Fraction(1, 64)
    rng = np.random.default_rng(4)
    F = rng.random(SHAPE4) < 0.3
    fc = solve_fractional_cover(F, Fraction(1, 16))
    assert solve_dual_packing(F, Fraction(1, 16), cover=fc).objective == fc.value


def test_round_cover_trivial_cases():
    full = np.ones(SHAPE4, bool)
    fc = solve_fractional_cover(full, Fraction(1, 64))
    ic = round_cover(fc, full, seed=1)
    assert ic.valid and len(ic.slices) == 1 and ic.attempts == 1
    assert ic.measure == 1
    empty = round_cover(solve_fractional_cover(np.zeros(SHAPE4, bool), Fraction(1, 4)), np.zeros(SHAPE4, bool))
    assert empty.valid and empty.slices == []


def test_round_cover_rejects_bad_fail_prob():
    fc = solve_fractional_cover(single_point(), Fraction(1, 64))
    with pytest.raises(DomainError):
        round_cover(fc, single_point(), fail_prob=1)


def test_round_cover_monte_carlo():
    rng = np.random.default_rng(12)
    F = rng.random(SHAPE4) < 0.3
    fc = solve_fractional_cover(F, Fraction(1, 64))
    bound = 4 * math.log(64) * float(fc.value)
    good = 0
    for seed in range(50):
        ic = round_cover(fc, F, seed=seed, max_retries=1)
        good += ic.valid and float(ic.measure) <= bound
        assert ic.raw_measure >= ic.measure
    assert good >= 45


def test_removal_lemma_examples():
    empty = CylinderIntersection(np.zeros((3, 3), bool), np.ones((3, 3), bool), np.ones((3, 3), bool))
    ic, rep = removal_lemma(empty, 1)
    assert ic.slices == [] and rep.cover_density == 0
    slab = np.zeros((4, 4), bool)
    slab[0, :] = True
    ci = CylinderIntersection(slab, np.ones((4, 4), bool), np.ones((4, 4), bool))
    ic, rep = removal_lemma(ci, 2)
    assert ic.valid and rep.cover_density == ci.density() == Fraction(1, 4)
    assert rep.hypothesis_met


def test_removal_lemma_random_sparse_ci():
    rng = np.random.default_rng(2)
    ci = CylinderIntersection(rng.random((6, 6)) < 0.3, rng.random((6, 6)) < 0.3, rng.random((6, 6)) < 0.5)
    ic, rep = removal_lemma(ci, 2, seed=3)
    assert ic.valid
    assert rep.cover_density >= ci.density()


def test_subcube_maximize_examples():
    p = DensityFunction.uniform((3, 3, 3))
    cube, phi, exact = subcube_maximize(p, 2)
    assert exact and cube.size() == 27 and phi == pytest.approx(1)
    block = np.zeros((3, 3, 3), bool)
    block[np.ix_([0, 2], [1], [0, 1])] = True
    p = DensityFunction.uniform_on(Grid3Indicator(block))
    t = Fraction(3)
    cube, phi, _ = subcube_maximize(p, t, Fraction(1, 27))
    assert cube.axes() == ((0, 2), (1,), (0, 1))
    assert phi == pytest.approx((4 / 27) ** (1 / 3 - 1))


@pytest.mark.parametrize("seed", range(3))
def test_subcube_maximize_against_enumeration(seed, monkeypatch):
    rng = np.random.default_rng(seed)
    p = DensityFunction.from_weights(rng.integers(0, 5, (3, 3, 3)) + (rng.random((3, 3, 3)) < 0.2) * 20)
    floor = Fraction(1, 9)
    best = max(subcube_phi(p, SubCube(*c), 2) for c in every_subcube((3, 3, 3))
               if len(c[0]) * len(c[1]) * len(c[2]) >= 3)
    _, phi, exact = subcube_maximize(p, 2, floor)
    assert exact and phi == pytest.approx(best, rel=1e-12)

    monkeypatch.setattr(cover, "MAX_SUBCUBE_ENUM", 1)
    _, heuristic, exact = subcube_maximize(p, 2, floor)
    assert not exact
    assert 1 - 1e-12 <= heuristic <= best + 1e-12


def test_build_faces():
    f, g, h = build_faces(DensityFunction.uniform((2, 3, 4)), SubCube.full((2, 3, 4)))
    for face in (f, g, h):
        assert all(v == 1 for v in face.data.reshape(-1))
    p = DensityFunction.uniform_on(Grid3Indicator(single_point((2, 2, 2), (0, 1, 1))))
    f, g, h = build_faces(p, SubCube.full((2, 2, 2)))
    assert f.data[0, 1] == 4 and g.data[0, 1] == 4 and h.data[1, 1] == 4
    assert f.mean() == g.mean() == h.mean() == 1
    with pytest.raises(DegenerateInputError):
        build_faces(p, SubCube((1,), (0, 1), (0, 1)))


def test_truncation_caps_spike():
    J = as_array(np.ones((4, 4), int), True)
    ft, gt, ht, removed, pruned = truncate_and_condition(J, J, J, 2)
    assert removed == 0 and pruned["x"] == [] and all(v == 1 for v in ft.data.reshape(-1))
    spike = as_array(np.ones((4, 4), int), True)
    spike[0, 0] = Fraction(10)
    ft, _, _, removed, pruned = truncate_and_condition(spike, J, J, 2)
    assert pruned["cap_mass"] == Fraction(10 - 4, 16)
    assert max(ft.data.reshape(-1)) <= 4 / ft.data.mean() * 4


def test_triple_product_mean_matches_loops():
    rng = np.random.default_rng(1)
    f, g, h = (as_array(rng.integers(0, 3, s), True) for s in [(2, 3), (2, 4), (3, 4)])
    direct = sum(f[x, y] * g[x, z] * h[y, z] for x in range(2) for y in range(3) for z in range(4)) / 24
    assert triple_product_mean(f, g, h) == direct


def test_certificate_on_full_cube():
    n = 3
    cert = largeness_certificate(DensityFunction.uniform((n, n, n)), np.ones((n, n, n), bool), 2, 4)
    assert cert.true_density == 1 and cert.valid
    assert cert.bound >= Fraction(1, 8 * 2 ** 6)


@pytest.mark.parametrize("seed", range(3))
def test_certificate_bound_below_density(seed):
    rng = np.random.default_rng(seed)
    ci = CylinderIntersection(rng.random((4, 4)) < 0.8, rng.random((4, 4)) < 0.8, rng.random((4, 4)) < 0.8)
    if not ci.to_grid3().count():
        return
    p = DensityFunction.uniform_on(ci.to_grid3())
    for t in (1, 2):
        cert = largeness_certificate(p, ci, t, 4, check_evasive=False)
        assert cert.bound <= ci.density()
        assert cert.report.status == "pass"


def test_certificate_rejects_mass_off_F():
    F = single_point((2, 2, 2), (0, 0, 0))
    with pytest.raises(DomainError):
        largeness_certificate(DensityFunction.uniform((2, 2, 2)), F, 1, 1)


def test_as_slice():
    s = SliceFunction("XZ|Y", {(0, 1), (2, 2)}, {1, 3}, SHAPE4)
    back = as_slice(s.indicator())
    assert back is not None and (back.indicator() == s.indicator()).all()
    F = single_point()
    F[0, 0, 0] = True
    assert as_slice(F) is None
    assert as_slice(np.zeros(SHAPE4, bool)) is None
