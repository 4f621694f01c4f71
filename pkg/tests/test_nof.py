import math

import numpy as np
import pytest

from gridlab.core import DimensionError
from gridlab.evasive import build_D
from gridlab.nof import (
    acceptance_rate,
    cover_number_exact,
    enumerate_maximal_cis,
    max_monochromatic_ci,
    randomized_protocol,
    report_json,
    separation_report,
)
from oracles import brute_cover_number, every_ci_pointset


def members(q, k):
    return [tuple(map(int, w)) for w in np.argwhere(build_D(q, k).bits)]


def test_protocol_completeness_and_cost():
    t = randomized_protocol(2, 2, (0, 0, 0), r=10, seed=1)
    assert t.accepted and t.total_bits == 21
    for w in members(2, 1):
        assert all(randomized_protocol(2, 1, w, 10, seed=s).accepted for s in range(20))


def test_protocol_accepts_vector_instances():
    t = randomized_protocol(3, 2, ((1, 2), (0, 1), (2, 2)), r=4, seed=0)
    assert t.bits_sent == {"P_x": 4, "P_y": 1, "P_z": 4}
    with pytest.raises(DimensionError):
        randomized_protocol(3, 2, ((1, 2, 0), (0, 1), (2, 2)), r=4)


def test_bits_independent_of_instance_size():
    costs = {randomized_protocol(q, k, (0, 0, 0), r=7).total_bits for q, k in [(2, 1), (2, 3), (3, 2), (5, 2)]}
    assert costs == {15}


def test_soundness_error():
    w = (0, 1, 1)  # <x,y> = 0, <y,z> = 1 over F_2^2
    assert not build_D(2, 2).bits[w]
    trials = 4000
    rate, _ = acceptance_rate(2, 2, w, 3, trials, seed=5)
    pr = 2.0 ** -3
    assert abs(rate - pr) <= 4 * math.sqrt(pr * (1 - pr) / trials)


def test_cover_number_examples():
    full = np.ones((2, 2, 2), bool)
    res = cover_number_exact(full)
    assert res.exact == 1 and res.max_ci_size == 8
    assert cover_number_exact(np.zeros((2, 2, 2), bool)).exact == 0
    res = cover_number_exact(build_D(2, 1))
    assert res.method == "bruteforce"
    assert res.exact == brute_cover_number(build_D(2, 1).bits)
    assert res.lower_bound <= res.exact <= res.upper_bound
    union = np.zeros((2, 2, 2), bool)
    for ci in res.cover:
        union |= ci.to_grid3().bits
    assert (union == build_D(2, 1).bits).all()


@pytest.mark.parametrize("seed", range(3))
def test_cover_number_random_sets(seed):
    rng = np.random.default_rng(seed)
    bits = rng.random((2, 2, 2)) < 0.6
    assert cover_number_exact(bits).exact == brute_cover_number(bits)


def test_maximal_cis_are_inside_and_maximal():
    bits = build_D(2, 1).bits
    found = enumerate_maximal_cis(bits)
    pts = np.argwhere(bits)
    inside = set()
    for m in every_ci_pointset(bits.shape):
        F = ((m >> np.arange(8)) & 1).astype(bool).reshape(2, 2, 2)
        if F.any() and not (F & ~bits).any():
            inside.add(sum(1 << i for i, w in enumerate(pts) if F[tuple(w)]))
    maximal = {m for m in inside if not any(m != o and m & o == m for o in inside)}
    assert {m for m, _ in found} == maximal


def test_max_monochromatic_ci():
    ci, size, _ = max_monochromatic_ci(np.ones((3, 2, 2), bool), restarts=2)
    assert size == 12
    D = build_D(2, 1)
    best = max(bin(m).count("1") for m, _ in enumerate_maximal_cis(D))
    ci, size, history = max_monochromatic_ci(D, restarts=10, seed=3)
    assert size == best
    assert not (ci.to_grid3().bits & ~D.bits).any()
    assert history == sorted(history)


def test_cover_number_is_deterministic():
    a = cover_number_exact(build_D(2, 1))
    b = cover_number_exact(build_D(2, 1))
    assert a.to_dict() == b.to_dict()


def test_separation_report_deterministic():
    a = report_json(separation_report(2, 1, r=4, seed=2, trials=200))
    b = report_json(separation_report(2, 1, r=4, seed=2, trials=200))
    assert a == b
    rep = separation_report(2, 1, r=4, seed=2, trials=200)
    assert rep["protocol"]["bits_sent"] == 9 and rep["protocol"]["complete"]
    assert rep["cover_number"]["method"] == "bruteforce"
