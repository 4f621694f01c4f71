"""Random instance generators and the sweep behind ``gridlab audit-all``.

Each audit draws its instances from one seeded generator, runs the
corresponding checker, and tallies pass / fail / hypothesis-unmet counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import FAIL, PASS, UNMET, CylinderIntersection, DensityFunction, Grid3Indicator, as_array
from .cover import largeness_certificate, round_cover, solve_dual_packing, solve_fractional_cover
from .evasive import build_D, evasiveness_audit, evasiveness_oracle
from .nof import randomized_protocol
from .norms import flat_sandwich_audit, grid_norm_direct_power, grid_norm_power
from .spread import (
    SpreadParams,
    decoupling_audit,
    grid_bound_audit,
    gram_moment_profile,
    is_spread,
    matrix_shift_audit,
    spectral_positivity_audit,
)


# ---------------------------------------------------------------------------
# generators

def smooth_vector(rng, n: int, k: int) -> np.ndarray:
    """Exact vector with max <= 2^k * mean (entries in [1, 2^k])."""
    hi = 2 ** k
    return as_array(rng.integers(1, hi + 1, size=n), True)


def sandwich_p(k: int, eps=Fraction(1, 10), coeff: int = 10) -> int:
    return max(1, math.ceil(coeff * math.log2(k) / float(eps))) if k > 1 else 1


def quarter_matrix(rng, nx: int, ny: int, top: int = 4) -> np.ndarray:
    """Exact matrix with entries in {0, 1/top, ..., 1}."""
    return as_array(rng.integers(0, top + 1, size=(nx, ny)), True) / top


def dense_spread_matrix(rng, nx: int, ny: int, t: int, eps, lo: int = 7, max_tries: int = 50):
    """Matrix with entries in {lo/10, ..., 1} that is (t, eps)-spread."""
    params = SpreadParams(t, eps)
    for _ in range(max_tries):
        M = as_array(rng.integers(lo, 11, size=(nx, ny)), True) / 10
        if is_spread(M, params)[0]:
            return M
    raise RuntimeError("no spread instance found")


def gram_profile_instance(rng, k: int, eps, max_tries: int = 100):
    """Gram moment profile of a random integer matrix meeting E[A^k] >= (2 eps)^k."""
    for _ in range(max_tries):
        nx, ny = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        f = as_array(rng.integers(0, 5, size=(nx, ny)), True)
        A = gram_moment_profile(f)
        if A.moment(k) >= (2 * eps) ** k:
            return A
    raise RuntimeError("no profile meets the moment hypothesis")


def random_indicator(rng, shape, density: float) -> np.ndarray:
    b = rng.random(shape) < density
    if not b.any():
        b[tuple(int(rng.integers(n)) for n in shape)] = True
    return b


def random_ci(rng, shape, density: float = 0.7) -> CylinderIntersection:
    nx, ny, nz = shape
    while True:
        ci = CylinderIntersection(rng.random((nx, ny)) < density, rng.random((nx, nz)) < density,
                                  rng.random((ny, nz)) < density)
        if ci.to_grid3().count():
            return ci


# ---------------------------------------------------------------------------
# sweep

@dataclass
class AuditRow:
    statement: str
    audit: str
    instances: int = 0
    passed: int = 0
    failed: int = 0
    unmet: int = 0
    detail: str = ""

    @property
    def status(self) -> str:
        if self.failed:
            return FAIL
        if self.passed == 0 and self.unmet:
            return UNMET
        return PASS

    def tally(self, status_or_bool) -> None:
        self.instances += 1
        s = status_or_bool if isinstance(status_or_bool, str) else (PASS if status_or_bool else FAIL)
        if s == PASS:
            self.passed += 1
        elif s == FAIL:
            self.failed += 1
        else:
            self.unmet += 1

    def to_dict(self) -> dict:
        return {"statement": self.statement, "audit": self.audit, "instances": self.instances,
                "pass": self.passed, "fail": self.failed, "unmet": self.unmet, "status": self.status,
                "detail": self.detail}


SCALES = {
    "micro": {"count": 5, "n": 12, "side": 4, "cube": 3, "trials": 500},
    "small": {"count": 20, "n": 32, "side": 6, "cube": 4, "trials": 4000},
}


def run_suite(scale: str = "micro", seed: int = 0, inject_fault: str | None = None) -> list[AuditRow]:
    """Every audit at the given scale; deterministic for a fixed seed."""
    cfg = SCALES[scale]
    rng = np.random.default_rng(seed)
    count, side = cfg["count"], cfg["side"]
    rows = []

    row = AuditRow("flat norm sandwich for smooth vectors", "flat_sandwich")
    for _ in range(count):
        k = int(rng.integers(1, 9))
        v = smooth_vector(rng, int(rng.integers(1, cfg["n"] + 1)), k)
        row.tally(flat_sandwich_audit(v, sandwich_p(k), k, Fraction(1, 10)).status)
    rows.append(row)

    row = AuditRow("grid norm Gram identity", "grid_gram")
    for _ in range(count):
        M = as_array(rng.integers(0, 2, size=(3, 3)), True)
        row.tally(grid_norm_power(M, 2, 2) == grid_norm_direct_power(M, 2, 2))
    rows.append(row)

    row = AuditRow("decoupling inequality", "decoupling")
    scale_rhs = Fraction(1, 2) if inject_fault == "decoupling" else 1
    for _ in range(count):
        ny = int(rng.integers(1, side + 1))
        f = quarter_matrix(rng, int(rng.integers(1, side + 1)), ny)
        g = quarter_matrix(rng, int(rng.integers(1, side + 1)), ny)
        for k in (2, 4):
            row.tally(decoupling_audit(f, g, k, rhs_scale=scale_rhs).status)
    rows.append(row)

    row = AuditRow("grid norm bound for spread matrices", "grid_bound")
    eps = Fraction(1, 5)
    kk = math.ceil(20 * 1 / eps)
    for _ in range(max(2, count // 2)):
        M = dense_spread_matrix(rng, side, side, kk, eps)
        row.tally(grid_bound_audit(M, kk, 1, eps).status)
    rows.append(row)

    row = AuditRow("spectral positivity", "spectral_positivity")
    for _ in range(count):
        k = int(rng.choice([2, 4]))
        e = Fraction(1, 10)
        A = gram_profile_instance(rng, k, e)
        row.tally(spectral_positivity_audit(A, k, e, math.ceil(k / e)).status)
    rows.append(row)

    row = AuditRow("matrix shift", "matrix_shift")
    for _ in range(count):
        f = quarter_matrix(rng, 4, 4)
        if f.sum() == 0:
            continue
        row.tally(matrix_shift_audit(f, 2, Fraction(1, 4), 16).status)
    rows.append(row)

    row = AuditRow("covering LP strong duality", "lp_duality")
    floor = Fraction(1, 2 ** 6)
    covers = []
    for _ in range(max(2, count // 2)):
        n = cfg["cube"]
        F = random_indicator(rng, (n, n, n), float(rng.uniform(0.2, 0.6)))
        fc = solve_fractional_cover(F, floor)
        dp = solve_dual_packing(F, floor, cover=fc)
        row.tally(fc.converged and fc.value == dp.objective)
        covers.append((F, fc))
    rows.append(row)

    row = AuditRow("randomized rounding of the cover", "rounding")
    for F, fc in covers:
        ok = 0
        trials = 10
        for s in range(trials):
            ic = round_cover(fc, F, seed=int(rng.integers(1 << 31)), max_retries=1)
            omega = F.size
            ok += ic.valid and float(ic.measure) <= 4 * math.log(omega) * float(fc.value) + 1e-12
        row.tally(ok >= 0.9 * trials)
    rows.append(row)

    row = AuditRow("largeness certificate lower bound", "largeness_certificate")
    n = cfg["cube"]
    cert = largeness_certificate(DensityFunction.uniform((n, n, n)), np.ones((n, n, n), bool), 2, 4)
    row.tally(cert.valid and cert.bound >= Fraction(1, 8 * 2 ** 6))
    for _ in range(max(2, count // 2)):
        ci = random_ci(rng, (n, n, n))
        p = DensityFunction.uniform_on(ci.to_grid3())
        cert = largeness_certificate(p, ci, 1, 4, check_evasive=False)
        row.tally(cert.valid)
    rows.append(row)

    row = AuditRow("evasive set construction", "evasive")
    row.tally(build_D(2, 1).density() == Fraction(5, 8))
    D = build_D(2, 2)
    row.tally(evasiveness_audit(D, 4).max_ratio == evasiveness_oracle(D, 4))
    rows.append(row)

    row = AuditRow("randomized protocol", "protocol")
    D = build_D(2, 1)
    members = [tuple(map(int, w)) for w in np.argwhere(D.bits)]
    row.tally(all(randomized_protocol(2, 1, w, 10, seed=[seed, s]).accepted for w in members for s in range(10)))
    trials = cfg["trials"]
    hits = sum(randomized_protocol(2, 2, (0, 1, 1), 10, seed=[seed, 1, i]).accepted for i in range(trials))
    pr = 2.0 ** -10
    row.tally(hits / trials <= pr + 3 * math.sqrt(pr * (1 - pr) / trials))
    rows.append(row)
    return rows
