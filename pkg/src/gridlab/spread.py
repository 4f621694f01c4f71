"""Spread matrices, density increment, row averaging and the product audits.

All inequality audits compare powers of exact rationals where possible, so no
root of a rational ever has to be taken.  Grid norms of signed matrices such as
``f - R_f`` go through the Gram route and only need k-th powers of inner
products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    DEFAULT_TOL,
    DomainError,
    Grid2,
    array_mean,
    as_array,
    decide,
    decimal_fraction,
    is_exact_array,
)
from .norms import (
    NormWitness,
    _flat_exponent,
    flat_operator_norm,
    grid_norm_power,
)


@dataclass(frozen=True)
class SpreadParams:
    t: Fraction | float
    eps: Fraction | float

    def __post_init__(self):
        t = self.t if isinstance(self.t, Fraction) else decimal_fraction(self.t)
        e = self.eps if isinstance(self.eps, Fraction) else decimal_fraction(self.eps)
        if t < 1:
            raise DomainError(f"spread parameter t must be >= 1, got {t}")
        if not 0 < e < 1:
            raise DomainError(f"spread parameter eps must lie in (0, 1), got {e}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "eps", e)


@dataclass(frozen=True)
class MomentProfile:
    """Finite random variable as (value, probability) pairs."""

    support: tuple

    def __post_init__(self):
        sup = tuple((v, p) for v, p in self.support)
        total = sum((p for _, p in sup), Fraction(0) if all(isinstance(p, Fraction) for _, p in sup) else 0.0)
        if isinstance(total, Fraction) and total != 1:
            raise DomainError(f"probabilities sum to {total}, not 1")
        if not isinstance(total, Fraction) and abs(total - 1) > 1e-9:
            raise DomainError(f"probabilities sum to {total}, not 1")
        if any(p < 0 for _, p in sup):
            raise DomainError("negative probability")
        object.__setattr__(self, "support", sup)

    @classmethod
    def constant(cls, value) -> "MomentProfile":
        return cls(((value, Fraction(1)),))

    def moment(self, t: int):
        """E[A**t]."""
        return sum((p * v ** t for v, p in self.support), Fraction(0) if self.exact else 0.0)

    def abs_moment_shifted(self, p):
        """E[|1 + A| ** p]."""
        if self.exact and float(p).is_integer():
            return sum((q * abs(1 + v) ** int(p) for v, q in self.support), Fraction(0))
        return float(sum(float(q) * abs(1 + float(v)) ** float(p) for v, q in self.support))

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) and isinstance(p, Fraction) for v, p in self.support)


@dataclass
class IncrementStep:
    rows: tuple
    cols: tuple
    density_before: object
    density_after: object
    size_ratio: Fraction


@dataclass
class IncrementTrace:
    steps: list = field(default_factory=list)
    final_spread: bool = False
    floor_hit: bool = False

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "rows": list(s.rows),
                    "cols": list(s.cols),
                    "density_before": s.density_before,
                    "density_after": s.density_after,
                    "size_ratio": s.size_ratio,
                }
                for s in self.steps
            ],
            "final_spread": self.final_spread,
            "floor_hit": self.floor_hit,
        }


def _fr(x):
    return x if isinstance(x, Fraction) else decimal_fraction(x)


def _pow_cmp_le(lhs_power, base, exponent: int, tol: float = DEFAULT_TOL) -> bool:
    """lhs_power <= base ** exponent, exact when both sides are rational."""
    if isinstance(lhs_power, Fraction) and isinstance(base, Fraction):
        return lhs_power <= base ** exponent
    b = float(base) ** exponent
    return float(lhs_power) <= b + tol * max(1.0, b)


# ---------------------------------------------------------------------------
# spreadness

def is_spread(M, params: SpreadParams) -> tuple[bool, NormWitness | None]:
    """True iff the flat (t, t)-norm is at most (1 + eps) * mean.

    On False the maximizing rectangle is returned as the violation witness.
    """
    arr = as_array(M)
    mean = array_mean(arr)
    if mean == 0:
        raise DomainError("is_spread needs a nonzero matrix")
    val, wit = flat_operator_norm(arr, params.t, params.t)
    if wit.power is not None and is_exact_array(arr):
        E = wit.exponent
        ok = wit.power <= ((1 + params.eps) * mean) ** E
    else:
        ok = val <= (1 + float(params.eps)) * float(mean) * (1 + 1e-12)
    return bool(ok), (None if ok else wit)


def density_increment(M, params: SpreadParams, size_floor=Fraction(0), max_steps: int = 10_000):
    """Restrict to violating rectangles until spread or the size floor.

    Returns ((rows, cols), trace).  Each step raises the density by more
    than a (1 + eps) factor.  A witness smaller than ``size_floor`` (as a
    fraction of the original matrix) is not taken; the trace is flagged.
    """
    arr = as_array(M)
    nx, ny = arr.shape
    if array_mean(arr) == 0:
        raise DomainError("density increment needs a nonzero matrix")
    rows, cols = tuple(range(nx)), tuple(range(ny))
    trace = IncrementTrace()
    for _ in range(max_steps):
        sub = arr[np.ix_(rows, cols)]
        ok, wit = is_spread(sub, params)
        if ok:
            trace.final_spread = True
            break
        S, T = wit.data
        new_rows = tuple(rows[i] for i in S)
        new_cols = tuple(cols[j] for j in T)
        ratio = Fraction(len(new_rows) * len(new_cols), nx * ny)
        if ratio < _fr(size_floor):
            trace.floor_hit = True
            break
        before = array_mean(sub)
        after = array_mean(arr[np.ix_(new_rows, new_cols)])
        trace.steps.append(IncrementStep(new_rows, new_cols, before, after, ratio))
        rows, cols = new_rows, new_cols
    return (rows, cols), trace


def grid_bound_audit(M, k: int, d, eps, C=10):
    """Check ||M||_{U(2,k)} <= (1 + C eps) ||M||_1 for spread, dense M."""
    arr = as_array(M)
    e = _fr(eps)
    mean = array_mean(arr)
    entries = arr.reshape(-1)
    spread_ok = False
    if mean > 0 and k >= 1:
        spread_ok, _ = is_spread(arr, SpreadParams(k, e))
    hyp = {
        "entries_in_unit_interval": bool(all(0 <= x <= 1 for x in entries)),
        "dense": bool(mean >= Fraction(1, 2 ** int(math.ceil(d))) if isinstance(mean, Fraction) else mean >= 2.0 ** -d),
        "k_large": bool(k >= 20 * _fr(d) / e),
        "spread": bool(spread_ok),
    }
    U = grid_norm_power(arr, 2, k)
    base = (1 + _fr(C) * e) * mean if isinstance(mean, Fraction) else (1 + C * float(e)) * mean
    ok = _pow_cmp_le(U, base, 2 * k)
    ratio = float(U) ** (1 / (2 * k)) / float(mean) if mean else math.inf
    values = {"grid_norm": float(U) ** (1 / (2 * k)), "mean": mean, "ratio": ratio,
              "ratio_bound": 1 + float(C) * float(e)}
    return decide("grid_bound", hyp, ok, values)


# ---------------------------------------------------------------------------
# row averaging and products

def row_average(f):
    """(R_f)(x, y) = E_y'[f(x, y')], constant along each row."""
    arr = as_array(f)
    means = [array_mean(row) for row in arr]
    out = np.empty(arr.shape, dtype=arr.dtype)
    for i, m in enumerate(means):
        out[i, :] = m
    return Grid2(out) if isinstance(f, Grid2) else out


def matrix_product(f, g):
    """(f o g)(x, z) = E_y[f(x, y) g(z, y)] for f over XxY and g over ZxY."""
    a, b = as_array(f), as_array(g)
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"shared axis mismatch: {a.shape} vs {b.shape}")
    if is_exact_array(a) != is_exact_array(b):
        a, b = as_array(a, True), as_array(b, True)
    out = a.dot(b.T) / a.shape[1]
    if isinstance(f, Grid2) and isinstance(g, Grid2):
        return Grid2(out)
    return out


def _centered(f) -> np.ndarray:
    arr = as_array(f)
    return arr - as_array(row_average(arr))


def decoupling_audit(f, g, k: int, tol: float = DEFAULT_TOL, rhs_scale=1):
    """Check E[(f o g - R_f o R_g)^k] <= ||f-R_f||_{U(2,k)}^k ||g-R_g||_{U(2,k)}^k.

    For even k the left side is ||f o g - R_f o R_g||_k^k.  The comparison
    squares both sides so it stays rational.  ``rhs_scale`` exists for fault
    injection only.
    """
    a, b = as_array(f), as_array(g)
    if is_exact_array(a) != is_exact_array(b):
        a, b = as_array(a, True), as_array(b, True)
    k = int(k)
    if k < 1:
        raise DomainError("k must be >= 1")
    D = as_array(matrix_product(a, b)) - as_array(matrix_product(row_average(a), row_average(b)))
    flat = D.reshape(-1)
    exact = is_exact_array(D)
    L = array_mean(np.array([x ** k for x in flat], dtype=D.dtype))
    L_abs = array_mean(np.array([abs(x) ** k for x in flat], dtype=D.dtype))
    Uf = grid_norm_power(_centered(a), 2, k, signed=True)
    Ug = grid_norm_power(_centered(b), 2, k, signed=True)
    scale = _fr(rhs_scale) if exact else float(rhs_scale)
    if exact:
        ok = L <= 0 or L * L <= Uf * Ug * scale * scale
    else:
        ok = L <= math.sqrt(max(Uf * Ug, 0.0)) * scale + tol
    R = math.sqrt(float(Uf) * float(Ug)) * float(scale)
    values = {"lhs": L, "lhs_abs": L_abs, "rhs": R, "rhs_squared": Uf * Ug * scale * scale,
              "margin": R - float(L)}
    return decide("decoupling", {"shared_axis": True, "k_positive": True}, bool(ok), values)


# ---------------------------------------------------------------------------
# spectral positivity and the matrix shift

def gram_moment_profile(f) -> MomentProfile:
    """Law of <(f-R_f)(i,.), (f-R_f)(j,.)> for (i, j) uniform in X^2."""
    C = _centered(f)
    nx, ny = C.shape
    G = C.dot(C.T) / ny
    counts: dict = {}
    for v in G.reshape(-1):
        counts[v] = counts.get(v, 0) + 1
    exact = is_exact_array(C)
    n2 = nx * nx
    support = tuple(
        (v, Fraction(c, n2) if exact else c / n2) for v, c in sorted(counts.items())
    )
    return MomentProfile(support)


def spectral_positivity_audit(A: MomentProfile, k: int, eps, p, horizon: int | None = None):
    """Check E[|1+A|^p] >= (1+eps)^p given large even moment and nonnegative moments."""
    e = _fr(eps)
    horizon = int(horizon if horizon is not None else max(int(k), int(math.ceil(float(p)))))
    moments = [A.moment(t) for t in range(1, horizon + 1)]
    mk = A.moment(int(k))
    hyp = {
        "k_even": int(k) % 2 == 0 and int(k) >= 2,
        "eps_range": bool(0 < e < Fraction(1, 4)),
        "kth_moment_large": bool(mk >= (2 * e) ** int(k)) if A.exact else bool(mk >= (2 * float(e)) ** int(k)),
        "moments_nonnegative": bool(all(m >= 0 for m in moments)),
        "p_large": bool(_fr(p) >= int(k) / e),
    }
    lhs = A.abs_moment_shifted(p)
    if isinstance(lhs, Fraction) and float(p).is_integer():
        rhs = (1 + e) ** int(p)
        ok = lhs >= rhs
    else:
        rhs = (1 + float(e)) ** float(p)
        ok = lhs >= rhs * (1 - 1e-12)
    values = {"lhs": lhs, "rhs": rhs, "kth_moment": mk, "min_moment": min(moments) if moments else None}
    return decide("spectral_positivity", hyp, bool(ok), values)


def matrix_shift_audit(f, k: int, eps, p: int):
    """Evaluate: ||f-R_f||_{U(2,k)} >= 6 eps E[f]  =>  ||f||_{U(2,p)} >= (1+eps) E[f].

    The status uses the form with a factor 1/2 of slack,
    ||f||_{U(2,p)}^{2p} >= (1/2) ((1+eps) E[f])^{2p}; the slack-free
    implication and its contrapositive are reported alongside.
    """
    arr = as_array(f)
    e = _fr(eps)
    k, p = int(k), int(p)
    mean = array_mean(arr)
    exact = is_exact_array(arr)
    row_means = [array_mean(r) for r in arr]
    ef = e if exact else float(e)
    hyp = {
        "min_degree": bool(all(m >= (1 - ef) * mean for m in row_means)),
        "p_large": bool(p >= 2 * k / e),
        "eps_range": bool(0 < e < 1),
    }
    dev = grid_norm_power(_centered(arr), 2, k, signed=True)
    full = grid_norm_power(arr, 2, p)
    ante_base = 6 * ef * mean
    concl_base = (1 + ef) * mean
    antecedent = dev >= ante_base ** (2 * k)
    strict = full >= concl_base ** (2 * p)
    slack_form = 2 * full >= concl_base ** (2 * p)
    contra_ante = full <= concl_base ** (2 * p)
    contra_concl = dev <= ante_base ** (2 * k)
    values = {
        "antecedent": bool(antecedent),
        "deviation_grid_norm": float(dev) ** (1 / (2 * k)) if dev > 0 else 0.0,
        "grid_norm_p": float(full) ** (1 / (2 * p)) if full > 0 else 0.0,
        "mean": mean,
        "strict_implication": bool(not antecedent or strict),
        "slack_implication": bool(not antecedent or slack_form),
        "contrapositive": bool(not contra_ante or contra_concl),
    }
    return decide("matrix_shift", hyp, bool(not antecedent or slack_form), values)


def product_theorem_audit(f, g, d: int, eps, C=10):
    """Check ||f o g - R_f o R_g||_d <= C eps^2 ||f||_1 ||g||_1 for spread f, g."""
    a, b = as_array(f), as_array(g)
    if is_exact_array(a) != is_exact_array(b):
        a, b = as_array(a, True), as_array(b, True)
    e = _fr(eps)
    d = int(d)
    exact = is_exact_array(a)
    ef = e if exact else float(e)
    params = SpreadParams(Fraction(100 * d) / e, e)
    mf, mg = array_mean(a), array_mean(b)
    floor = Fraction(1, 2 ** d) if exact else 2.0 ** -d
    hyp = {
        "entries_in_unit_interval": bool(all(0 <= x <= 1 for x in a.reshape(-1)) and all(0 <= x <= 1 for x in b.reshape(-1))),
        "f_spread": bool(mf > 0 and is_spread(a, params)[0]),
        "g_spread": bool(mg > 0 and is_spread(b, params)[0]),
        "row_means": bool(all(array_mean(r) >= 1 - ef for r in a) and all(array_mean(r) >= 1 - ef for r in b)),
        "dense": bool(mf >= floor and mg >= floor),
    }
    D = as_array(matrix_product(a, b)) - as_array(matrix_product(row_average(a), row_average(b)))
    dev_pow = array_mean(np.array([abs(x) ** d for x in D.reshape(-1)], dtype=D.dtype))
    base = _fr(C) * e * e * mf * mg if exact else float(C) * float(e) ** 2 * mf * mg
    ok = _pow_cmp_le(dev_pow, base, d)
    dev = float(dev_pow) ** (1 / d)
    values = {"deviation": dev, "bound": float(base), "ratio": dev / float(base) if base else math.inf,
              "scale": float(ef) ** 2 * float(mf) * float(mg)}
    return decide("product_theorem", hyp, bool(ok), values)
