"""Vector and matrix norms with normalized (averaged) semantics.

Flat norms restrict the dual witness to 0/1 vectors.  Because all entries are
nonnegative, the best set of a given size is always a prefix of the entries
sorted in decreasing order, which turns the max over subsets into a scan.

Fractional roots are irrational in general, so exact comparisons are done on
powers ("keys") rather than on the norms themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_TOL,
    DomainError,
    Grid2,
    ResourceError,
    Scalar,
    array_mean,
    as_array,
    decide,
    decimal_fraction,
    integerize,
    is_exact_array,
)

DEFAULT_BIT_BUDGET = 1 << 22
MAX_GRID_LK = 24
EXACT_ENUM_AXIS = 16


@dataclass(frozen=True)
class NormWitness:
    """Maximizer of a norm.

    ``kind`` is "subset" (data = S), "subsetPair" (data = (S, T)) or
    "vectorPair" (data = (f, g)).  ``power`` holds ``value ** exponent``
    exactly when that is rational, else None.
    """

    kind: str
    data: tuple
    value: float
    power: Fraction | None = None
    exponent: int | None = None
    certified: bool = True

    def to_dict(self) -> dict:
        if self.kind == "vectorPair":
            data = [[float(x) for x in self.data[0]], [float(x) for x in self.data[1]]]
        elif self.kind == "subset":
            data = list(self.data)
        else:
            data = [list(self.data[0]), list(self.data[1])]
        out = {"kind": self.kind, "data": data, "value": float(self.value), "certified": self.certified}
        if self.power is not None:
            out["power"] = f"{self.power.numerator}/{self.power.denominator}"
            out["exponent"] = self.exponent
        return out


def _vector(v, exact=None) -> np.ndarray:
    arr = as_array(v, exact).reshape(-1)
    if arr.size == 0:
        raise DomainError("empty vector")
    if any(x < 0 for x in arr):
        raise DomainError("entries must be nonnegative")
    return arr


def _rational(p) -> Fraction | None:
    """p as a Fraction if it is an int/Fraction (or an integral float)."""
    if isinstance(p, (int, np.integer, Fraction)):
        return Fraction(p)
    if isinstance(p, float) and p.is_integer():
        return Fraction(int(p))
    return None


def holder_conjugate(p):
    """p* = p / (p - 1)."""
    if p <= 1:
        raise DomainError(f"Holder conjugate needs p > 1, got {p}")
    if isinstance(p, (int, np.integer, Fraction)):
        p = Fraction(p)
        return p / (p - 1)
    return p / (p - 1)


# ---------------------------------------------------------------------------
# vectors

def lp_power(v, p) -> Scalar:
    """E_x[v_x ** p]; exact when v is exact and p is a nonnegative integer."""
    arr = _vector(v)
    pr = _rational(p)
    if is_exact_array(arr) and pr is not None and pr.denominator == 1:
        e = int(pr)
        total = Fraction(0)
        for x in arr:
            total += x ** e
        return total / arr.size
    f = arr.astype(float)
    return float(np.mean(f ** float(p)))


def lp_norm(v, p) -> float:
    """E_x[v_x ** p] ** (1/p) for nonnegative v and p >= 1."""
    if p < 1:
        raise DomainError("p must be >= 1")
    f = _vector(v).astype(float)
    top = f.max()
    if top == 0:
        return 0.0
    # scale first so large p cannot overflow
    return float(top * np.mean((f / top) ** float(p)) ** (1.0 / float(p)))


def _key(mean, fraction_size, p):
    """Exact (mean * fraction_size**(1/p)) ** a where p = a/b, or None."""
    pr = _rational(p)
    if pr is None or not isinstance(mean, Fraction):
        return None
    a, b = pr.numerator, pr.denominator
    return mean ** a * fraction_size ** b


def flat_p_value(v, S: Sequence[int], p) -> float:
    arr = _vector(v).astype(float)
    S = list(S)
    return float(arr[S].mean() * (len(S) / arr.size) ** (1.0 / float(p)))


def flat_p_norm(v, p) -> tuple[float, NormWitness]:
    """max over nonempty S of mean(v on S) * (|S|/|X|) ** (1/p).

    The zero vector gives value 0 with an empty witness.
    """
    arr = _vector(v)
    n = arr.size
    exact = is_exact_array(arr)
    pr = _rational(p)
    order = sorted(range(n), key=lambda i: (-arr[i], i))
    if arr[order[0]] == 0:
        return 0.0, NormWitness("subset", (), 0.0, Fraction(0) if exact else None, None)
    if exact and pr is not None:
        best_key, best_s, prefix = None, 0, Fraction(0)
        for s in range(1, n + 1):
            prefix += arr[order[s - 1]]
            key = _key(prefix / s, Fraction(s, n), pr)
            if best_key is None or key > best_key:
                best_key, best_s = key, s
        S = tuple(sorted(order[:best_s]))
        value = flat_p_value(arr, S, p)
        return value, NormWitness("subset", S, value, best_key, pr.numerator)
    f = arr.astype(float)[order]
    sizes = np.arange(1, n + 1)
    vals = np.cumsum(f) / sizes * (sizes / n) ** (1.0 / float(p))
    best_s = int(np.argmax(vals)) + 1
    S = tuple(sorted(order[:best_s]))
    return float(vals[best_s - 1]), NormWitness("subset", S, float(vals[best_s - 1]))


def flat_sandwich_audit(v, p, k, eps, log_coeff=10, tol: float = DEFAULT_TOL):
    """Check ||v||_p >= flat_p(v) >= (1 - eps) ||v||_p for a smooth vector.

    Hypotheses: ||v||_inf / ||v||_1 <= 2**k, eps in (0, 1/10],
    p >= log_coeff * log2(k) / eps.
    """
    arr = _vector(v)
    exact = is_exact_array(arr)
    mean = array_mean(arr)
    vmax = max(arr)
    e = decimal_fraction(eps)
    bound = mean * 2 ** Fraction(k) if exact else mean * 2.0 ** k
    hyp = {
        "smooth": bool(mean > 0 and vmax <= bound),
        "eps_range": bool(0 < e <= Fraction(1, 10)),
        "p_large": bool(p >= 1 and float(p) >= log_coeff * math.log2(max(k, 1)) / float(eps)),
    }
    lp = lp_norm(arr, p)
    flat, wit = flat_p_norm(arr, p)
    pr = _rational(p)
    if exact and pr is not None and pr.denominator == 1 and wit.power is not None:
        lp_pow = lp_power(arr, pr)
        upper = lp_pow >= wit.power
        lower = wit.power >= (1 - e) ** int(pr) * lp_pow
        mode = "exact"
    else:
        upper = lp >= flat - tol
        lower = flat >= (1 - float(eps)) * lp - tol
        mode = "float"
    values = {
        "lp_norm": lp,
        "flat_norm": flat,
        "lower_bound": (1 - float(eps)) * lp,
        "upper_holds": bool(upper),
        "lower_holds": bool(lower),
        "witness": wit,
        "comparison": mode,
    }
    return decide("flat_sandwich", hyp, bool(upper and lower), values)


# ---------------------------------------------------------------------------
# grid norms

def _check_bits(arr: np.ndarray, exponent: int, budget: int) -> None:
    if not is_exact_array(arr):
        return
    bits = max(max(abs(x.numerator).bit_length(), x.denominator.bit_length()) for x in arr.reshape(-1))
    if (bits + 1) * exponent > budget:
        raise ResourceError(f"exact grid norm needs ~{(bits + 1) * exponent} bits (budget {budget})")


def _gram_power(arr: np.ndarray, k: int):
    """E_{x,x'} [ <M_x, M_x'>^k ] with <u,v> = E_y[u v]; valid for signed M."""
    nx, ny = arr.shape
    if is_exact_array(arr):
        A, L = integerize(arr)
        G = A.dot(A.T)
        total = 0
        for g in G.reshape(-1):
            total += g ** k
        return Fraction(total, nx * nx * (L * L * ny) ** k)
    G = arr.dot(arr.T) / ny
    return float(np.mean(G ** k))


def _multiset_power(arr: np.ndarray, l: int, k: int):
    """E_{y_1..y_k} (E_x prod_j M(x, y_j)) ** l by multisets of columns."""
    nx, ny = arr.shape
    exact = is_exact_array(arr)
    total = Fraction(0) if exact else 0.0
    kfact = math.factorial(k)
    for ys in combinations_with_replacement(range(ny), k):
        counts = np.bincount(ys, minlength=ny)
        weight = kfact
        for c in counts:
            weight //= math.factorial(int(c))
        col = arr[:, ys[0]].copy()
        for y in ys[1:]:
            col = col * arr[:, y]
        inner = array_mean(col)
        total += weight * inner ** l
    return total / ny ** k


def grid_norm_power(M, l: int, k: int, *, signed: bool = False,
                    bit_budget: int = DEFAULT_BIT_BUDGET, max_lk: int = MAX_GRID_LK):
    """||M||_{U(l,k)} ** (l k); exact for exact input.

    ``signed=True`` allows negative entries; only l = 2 is supported then,
    where the Gram route needs nothing but k-th powers of inner products.
    """
    arr = as_array(M)
    if arr.ndim != 2 or arr.size == 0:
        raise DomainError("grid norm needs a nonempty matrix")
    l, k = int(l), int(k)
    if l < 1 or k < 1:
        raise DomainError("grid norm needs l, k >= 1")
    if not signed and any(x < 0 for x in arr.reshape(-1)):
        raise DomainError("negative entries; pass signed=True (l = 2 only)")
    if signed and l != 2:
        raise DomainError("signed grid norms are only defined here for l = 2")
    _check_bits(arr, 2 * k if l == 2 else l * k, bit_budget)
    if l == 2:
        return _gram_power(arr, k)
    if l * k > max_lk:
        raise ResourceError(f"l*k = {l * k} exceeds the cap {max_lk}")
    if l == 1:
        return array_mean(np.array([array_mean(row) ** k for row in arr], dtype=arr.dtype))
    if k == 1:
        return array_mean(np.array([array_mean(col) ** l for col in arr.T], dtype=arr.dtype))
    return _multiset_power(arr, l, k)


def grid_norm(M, l: int, k: int, **kw) -> float:
    """||M||_{U(l,k)} as a float."""
    pw = grid_norm_power(M, l, k, **kw)
    return float(pw) ** (1.0 / (int(l) * int(k))) if pw > 0 else 0.0


def grid_norm_direct_power(M, l: int, k: int):
    """Direct average over all (x_1..x_l, y_1..y_k) tuples; a test oracle."""
    arr = as_array(M)
    nx, ny = arr.shape
    exact = is_exact_array(arr)
    total = Fraction(0) if exact else 0.0
    from itertools import product

    for xs in product(range(nx), repeat=l):
        for ys in product(range(ny), repeat=k):
            term = Fraction(1) if exact else 1.0
            for x in xs:
                for y in ys:
                    term = term * arr[x, y]
            total += term
    return total / (nx ** l * ny ** k)


# ---------------------------------------------------------------------------
# operator and flat operator norms

def _matrix(M) -> np.ndarray:
    arr = as_array(M)
    if arr.ndim != 2 or arr.size == 0:
        raise DomainError("need a nonempty matrix")
    if any(x < 0 for x in arr.reshape(-1)):
        raise DomainError("matrix entries must be nonnegative")
    return arr


def _pnorm(v: np.ndarray, p: float) -> float:
    top = v.max()
    if top <= 0:
        return 0.0
    return float(top * np.mean((v / top) ** p) ** (1.0 / p))


def operator_value(M, f, g, l, r) -> float:
    """f^T M g / (||f||_{l*} ||g||_{r*}) with normalized products."""
    A = _matrix(M).astype(float)
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    num = float(f @ A @ g) / A.size
    den = _pnorm(f, float(holder_conjugate(float(l)))) * _pnorm(g, float(holder_conjugate(float(r))))
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class OperatorResult:
    value: float
    witness: NormWitness
    converged: bool
    iterations: int
    restarts: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "witness": self.witness.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
            "restarts": self.restarts,
        }


def _alternate(A: np.ndarray, g: np.ndarray, l: float, r: float, tol: float, max_iter: int):
    """Alternating maximization from g; returns (value, f, g, iters, converged)."""
    nx, ny = A.shape
    rs = holder_conjugate(r)
    ls = holder_conjugate(l)
    best = -1.0
    f = np.ones(nx)
    for it in range(1, max_iter + 1):
        gn = _pnorm(g, rs)
        if gn == 0:
            return 0.0, f, g, it, True
        Mg = A @ g / ny
        val = _pnorm(Mg, l) / gn
        top = Mg.max()
        if top <= 0:
            return 0.0, f, g, it, True
        f = (Mg / top) ** (l - 1)
        fn = _pnorm(f, ls)
        Mtf = A.T @ f / nx
        val2 = _pnorm(Mtf, r) / fn
        val = max(val, val2)
        top = Mtf.max()
        if top <= 0:
            return val, f, g, it, True
        g_new = (Mtf / top) ** (r - 1)
        if val - best < tol:
            return max(val, best), f, g, it, True
        best, g = val, g_new
    return best, f, g, max_iter, False


def operator_norm(M, l, r, restarts: int = 8, seed: int = 0, tol: float = DEFAULT_TOL,
                  max_iter: int = 2000, seed_with_flat: bool = True) -> OperatorResult:
    """Certified lower bound on ||M||_{l,r} by alternating maximization.

    Starts: all-ones, ``restarts`` random nonnegative vectors and (by default)
    the column set of the flat (l, r) maximizer, which makes the result
    dominate the flat norm.
    """
    A = _matrix(M).astype(float)
    if l <= 1 or r <= 1:
        raise DomainError("operator norm needs l, r > 1")
    l, r = float(l), float(r)
    nx, ny = A.shape
    starts = [np.ones(ny)]
    if seed_with_flat:
        _, wit = flat_operator_norm(M, l, r, seed=seed)
        T = np.zeros(ny)
        T[list(wit.data[1])] = 1.0
        starts.append(T)
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(rng.random(ny) + 1e-12)
    best = None
    total_iters, all_conv = 0, True
    for g0 in starts:
        val, f, g, iters, conv = _alternate(A, g0, l, r, tol, max_iter)
        total_iters += iters
        all_conv &= conv
        if best is None or val > best[0] + 1e-15:
            best = (val, f, g)
    val, f, g = best
    wit = NormWitness("vectorPair", (tuple(f.tolist()), tuple(g.tolist())), val, certified=False)
    return OperatorResult(float(val), wit, all_conv, total_iters, len(starts))


def flat_operator_value(M, S, T, l, r) -> float:
    A = _matrix(M).astype(float)
    S, T = list(S), list(T)
    nx, ny = A.shape
    mean = A[np.ix_(S, T)].mean()
    return float(mean * (len(S) / nx) ** (1.0 / float(l)) * (len(T) / ny) ** (1.0 / float(r)))


def _flat_exponent(l, r):
    """E with value**E rational, plus per-factor integer exponents."""
    lr, rr = _rational(l), _rational(r)
    if lr is None or rr is None:
        return None
    E = math.lcm(lr.numerator, rr.numerator)
    return E, E * lr.denominator // lr.numerator, E * rr.denominator // rr.numerator


def flat_operator_key(M, S, T, l, r) -> Fraction | None:
    """Exact value**E of the flat objective for (S, T), or None."""
    arr = _matrix(M)
    ex = _flat_exponent(l, r)
    if ex is None or not is_exact_array(arr):
        return None
    E, a, b = ex
    nx, ny = arr.shape
    S, T = list(S), list(T)
    mean = array_mean(arr[np.ix_(S, T)])
    return mean ** E * Fraction(len(S), nx) ** a * Fraction(len(T), ny) ** b


def flat_operator_norm(M, l, r, seed: int = 0, restarts: int = 16,
                       exact_axis: int = EXACT_ENUM_AXIS) -> tuple[float, NormWitness]:
    """max over S, T of mean(M on SxT) * (|S|/|X|)**(1/l) * (|T|/|Y|)**(1/r).

    Exact when the smaller axis has at most ``exact_axis`` elements (all its
    subsets are enumerated, the other side is a sorted prefix); otherwise
    alternating prefix optimization, reported as uncertified.
    """
    arr = _matrix(M)
    nx, ny = arr.shape
    if nx < ny:
        val, wit = flat_operator_norm(arr.T, r, l, seed, restarts, exact_axis)
        S, T = wit.data
        return val, NormWitness("subsetPair", (T, S), val, wit.power, wit.exponent, wit.certified)
    if ny <= exact_axis:
        return _flat_op_exact(arr, l, r)
    return _flat_op_heuristic(arr, l, r, seed, restarts)


def _flat_op_exact(arr: np.ndarray, l, r) -> tuple[float, NormWitness]:
    nx, ny = arr.shape
    exact = is_exact_array(arr)
    A = arr.astype(float)
    masks = np.arange(1, 1 << ny)
    member = ((masks[:, None] >> np.arange(ny)[None, :]) & 1).astype(float)  # (m, ny)
    tsize = member.sum(axis=1)
    R = A @ member.T  # row sums over T, (nx, m)
    Rs = -np.sort(-R, axis=0, kind="stable")
    P = np.cumsum(Rs, axis=0)
    s = np.arange(1, nx + 1)[:, None]
    vals = P / (s * tsize[None, :]) * (s / nx) ** (1.0 / float(l)) * (tsize[None, :] / ny) ** (1.0 / float(r))
    top = float(vals.max())
    ex = _flat_exponent(l, r)
    if not exact or ex is None:
        si, ti = np.unravel_index(int(np.argmax(vals)), vals.shape)
        return _flat_witness(arr, int(si) + 1, int(masks[ti]), l, r, top, None, None)
    # exact re-check of every near-maximal candidate; lowest (T, s) wins ties
    cand = np.argwhere(vals >= top * (1 - 1e-9) - 1e-300)
    E, ea, eb = ex
    best = None
    by_t: dict[int, list[int]] = {}
    for si, ti in cand:
        by_t.setdefault(int(ti), []).append(int(si) + 1)
    for ti in sorted(by_t):
        T = [y for y in range(ny) if (masks[ti] >> y) & 1]
        sums = [sum(arr[x, T], Fraction(0)) for x in range(nx)]
        order = sorted(range(nx), key=lambda x: (-sums[x], x))
        pref = [Fraction(0)]
        for x in order:
            pref.append(pref[-1] + sums[x])
        for sz in sorted(by_t[ti]):
            mean = pref[sz] / (sz * len(T))
            key = mean ** E * Fraction(sz, nx) ** ea * Fraction(len(T), ny) ** eb
            if best is None or key > best[0]:
                best = (key, tuple(sorted(order[:sz])), tuple(T))
    key, S, T = best
    val = flat_operator_value(arr, S, T, l, r)
    return val, NormWitness("subsetPair", (S, T), val, key, E)


def _flat_witness(arr, sz, mask, l, r, val, key, E):
    nx, ny = arr.shape
    T = [y for y in range(ny) if (mask >> y) & 1]
    sums = [array_mean(arr[x, T]) for x in range(nx)]
    order = sorted(range(nx), key=lambda x: (-sums[x], x))
    S = tuple(sorted(order[:sz]))
    val = flat_operator_value(arr, S, T, l, r)
    return val, NormWitness("subsetPair", (S, tuple(T)), val, key, E)


def _best_prefix(A: np.ndarray, cols: list, n_other: int, exp_self: float, exp_other: float):
    """Best prefix of rows of A given fixed column set; returns (value, rows)."""
    nx, ny = A.shape
    sums = A[:, cols].sum(axis=1)
    order = np.argsort(-sums, kind="stable")
    pref = np.cumsum(sums[order])
    s = np.arange(1, nx + 1)
    vals = pref / (s * len(cols)) * (s / nx) ** exp_self * (len(cols) / ny) ** exp_other
    i = int(np.argmax(vals))
    return float(vals[i]), sorted(order[: i + 1].tolist())


def _flat_op_heuristic(arr, l, r, seed, restarts):
    A = arr.astype(float)
    nx, ny = A.shape
    rng = np.random.default_rng(seed)
    starts = [list(range(ny))]
    for _ in range(restarts):
        T = [y for y in range(ny) if rng.random() < 0.5] or [int(rng.integers(ny))]
        starts.append(T)
    best = None
    il, ir = 1.0 / float(l), 1.0 / float(r)
    for T in starts:
        cur = -1.0
        while True:
            v1, S = _best_prefix(A, T, ny, il, ir)
            v2, T2 = _best_prefix(A.T, S, nx, ir, il)
            if v2 <= cur + 1e-15:
                break
            cur, T = v2, T2
        if best is None or cur > best[0]:
            best = (cur, tuple(S), tuple(T))
    val, S, T = best
    val = flat_operator_value(A, S, T, l, r)
    return val, NormWitness("subsetPair", (S, T), val, flat_operator_key(arr, S, T, l, r),
                            (_flat_exponent(l, r) or (None,))[0], certified=False)


def matrix_sandwich_audit(M, l, r, d, eps, log_coeff=20, restarts: int = 8, seed: int = 0,
                          tol: float = DEFAULT_TOL):
    """Check op >= flat >= (1 - eps) op for a smooth nonnegative matrix.

    The flat norm is certified (enumeration); the operator norm is a lower
    bound, so the second inequality is only ever reported as "consistent".
    """
    arr = _matrix(M)
    mean = array_mean(arr)
    mx = max(arr.reshape(-1))
    hyp = {
        "smooth": bool(mean > 0 and mx <= mean * (2 ** Fraction(d) if isinstance(mean, Fraction) else 2.0 ** d)),
        "eps_range": bool(0 < eps < 1),
        "lr_large": bool(min(float(l), float(r)) >= log_coeff * math.log2(max(d, 1)) / float(eps)),
    }
    flat, fw = flat_operator_norm(arr, l, r, seed=seed)
    op = operator_norm(arr, l, r, restarts=restarts, seed=seed, tol=tol)
    first = op.value >= flat - tol * max(1.0, flat)
    second = flat >= (1 - float(eps)) * op.value - tol
    values = {
        "operator_lower_bound": op.value,
        "flat": flat,
        "margin": flat - (1 - float(eps)) * op.value,
        "first_inequality": bool(first),
        "second_inequality": "consistent" if second else "violated",
        "flat_certified": fw.certified,
        "operator_converged": op.converged,
        "flat_witness": fw,
    }
    return decide("matrix_sandwich", hyp, bool(first and second), values)
