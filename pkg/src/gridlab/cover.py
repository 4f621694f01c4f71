"""Covering a 3-dimensional set by slice functions.

The covering LP

    minimize   sum_s c_s w(s)
    subject to sum_s c_s s(w) >= 1   for every w in F,   c >= 0

ranges over every slice of density at least ``floor``, which is far too many
columns to write down.  It is solved by column generation: a restricted
master LP over a small pool of slices, and an exact pricing oracle that finds
the slice with the most negative reduced cost.  The master is a revised
simplex that runs on Fractions (exact) or floats with a tolerance.

The second half of the module turns a density on a cylinder intersection into
an explicit lower bound on its size (subcube search, faces, truncation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    DEFAULT_TOL,
    ORIENTATIONS,
    CylinderIntersection,
    DegenerateInputError,
    DensityFunction,
    DimensionError,
    DomainError,
    Grid2,
    Grid3Indicator,
    ResourceError,
    SliceFunction,
    SubCube,
    array_mean,
    array_sum,
    as_array,
    decide,
    decimal_fraction,
    integerize,
    is_exact_array,
    orientation_axes,
)
from .spread import matrix_product

MAX_POINT_AXIS = 16
MAX_SUBCUBE_ENUM = 1 << 12
DEFAULT_FLOOR_CONST = 3


# ---------------------------------------------------------------------------
# small helpers

def _indicator(F) -> np.ndarray:
    if isinstance(F, Grid3Indicator):
        return F.bits
    if isinstance(F, CylinderIntersection):
        return F.to_grid3().bits
    arr = np.asarray(F)
    if arr.ndim != 3:
        raise DimensionError("expected a 3-d indicator")
    return arr.astype(bool)


def _fr(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return decimal_fraction(x)


def slice_weight(s: SliceFunction) -> Fraction:
    """w(s) = E[s] = |pairs| |points| / |Omega|."""
    return s.density()


def _subset_masks(n: int) -> np.ndarray:
    """Row r is the 0/1 membership vector of the subset with bitmask r + 1."""
    r = np.arange(1, 1 << n, dtype=np.int64)
    return ((r[:, None] >> np.arange(n)) & 1).astype(np.int64)


def _min_size(floor, omega: int, per: int) -> int:
    """Smallest m with m * per >= floor * omega, and at least 1."""
    need = _fr(floor) * omega
    return max(1, math.ceil(need / per))


# ---------------------------------------------------------------------------
# pricing

@dataclass(frozen=True)
class _Priced:
    cost: object  # reduced cost times |Omega| (times L in exact mode)
    orientation: str
    pairs: tuple
    points: tuple


def _orient_view(arr: np.ndarray, orientation: str) -> np.ndarray:
    """Reshape ``arr`` to (pairs, points) for the given orientation."""
    (a, b), c = orientation_axes(orientation)
    moved = np.moveaxis(arr, (a, b, c), (0, 1, 2))
    return moved.reshape(moved.shape[0] * moved.shape[1], moved.shape[2])


def _price_all(y_int: np.ndarray, scale, floor, shape, keep: int = 1) -> list[_Priced]:
    """Best slice per (orientation, point set), most negative first.

    ``y_int`` is ``y * scale`` (integers in exact mode).  A pair contributes
    ``|points| * scale - sum_{z in points} y_int``; the best pair set for a
    point set is every negative contribution, padded with the smallest others
    until the floor is met.
    """
    omega = int(np.prod(shape))
    out: list[_Priced] = []
    for orientation in ORIENTATIONS:
        (a, b), c = orientation_axes(orientation)
        nc = shape[c]
        if nc > MAX_POINT_AXIS:
            raise ResourceError(f"point axis of size {nc} exceeds {MAX_POINT_AXIS}")
        Y = _orient_view(y_int, orientation)
        npairs = Y.shape[0]
        masks = _subset_masks(nc)
        sums = Y.dot(masks.T)  # (pairs, subsets)
        sizes = masks.sum(axis=1)
        if Y.dtype == object:
            sizes = sizes.astype(object)
        contrib = sizes[None, :] * scale - sums
        order = np.argsort(contrib, axis=0, kind="stable")
        nb = shape[b]
        for j in range(masks.shape[0]):
            size = int(sizes[j])
            m_min = _min_size(floor, omega, size)
            if m_min > npairs:
                continue
            col = contrib[:, j]
            idx = order[:, j]
            sorted_col = col[idx]
            neg = int(np.count_nonzero(sorted_col < 0))
            m = max(neg, m_min)
            chosen = idx[:m]
            cost = sorted_col[:m].sum()
            pairs = tuple(sorted((int(p) // nb, int(p) % nb) for p in chosen))
            points = tuple(int(z) for z in np.flatnonzero(masks[j]))
            out.append(_Priced(cost, orientation, pairs, points))
    if not out:
        raise DomainError("no slice meets the density floor")
    # stable: ties keep orientation order then point-set bitmask order
    out.sort(key=lambda p: p.cost)
    return out[:keep] if keep else out


def _integer_y(y: np.ndarray):
    """Return (y_int, scale) with y = y_int / scale."""
    if is_exact_array(y):
        ints, L = integerize(y)
        big = max((abs(int(v)) for v in ints.reshape(-1)), default=0)
        if big * max(y.shape) * 4 < (1 << 62) and L * max(y.shape) * 4 < (1 << 62):
            return ints.astype(np.int64), L
        return ints, L
    return np.asarray(y, dtype=np.float64), 1.0


def pricing_oracle(y, floor, shape=None) -> tuple[SliceFunction, object]:
    """Slice of density >= floor minimizing w(s) - sum_{w in s} y(w) / |Omega|.

    A nonnegative reduced cost certifies that ``y`` is dual feasible.
    """
    arr = as_array(y)
    if arr.ndim != 3:
        raise DimensionError("y must be a 3-d array")
    if any(v < 0 for v in arr.reshape(-1)):
        raise DomainError("y must be nonnegative")
    shape = tuple(arr.shape)
    omega = int(np.prod(shape))
    y_int, L = _integer_y(arr)
    best = _price_all(y_int, L, floor, shape, keep=1)[0]
    rc = Fraction(int(best.cost), L * omega) if is_exact_array(arr) else float(best.cost) / omega
    return SliceFunction(best.orientation, best.pairs, best.points, shape), rc


# ---------------------------------------------------------------------------
# restricted master: revised simplex, float or exact

def _solve_int(A: list, b: list) -> list:
    """Exact solution of A x = b for integer A, b (fraction-free elimination)."""
    n = len(A)
    M = [[int(v) for v in row] + [int(bi)] for row, bi in zip(A, b)]
    prev = 1
    for k in range(n):
        p = next((i for i in range(k, n) if M[i][k] != 0), None)
        if p is None:
            raise ZeroDivisionError("singular basis")
        if p != k:
            M[k], M[p] = M[p], M[k]
        pk, rowk = M[k][k], M[k]
        for i in range(k + 1, n):
            Mi = M[i]
            mik = Mi[k]
            if mik == 0:
                for j in range(k + 1, n + 1):
                    Mi[j] = Mi[j] * pk // prev
            else:
                for j in range(k + 1, n + 1):
                    Mi[j] = (Mi[j] * pk - mik * rowk[j]) // prev
            Mi[k] = 0
        prev = pk
    x = [Fraction(0)] * n
    for i in reversed(range(n)):
        s = Fraction(M[i][n]) - sum((M[i][j] * x[j] for j in range(i + 1, n) if M[i][j]), Fraction(0))
        x[i] = s / M[i][i]
    return x


def _invert(B: np.ndarray) -> np.ndarray:
    """Exact inverse of an integer matrix as an object array of Fractions."""
    n = B.shape[0]
    rows = B.tolist()
    cols = [_solve_int(rows, [int(i == j) for i in range(n)]) for j in range(n)]
    return np.array(cols, dtype=object).T.copy()


class _Master:
    """min w.c  s.t.  A c - s = 1, c, s >= 0, columns added over time.

    Variables are numbered: j >= 0 is slice column j, -(i + 1) is the
    surplus of row i.  The all-one slice is column 0, so the starting basis
    (all-one slice plus every surplus but the first) is feasible.
    """

    def __init__(self, m: int, exact: bool, tol: float):
        self.m = m
        self.exact = exact
        self.tol = 0 if exact else tol
        self.dtype = object if exact else float
        self.A = np.zeros((m, 0), dtype=np.int64)
        self.w = np.zeros(0, dtype=self.dtype)
        self.basis: list[int] = []
        self.Binv = None
        self.xB = None
        self.pivots = 0

    def _col(self, var: int) -> np.ndarray:
        if var >= 0:
            return self.A[:, var]
        e = np.zeros(self.m, dtype=np.int64)
        e[-var - 1] = -1
        return e

    def _cost(self, var: int):
        if var >= 0:
            return self.w[var]
        return Fraction(0) if self.exact else 0.0

    def add(self, col: np.ndarray, weight) -> int:
        self.A = np.concatenate([self.A, col.astype(np.int64)[:, None]], axis=1)
        wt = Fraction(weight) if self.exact else float(weight)
        self.w = np.append(self.w, np.array([wt], dtype=self.dtype))
        if self.A.shape[1] == 1:
            self.load_basis([0] + [-(i + 1) for i in range(1, self.m)])
        return self.A.shape[1] - 1

    def load_basis(self, basis: list[int]) -> None:
        self.basis = list(basis)
        B = np.stack([self._col(v) for v in self.basis], axis=1)
        if self.exact:
            self.Binv = _invert(B)
            self.xB = self.Binv.dot(np.array([Fraction(1)] * self.m, dtype=object))
        else:
            self.Binv = np.linalg.inv(B.astype(float))
            self.xB = self.Binv.sum(axis=1)

    def duals(self) -> np.ndarray:
        cB = np.array([self._cost(v) for v in self.basis], dtype=self.dtype)
        return cB.dot(self.Binv)

    def value(self):
        cB = [self._cost(v) for v in self.basis]
        return sum((c * x for c, x in zip(cB, self.xB)), Fraction(0) if self.exact else 0.0)

    def solve(self, max_pivots: int = 100_000) -> int:
        pivots = 0
        degenerate_run = 0
        tol = self.tol
        while pivots < max_pivots:
            pi = self.duals()
            rc = self.w - pi.dot(self.A)
            basic = set(self.basis)
            candidates = [(rc[j], j) for j in range(len(rc)) if rc[j] < -tol and j not in basic]
            candidates += [(pi[i], -(i + 1)) for i in range(self.m) if pi[i] < -tol and -(i + 1) not in basic]
            if not candidates:
                return pivots
            if degenerate_run > 2 * self.m:
                # Bland's rule: a fixed variable order rules out cycling
                enter = min(candidates, key=lambda c: (c[1] < 0, abs(c[1])))[1]
            else:
                enter = min(candidates, key=lambda c: (c[0], c[1] < 0, abs(c[1])))[1]
            d = self.Binv.dot(self._col(enter))
            rows = [i for i in range(self.m) if d[i] > tol]
            if not rows:
                raise RuntimeError("covering LP reported unbounded; this cannot happen")
            ratios = {i: max(self.xB[i], 0) / d[i] for i in rows}
            low = min(ratios.values())
            # ratios within tol count as ties; ties go to the lowest variable
            r = min((i for i in rows if ratios[i] <= low + tol),
                    key=lambda i: (self.basis[i] < 0, abs(self.basis[i])))
            step = self.xB[r] / d[r]
            degenerate_run = degenerate_run + 1 if step <= tol else 0
            self.xB = self.xB - step * d
            self.xB[r] = step
            row = self.Binv[r] / d[r]
            self.Binv = self.Binv - np.outer(d, row)
            self.Binv[r] = row
            self.basis[r] = enter
            pivots += 1
            self.pivots += 1
            if not self.exact and self.pivots % 64 == 0:
                self.load_basis(self.basis)
        raise ResourceError("simplex pivot cap reached")

    def coefficients(self) -> dict[int, object]:
        return {v: x for v, x in zip(self.basis, self.xB) if v >= 0 and x != 0}


def _certify(master: _Master, m: int, weights: list):
    """Exact primal x_B and duals for the basis of a float master, or None."""
    try:
        B = np.stack([master._col(v) for v in master.basis], axis=1)
        xB = _solve_int(B.tolist(), [1] * m)
        cB = [weights[v] if v >= 0 else Fraction(0) for v in master.basis]
        L = math.lcm(*(c.denominator for c in cB))
        pi = _solve_int(B.T.tolist(), [int(c * L) for c in cB])
        pi = [v / L for v in pi]
    except ZeroDivisionError:
        return None
    return xB, pi


# ---------------------------------------------------------------------------
# fractional cover and dual packing

@dataclass
class FractionalCover:
    slices: list
    coeffs: list
    floor: Fraction
    value: object
    duals: np.ndarray | None = None  # y = |Omega| * pi, zero off F
    converged: bool = True
    iterations: int = 0
    lower_bound: object = None
    exact: bool = True

    @property
    def total_coeff(self):
        return sum(self.coeffs, Fraction(0) if self.exact else 0.0)

    @property
    def gap(self):
        return self.value - self.lower_bound if self.lower_bound is not None else None

    def coverage(self, shape) -> np.ndarray:
        total = np.zeros(shape, dtype=object if self.exact else float)
        if self.exact:
            total[...] = Fraction(0)
        for s, c in zip(self.slices, self.coeffs):
            total = total + np.where(s.indicator(), c, 0)
        return total

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "floor": self.floor,
            "converged": self.converged,
            "iterations": self.iterations,
            "lower_bound": self.lower_bound,
            "slices": [dict(s.to_dict(), coeff=c) for s, c in zip(self.slices, self.coeffs)],
        }


@dataclass
class DualPacking:
    p: DensityFunction
    objective: object
    floor: Fraction

    def to_dict(self) -> dict:
        support = np.argwhere(np.asarray([v != 0 for v in self.p.data.reshape(-1)]).reshape(self.p.shape))
        return {
            "objective": self.objective,
            "floor": self.floor,
            "support": [[*map(int, w), self.p.data[tuple(w)]] for w in support],
        }


def solve_fractional_cover(F, floor, *, exact: bool = True, tol: float = DEFAULT_TOL,
                           max_iter: int = 2000, columns_per_round: int = 8) -> FractionalCover:
    """Optimal fractional slice cover of F by column generation.

    The generation loop runs in floating point.  In exact mode the final
    basis is then re-solved over the rationals and re-priced exactly; if that
    certificate fails, generation continues with an exact master.
    """
    bits = _indicator(F)
    shape = tuple(bits.shape)
    omega = int(np.prod(shape))
    floor = _fr(floor)
    if floor > 1:
        raise DomainError("floor above 1 admits no slice")
    zero = Fraction(0) if exact else 0.0
    rows = [tuple(map(int, w)) for w in np.argwhere(bits)]
    m = len(rows)
    if not rows:
        return FractionalCover([], [], floor, zero, np.full(shape, zero, dtype=object if exact else float),
                               True, 0, zero, exact)
    pool: list[SliceFunction] = []
    cols: list[np.ndarray] = []
    seen = set()

    def new_column(s: SliceFunction):
        key = (s.orientation, s.pair_set, s.point_set)
        if key in seen:
            return None
        seen.add(key)
        pool.append(s)
        cols.append(s.indicator()[bits].astype(np.int64))
        return cols[-1]

    def duals_to_y(pi, ex: bool) -> np.ndarray:
        y = np.full(shape, Fraction(0) if ex else 0.0, dtype=object if ex else float)
        for i, w in enumerate(rows):
            y[w] = pi[i] * omega
        return y

    def min_reduced_cost(y, ex: bool):
        y_int, L = _integer_y(y)
        priced = _price_all(y_int, L, floor, shape, keep=0)
        scale = L * omega
        rc = Fraction(int(priced[0].cost), scale) if ex else float(priced[0].cost) / scale
        return priced, rc, scale

    def generate(master: _Master, ex: bool, start_it: int):
        it, lower = start_it, (Fraction(0) if ex else 0.0)
        eps = 0 if ex else tol
        while it < max_iter:
            it += 1
            master.solve()
            y = duals_to_y(master.duals(), ex)
            priced, min_rc, scale = min_reduced_cost(y, ex)
            value = master.value()
            # any feasible c has sum c <= OPT / floor <= value / floor
            lower = max(0, value + (value / floor) * min(min_rc, 0)) if floor > 0 else 0
            if min_rc >= -eps:
                return it, True, value, y
            added = 0
            for pr in priced:
                if pr.cost >= -eps * scale:
                    break
                col = new_column(SliceFunction(pr.orientation, pr.pairs, pr.points, shape))
                if col is not None:
                    master.add(col, pool[-1].density())
                    added += 1
                    if added >= columns_per_round:
                        break
            if added == 0:
                return it, True, value, y
        return it, False, lower, y

    new_column(SliceFunction.full(shape))
    fm = _Master(m, False, tol)
    fm.add(cols[0], 1)
    it, converged, info, y = generate(fm, False, 0)
    if not exact:
        coeffs = fm.coefficients()
        keep = sorted(j for j, c in coeffs.items() if c > tol)
        value = fm.value()
        return FractionalCover([pool[j] for j in keep], [float(coeffs[j]) for j in keep], floor, value, y,
                               converged, it, value if converged else info, False)

    weights = [s.density() for s in pool]
    cert = _certify(fm, m, weights)
    if cert is not None:
        xB, pi = cert
        ok = all(v >= 0 for v in xB) and all(v >= 0 for v in pi)
        if ok:
            A = np.stack(cols, axis=1)
            pi_arr = np.array(pi, dtype=object)
            ok = all(w - pi_arr.dot(A[:, j]) >= 0 for j, w in enumerate(weights))
        if ok:
            y = duals_to_y(pi, True)
            _, rc, _ = min_reduced_cost(y, True)
            ok = rc >= 0
        if ok and converged:
            coeffs = {v: x for v, x in zip(fm.basis, xB) if v >= 0 and x != 0}
            keep = sorted(coeffs)
            value = sum((weights[j] * coeffs[j] for j in keep), Fraction(0))
            return FractionalCover([pool[j] for j in keep], [coeffs[j] for j in keep], floor, value, y,
                                   True, it, value, True)
    em = _Master(m, True, 0)
    for col, w in zip(cols, weights):
        em.add(col, w)
    if cert is not None and all(v >= 0 for v in cert[0]):
        em.load_basis(fm.basis)
    it, converged, info, y = generate(em, True, it)
    coeffs = em.coefficients()
    keep = sorted(coeffs)
    value = em.value()
    return FractionalCover([pool[j] for j in keep], [coeffs[j] for j in keep], floor, value, y,
                           converged, it, value if converged else info, True)


def solve_dual_packing(F, floor, *, exact: bool = True, tol: float = DEFAULT_TOL,
                       cover: FractionalCover | None = None) -> DualPacking:
    """Optimal packing density p on F from the final master duals.

    p vanishes off F; every slice s of density >= floor has
    E[p s] <= w(s), and E[p F] equals the cover value.
    """
    fc = cover if cover is not None else solve_fractional_cover(F, floor, exact=exact, tol=tol)
    p = DensityFunction(fc.duals)
    objective = array_mean(fc.duals)
    return DualPacking(p, objective, fc.floor)


# ---------------------------------------------------------------------------
# randomized rounding

@dataclass
class IntegralCover:
    slices: list
    valid: bool
    measure: object  # sum of weights of the distinct slices
    raw_measure: object  # with multiplicity over draws
    draws: int
    attempts: int
    uncovered: list = field(default_factory=list)
    fractional_value: object = None
    log_bound: float | None = None  # 4 ln|Omega| * fractional value

    @property
    def blowup(self) -> float:
        fv = float(self.fractional_value or 0)
        return float(self.measure) / fv if fv else math.inf

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "measure": self.measure,
            "raw_measure": self.raw_measure,
            "draws": self.draws,
            "attempts": self.attempts,
            "slice_count": len(self.slices),
            "fractional_value": self.fractional_value,
            "log_bound": self.log_bound,
            "blowup": self.blowup,
            "uncovered": [list(w) for w in self.uncovered],
            "slices": [s.to_dict() for s in self.slices],
        }


def _covers(slices, bits: np.ndarray) -> list:
    hit = np.zeros(bits.shape, bool)
    for s in slices:
        hit |= s.indicator()
    return [tuple(map(int, w)) for w in np.argwhere(bits & ~hit)]


def round_cover(fc: FractionalCover, F, fail_prob=0.1, *, C=2, seed: int = 0,
                max_retries: int = 20) -> IntegralCover:
    """Draw ceil(C ln(|Omega|/fail_prob) sum c) slices with probability c_i / sum c."""
    bits = _indicator(F)
    shape = bits.shape
    omega = int(np.prod(shape))
    if not 0 < float(fail_prob) < 1:
        raise DomainError("fail_prob must lie in (0, 1)")
    total = fc.total_coeff
    zero = Fraction(0) if fc.exact else 0.0
    if not bits.any():
        return IntegralCover([], True, zero, zero, 0, 0, [], fc.value, 0.0)
    if not fc.slices:
        raise DomainError("empty fractional cover for nonempty F")
    cov = fc.coverage(shape)
    if any(v < 1 - (0 if fc.exact else 1e-9) for v in cov[bits]):
        raise DomainError("fractional cover does not cover F")
    draws = math.ceil(float(C) * math.log(omega / float(fail_prob)) * float(total))
    probs = np.array([float(c) for c in fc.coeffs])
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    bound = 4 * math.log(omega) * float(fc.value)
    result = None
    for attempt in range(1, max_retries + 1):
        picks = rng.choice(len(fc.slices), size=draws, p=probs)
        distinct = sorted(set(int(i) for i in picks))
        chosen = [fc.slices[i] for i in distinct]
        raw = sum((fc.slices[int(i)].density() for i in picks), Fraction(0))
        measure = sum((s.density() for s in chosen), Fraction(0))
        missing = _covers(chosen, bits)
        result = IntegralCover(chosen, not missing, measure, raw, draws, attempt, missing, fc.value, bound)
        if not missing:
            break
    return result


# ---------------------------------------------------------------------------
# removal lemma pipeline

@dataclass
class RemovalReport:
    density: Fraction
    floor: Fraction
    fractional: FractionalCover
    cover: IntegralCover
    hypothesis_met: bool
    d: int

    @property
    def cover_density(self):
        """E[F'] for F' = sum of the cover's slices."""
        return self.cover.measure

    def to_dict(self) -> dict:
        mins = min((s.density() for s in self.cover.slices), default=None)
        return {
            "d": self.d,
            "density": self.density,
            "floor": self.floor,
            "hypothesis_met": self.hypothesis_met,
            "fractional_value": self.fractional.value,
            "cover_density": self.cover_density,
            "slice_count": len(self.cover.slices),
            "min_slice_density": mins,
            "log2_cover_density": math.log2(float(self.cover_density)) if self.cover_density else None,
            "sqrt_d": math.sqrt(self.d),
            "cover": self.cover.to_dict(),
        }


def as_slice(F) -> SliceFunction | None:
    """F as a single slice function if it is one, else None."""
    bits = _indicator(F)
    if not bits.any():
        return None
    for orientation in ORIENTATIONS:
        P = _orient_view(bits, orientation)
        rows = np.flatnonzero(P.any(axis=1))
        if (P[rows] == P[rows[0]]).all():
            nb = bits.shape[orientation_axes(orientation)[0][1]]
            pairs = [(int(r) // nb, int(r) % nb) for r in rows]
            return SliceFunction(orientation, pairs, np.flatnonzero(P[rows[0]]).tolist(), bits.shape)
    return None


def removal_lemma(F, d: int, *, C_f=DEFAULT_FLOOR_CONST, fail_prob=0.1, seed: int = 0,
                  exact: bool = True) -> tuple[IntegralCover, RemovalReport]:
    """Cover a sparse set by slices of density >= 2^(-C_f d)."""
    bits = _indicator(F)
    density = Fraction(int(bits.sum()), bits.size)
    floor = Fraction(1, 2 ** int(math.ceil(C_f * d)))
    fc = solve_fractional_cover(bits, floor, exact=exact)
    own = as_slice(bits)
    if own is not None and own.density() >= floor:
        # a slice-shaped F is its own cheapest cover
        omega = bits.size
        ic = IntegralCover([own], True, density, density, 1, 1, [], fc.value,
                           4 * math.log(omega) * float(fc.value))
    else:
        ic = round_cover(fc, bits, fail_prob, seed=seed)
    report = RemovalReport(density, floor, fc, ic, density <= Fraction(1, 2 ** d), int(d))
    return ic, report


# ---------------------------------------------------------------------------
# subcube search

def _phi_key(mass, size: int, omega: int, t: Fraction):
    """Phi^a with t = a/b:  (mass/size)^a (size/omega)^b, mass unnormalized."""
    a, b = t.numerator, t.denominator
    return (mass / size) ** a * Fraction(size, omega) ** b


def _phi_log(mass: float, size: int, omega: int, t: float) -> float:
    if mass <= 0:
        return -math.inf
    return math.log(mass / size) + math.log(size / omega) / t


def subcube_phi(p: DensityFunction, cube: SubCube, t):
    """Phi(C) = E_C[p] (|C| / |Omega|)^(1/t); float unless t = 1."""
    arr = p.data
    sub = arr[np.ix_(*cube.axes())]
    mean = array_mean(sub)
    frac_size = cube.density(arr.shape)
    tt = _fr(t)
    if tt == 1 and isinstance(mean, Fraction):
        return mean * frac_size
    return float(mean) * float(frac_size) ** (1 / float(tt))


def subcube_maximize(p: DensityFunction, t, floor=Fraction(0), *, restarts: int = 8,
                     seed: int = 0) -> tuple[SubCube, object, bool]:
    """Subcube of density >= floor maximizing E_C[p] (|C|/|Omega|)^(1/t).

    Exact when two axes together have at most 2^12 subsets: those two are
    enumerated and the third axis takes the best prefix of its marginal
    masses.  Otherwise alternating ascent with restarts.  Returns
    (cube, Phi as float, exact flag).
    """
    arr = p.data if isinstance(p, DensityFunction) else as_array(p)
    shape = tuple(arr.shape)
    omega = int(np.prod(shape))
    tt = _fr(t)
    if tt <= 0:
        raise DomainError("t must be positive")
    floor = _fr(floor)
    min_size = max(1, math.ceil(floor * omega))
    exact = is_exact_array(arr)
    if exact:
        P, L = integerize(arr)
        Pf = np.array([float(v) for v in P.reshape(-1)]).reshape(shape)
    else:
        P, L = arr, 1
        Pf = arr
    order = sorted(range(3), key=lambda i: (shape[i], i))
    a, b, c = sorted(order[:2]) + [order[2]]
    if (1 << shape[a]) * (1 << shape[b]) <= MAX_SUBCUBE_ENUM:
        cube = _subcube_exact(P, Pf, L, shape, (a, b, c), tt, min_size, exact)
        return cube, subcube_phi(DensityFunction(arr), cube, tt), True
    cube = _subcube_ascent(Pf, shape, float(tt), min_size, restarts, seed)
    return cube, subcube_phi(DensityFunction(arr), cube, tt), False


def _subcube_exact(P, Pf, L, shape, axes, t: Fraction, min_size: int, exact: bool) -> SubCube:
    a, b, c = axes
    omega = int(np.prod(shape))
    Ma, Mb = _subset_masks(shape[a]), _subset_masks(shape[b])
    moved = np.moveaxis(Pf, (a, b, c), (0, 1, 2))
    T = np.einsum("ai,bj,ijk->abk", Ma.astype(float), Mb.astype(float), moved)
    srt = np.argsort(-T, axis=2, kind="stable")
    cums = np.cumsum(np.take_along_axis(T, srt, axis=2), axis=2)
    sa, sb = Ma.sum(1), Mb.sum(1)
    nc = shape[c]
    sizes = sa[:, None, None] * sb[None, :, None] * np.arange(1, nc + 1)[None, None, :]
    tf = float(t)
    with np.errstate(divide="ignore"):
        logs = np.where(
            (sizes >= min_size) & (cums > 0),
            np.log(np.maximum(cums, 1e-300) / sizes) + np.log(sizes / omega) / tf,
            -np.inf,
        )
    best = logs.max()
    if not np.isfinite(best):
        raise DomainError("no subcube with positive mass meets the floor")
    cand = np.argwhere(logs >= best - 1e-9 * max(1.0, abs(best)))

    def cube_of(ia, ib, k):
        ax = [None, None, None]
        ax[a] = tuple(np.flatnonzero(Ma[ia]).tolist())
        ax[b] = tuple(np.flatnonzero(Mb[ib]).tolist())
        ax[c] = tuple(sorted(srt[ia, ib, : k + 1].tolist()))
        return SubCube(*ax)

    if not exact:
        ia, ib, k = cand[0]
        return cube_of(ia, ib, k)
    best_key, best_cube = None, None
    for ia, ib, k in cand:  # argwhere is row-major: lowest enumeration order first
        cube = cube_of(ia, ib, k)
        mass = Fraction(int(array_sum(P[np.ix_(*cube.axes())])), L)
        key = _phi_key(mass, cube.size(), omega, t)
        if best_key is None or key > best_key:
            best_key, best_cube = key, cube
    return best_cube


def _subcube_ascent(Pf, shape, t: float, min_size: int, restarts: int, seed: int) -> SubCube:
    omega = int(np.prod(shape))
    rng = np.random.default_rng(seed)

    def score(ax):
        size = len(ax[0]) * len(ax[1]) * len(ax[2])
        if size < min_size:
            return -math.inf
        return _phi_log(float(Pf[np.ix_(*ax)].sum()), size, omega, t)

    starts = [[tuple(range(n)) for n in shape]]
    for _ in range(restarts):
        starts.append([tuple(sorted(rng.choice(n, size=rng.integers(1, n + 1), replace=False).tolist()))
                       for n in shape])
    best_ax, best_val = None, -math.inf
    for ax in starts:
        cur = score(ax)
        if cur == -math.inf:
            continue
        improved = True
        while improved:
            improved = False
            for i in range(3):
                others = [ax[j] for j in range(3) if j != i]
                sub = Pf[np.ix_(*[ax[j] if j != i else range(shape[i]) for j in range(3)])]
                marg = sub.sum(axis=tuple(j for j in range(3) if j != i))
                order = np.argsort(-marg, kind="stable")
                cums = np.cumsum(marg[order])
                other = len(others[0]) * len(others[1])
                for s in range(1, shape[i] + 1):
                    size = other * s
                    if size < min_size:
                        continue
                    val = _phi_log(float(cums[s - 1]), size, omega, t)
                    if val > cur + 1e-12:
                        cur = val
                        ax = list(ax)
                        ax[i] = tuple(sorted(order[:s].tolist()))
                        improved = True
        if cur > best_val:
            best_ax, best_val = ax, cur
    if best_ax is None:
        raise DomainError("no subcube meets the floor")
    return SubCube(*best_ax)


# ---------------------------------------------------------------------------
# faces, truncation, certificate

def build_faces(p: DensityFunction, cube: SubCube) -> tuple[Grid2, Grid2, Grid2]:
    """Two-marginals of p conditioned on the cube; each has mean exactly 1.

    f is indexed (x, y), g is (x, z) and h is (y, z), all restricted to the cube.
    """
    arr = p.data if isinstance(p, DensityFunction) else as_array(p)
    sub = arr[np.ix_(*cube.axes())]
    mean = array_mean(sub)
    if mean == 0:
        raise DegenerateInputError("density has no mass on the cube")
    pc = sub / mean
    f = _axis_mean(pc, 2)
    g = _axis_mean(pc, 1)
    h = _axis_mean(pc, 0)
    return Grid2(f), Grid2(g), Grid2(h)


def _axis_mean(a: np.ndarray, axis: int) -> np.ndarray:
    if is_exact_array(a):
        s = a.sum(axis=axis)
        return np.array([v / a.shape[axis] for v in s.reshape(-1)], dtype=object).reshape(s.shape)
    return a.mean(axis=axis)


def truncate_and_condition(f, g, h, t: int, eps=Fraction(1, 10)):
    """Cap at 2^t, drop low-degree rows x (of f) and columns z (of h), rescale.

    Returns (f~, g~, h~, removed_mass, pruned) where ``removed_mass`` is the
    total normalized l1 mass removed over the three faces and ``pruned``
    records dropped and kept indices plus the mass breakdown.
    """
    fa, ga, ha = (as_array(v) for v in (f, g, h))
    exact = is_exact_array(fa)
    t = int(t)
    cap = Fraction(2 ** t) if exact else float(2 ** t)
    e = _fr(eps) if exact else float(eps)
    cap_mass = Fraction(0) if exact else 0.0
    capped = []
    for face in (fa, ga, ha):
        excess = array_mean(np.array([max(v - cap, 0) for v in face.reshape(-1)], dtype=face.dtype))
        cap_mass += excess
        capped.append(np.array([min(v, cap) for v in face.reshape(-1)], dtype=face.dtype).reshape(face.shape))
    fb, gb, hb = capped
    mf, mh = array_mean(fb), array_mean(hb)
    keep_x = [x for x in range(fb.shape[0]) if array_mean(fb[x]) >= (1 - e) * mf]
    keep_z = [z for z in range(hb.shape[1]) if array_mean(hb[:, z]) >= (1 - e) * mh]
    if not keep_x or not keep_z:
        raise DegenerateInputError("pruning removed every row or column")
    keep_y = list(range(fb.shape[1]))
    prune_mass = (
        (array_sum(fb) - array_sum(fb[keep_x])) / fb.size
        + (array_sum(gb) - array_sum(gb[np.ix_(keep_x, keep_z)])) / gb.size
        + (array_sum(hb) - array_sum(hb[:, keep_z])) / hb.size
    )
    out = []
    for face in (fb[np.ix_(keep_x, keep_y)], gb[np.ix_(keep_x, keep_z)], hb[np.ix_(keep_y, keep_z)]):
        m = array_mean(face)
        if m == 0:
            raise DegenerateInputError("a face has no mass after pruning")
        out.append(Grid2(face / m))
    pruned = {
        "x": [x for x in range(fb.shape[0]) if x not in keep_x],
        "z": [z for z in range(hb.shape[1]) if z not in keep_z],
        "keep_x": keep_x,
        "keep_z": keep_z,
        "cap_mass": cap_mass,
        "prune_mass": prune_mass,
    }
    return out[0], out[1], out[2], cap_mass + prune_mass, pruned


@dataclass
class LargenessCertificate:
    cube: SubCube  # the pruned cube, in original coordinates
    faces: tuple
    bound: object
    t: int
    true_density: Fraction
    literal_bound: object
    log: dict
    report: object = None

    @property
    def valid(self) -> bool:
        return self.bound <= self.true_density

    def to_dict(self) -> dict:
        return {
            "cube": self.cube.to_dict(),
            "bound": self.bound,
            "literal_bound": self.literal_bound,
            "true_density": self.true_density,
            "valid": self.valid,
            "t": self.t,
            "log": self.log,
        }


def triple_product_mean(f, g, h):
    """E_{x,y,z}[f(x,y) g(x,z) h(y,z)] = <f o h, g> with the product over y."""
    fh = as_array(matrix_product(as_array(f), as_array(h).T))
    return array_mean(fh * as_array(g))


def largeness_certificate(p: DensityFunction, F, t: int, d: int, *, c=Fraction(1, 8),
                          eps=Fraction(1, 10), check_evasive: bool = True) -> LargenessCertificate:
    """Lower-bound E[F] from a density p supported on the cylinder intersection F.

    bound = |C|/|Omega| * E_C[f~ g~ h~] / max(4 * 2^(3t), max f~ g~ h~), which
    is at most E[F] because f~ g~ h~ vanishes wherever F does.
    """
    bits = _indicator(F)
    arr = p.data if isinstance(p, DensityFunction) else as_array(p)
    if arr.shape != bits.shape:
        raise DimensionError("density and F shapes differ")
    if any(v != 0 for v in arr[~bits]):
        raise DomainError("p must vanish off F")
    t = int(t)
    if t < 1:
        raise DomainError("t must be a positive integer")
    exact = is_exact_array(arr)
    omega = bits.size
    true_density = Fraction(int(bits.sum()), omega)
    hyp = {"supported_on_F": True}
    log: dict = {}
    if check_evasive:
        from .evasive import evasiveness_audit

        c = _fr(c)
        d_floor = math.ceil(d / c)
        ev = evasiveness_audit(DensityFunction(arr), d_floor)
        k_allowed = float(c) * math.sqrt(d)
        hyp["evasive"] = bool(ev.k_prime <= k_allowed + 1e-12)
        log["evasive_k_prime"] = ev.k_prime
        log["evasive_k_allowed"] = k_allowed
        log["evasive_floor_exp"] = d_floor
    floor = Fraction(1, 2 ** int(math.floor(t * t)))
    cube, phi, cube_exact = subcube_maximize(DensityFunction(arr), t, floor)
    f, g, h = build_faces(DensityFunction(arr), cube)
    ft, gt, ht, removed, pruned = truncate_and_condition(f, g, h, t, eps)
    sx = tuple(cube.sx[i] for i in pruned["keep_x"])
    sz = tuple(cube.sz[i] for i in pruned["keep_z"])
    final = SubCube(sx, cube.sy, sz)
    prod_mean = triple_product_mean(ft.data, gt.data, ht.data)
    fm, gm, hm = ft.max(), gt.max(), ht.max()
    literal_den = 4 * 2 ** (3 * t)
    peak = fm * gm * hm
    den = max(literal_den, peak)
    frac_size = final.density(bits.shape)
    if exact:
        bound = frac_size * prod_mean / den
        literal = frac_size * prod_mean / literal_den
    else:
        bound = float(frac_size) * float(prod_mean) / float(den)
        literal = float(frac_size) * float(prod_mean) / literal_den
    log.update({
        "phi": phi,
        "cube_search_exact": cube_exact,
        "cube": cube.to_dict(),
        "cube_density": cube.density(bits.shape),
        "final_cube_density": frac_size,
        "removed_mass": removed,
        "cap_mass": pruned["cap_mass"],
        "prune_mass": pruned["prune_mass"],
        "pruned_x": pruned["x"],
        "pruned_z": pruned["z"],
        "triple_mean": prod_mean,
        "face_peak_product": peak,
        "denominator": den,
        "denominator_safeguarded": bool(peak > literal_den),
    })
    cert = LargenessCertificate(final, (ft, gt, ht), bound, t, true_density, literal, log)
    values = {"bound": bound, "true_density": true_density, "literal_bound": literal}
    cert.report = decide("largeness_certificate", hyp, bool(bound <= true_density), values)
    return cert
