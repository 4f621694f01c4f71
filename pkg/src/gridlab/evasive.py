"""Prime fields, the equal-inner-product set D, and exact evasiveness.

A distribution is evasive against slices when no slice of density at least
2^-d carries much more mass under it than under the uniform measure.  The
audit computes the worst ratio exactly: for a fixed point set the best pair
set of each cardinality is a prefix of the pairs sorted by mass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    MAX_CELLS,
    ORIENTATIONS,
    DensityFunction,
    DimensionError,
    DomainError,
    Grid3Indicator,
    ResourceError,
    SliceFunction,
    decide,
    integerize,
    is_exact_array,
    orientation_axes,
)

DEFAULT_AXIS_CAP = 1 << 10
MAX_POINT_AXIS = 16


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    i = 2
    while i * i <= q:
        if q % i == 0:
            return False
        i += 1
    return True


@dataclass(frozen=True)
class PrimeField:
    q: int

    def __post_init__(self):
        if not is_prime(int(self.q)):
            raise DomainError(f"{self.q} is not prime")
        object.__setattr__(self, "q", int(self.q))

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.q

    def elements(self) -> range:
        return range(self.q)


@dataclass(frozen=True)
class FieldVector:
    """Element of F_q^k; index n <-> base-q digits, most significant first."""

    field: PrimeField
    coords: tuple

    def __post_init__(self):
        if len(self.coords) < 1:
            raise DimensionError("field vectors need length >= 1")
        object.__setattr__(self, "coords", tuple(int(c) % self.field.q for c in self.coords))

    @property
    def k(self) -> int:
        return len(self.coords)

    @classmethod
    def from_index(cls, field: PrimeField, k: int, n: int) -> "FieldVector":
        q = field.q
        if not 0 <= n < q ** k:
            raise DimensionError(f"index {n} outside [0, {q ** k})")
        return cls(field, tuple((n // q ** (k - 1 - i)) % q for i in range(k)))

    def index(self) -> int:
        n = 0
        for c in self.coords:
            n = n * self.field.q + c
        return n


def inner_product(x: FieldVector, y: FieldVector) -> int:
    if x.field != y.field:
        raise DomainError("vectors live over different fields")
    if x.k != y.k:
        raise DimensionError("vectors have different lengths")
    return sum(a * b for a, b in zip(x.coords, y.coords)) % x.field.q


def _digit_matrix(q: int, k: int) -> np.ndarray:
    n = np.arange(q ** k, dtype=np.int64)
    return np.stack([(n // q ** (k - 1 - i)) % q for i in range(k)], axis=1)


def build_D(q: int, k: int, cap: int = DEFAULT_AXIS_CAP) -> Grid3Indicator:
    """Indicator of triples (x, y, z) with <x,y> = <x,z> = <y,z> over F_q^k."""
    PrimeField(q)
    if k < 1:
        raise DomainError("k must be >= 1")
    N = q ** k
    if N > cap:
        raise ResourceError(f"q^k = {N} exceeds the axis cap {cap}")
    if N ** 3 > MAX_CELLS:
        raise ResourceError(f"N^3 = {N ** 3} cells exceeds {MAX_CELLS}")
    V = _digit_matrix(q, k)
    G = V.dot(V.T) % q
    D = (G[:, :, None] == G[:, None, :]) & (G[:, None, :] == G[None, :, :])
    return Grid3Indicator(D)


# ---------------------------------------------------------------------------
# evasiveness

@dataclass
class EvasivenessReport:
    d: int
    max_ratio: Fraction
    worst_slice: SliceFunction
    exact: bool = True

    @property
    def k_prime(self) -> float:
        """log2 of the worst ratio: the measured evasiveness parameter."""
        return math.log2(self.max_ratio)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "max_ratio": self.max_ratio,
            "k_prime": self.k_prime,
            "worst_slice": self.worst_slice.to_dict(),
            "worst_slice_density": self.worst_slice.density(),
            "exact": self.exact,
        }


def _mass_array(D):
    """Integer masses and their total for an indicator or exact density."""
    if isinstance(D, Grid3Indicator):
        return D.bits.astype(np.int64)
    arr = D.data if isinstance(D, DensityFunction) else np.asarray(D)
    if arr.dtype == bool:
        return arr.astype(np.int64)
    if not is_exact_array(arr):
        raise DomainError("evasiveness is measured exactly; pass an exact density")
    ints, _ = integerize(arr)
    return ints


def slice_ratio(D, s: SliceFunction) -> Fraction:
    """E_{w~D}[s] / E_{w~U}[s]."""
    mass = _mass_array(D)
    total = int(mass.sum())
    inside = int(mass[s.indicator()].sum())
    return Fraction(inside * s.omega, total * s.size())


def evasiveness_audit(D, d) -> EvasivenessReport:
    """Worst ratio E_D[s] / E_U[s] over slices of density >= 2^-d."""
    mass = _mass_array(D)
    shape = mass.shape
    omega = int(np.prod(shape))
    total = int(mass.sum())
    if total <= 0:
        raise DomainError("D is empty")
    floor_cells = math.ceil(Fraction(omega, 2 ** int(d))) if int(d) >= 0 else omega
    best = None  # (ratio, orientation, point mask, m)
    for orientation in ORIENTATIONS:
        (a, b), c = orientation_axes(orientation)
        nc = shape[c]
        if nc > MAX_POINT_AXIS:
            raise ResourceError(f"point axis of size {nc} exceeds {MAX_POINT_AXIS}")
        moved = np.moveaxis(mass, (a, b, c), (0, 1, 2))
        P = moved.reshape(-1, nc)
        npairs = P.shape[0]
        r = np.arange(1, 1 << nc, dtype=np.int64)
        masks = ((r[:, None] >> np.arange(nc)) & 1).astype(P.dtype)
        pm = P.dot(masks.T)  # pair masses per point set
        order = np.argsort(-pm, axis=0, kind="stable")
        cums = np.cumsum(np.take_along_axis(pm, order, axis=0), axis=0)
        sizes = masks.sum(axis=1)
        for j in range(masks.shape[0]):
            z = int(sizes[j])
            m_min = max(1, math.ceil(Fraction(floor_cells, z)))
            for mcount in range(m_min, npairs + 1):
                ratio = Fraction(int(cums[mcount - 1, j]) * omega, total * mcount * z)
                if best is None or ratio > best[0]:
                    best = (ratio, orientation, j, mcount, order[:mcount, j].copy(), masks[j].copy())
    if best is None:
        raise DomainError("density floor is larger than every slice")
    ratio, orientation, _, _, chosen, mask = best
    (a, b), c = orientation_axes(orientation)
    nb = shape[b]
    pairs = [(int(p) // nb, int(p) % nb) for p in chosen]
    points = [int(i) for i in np.flatnonzero(mask)]
    worst = SliceFunction(orientation, pairs, points, shape)
    return EvasivenessReport(int(d), ratio, worst, True)


def _best_mass_by_cardinality(masses: list[int]) -> list[int]:
    """best[m] = largest total of m distinct entries, by a cardinality DP."""
    n = len(masses)
    neg = -(1 << 62)
    best = [0] + [neg] * n
    for v in masses:
        for m in range(n, 0, -1):
            if best[m - 1] != neg and best[m - 1] + v > best[m]:
                best[m] = best[m - 1] + v
    return best


def evasiveness_oracle(D, d) -> Fraction:
    """Worst slice ratio without the sorted-prefix shortcut.

    Pair sets are enumerated outright when there are at most 16 pairs and
    otherwise searched by a per-cardinality DP.
    """
    mass = _mass_array(D)
    shape = mass.shape
    omega = int(np.prod(shape))
    total = int(mass.sum())
    floor = Fraction(omega, 2 ** int(d))
    best = Fraction(0)
    for orientation in ORIENTATIONS:
        (a, b), c = orientation_axes(orientation)
        moved = np.moveaxis(mass, (a, b, c), (0, 1, 2))
        P = moved.reshape(-1, shape[c])
        npairs, nc = P.shape
        if npairs <= 16:
            r = np.arange(1, 1 << npairs, dtype=np.int64)
            pair_masks = ((r[:, None] >> np.arange(npairs)) & 1)
            pair_counts = pair_masks.sum(axis=1)
        for zmask in range(1, 1 << nc):
            zs = [i for i in range(nc) if zmask >> i & 1]
            col = P[:, zs].sum(axis=1)
            if npairs <= 16:
                sums = pair_masks.dot(col)
                for s, cnt in zip(sums.tolist(), pair_counts.tolist()):
                    if cnt * len(zs) >= floor:
                        best = max(best, Fraction(s * omega, total * cnt * len(zs)))
            else:
                dp = _best_mass_by_cardinality([int(v) for v in col])
                for cnt in range(1, npairs + 1):
                    if cnt * len(zs) >= floor:
                        best = max(best, Fraction(dp[cnt] * omega, total * cnt * len(zs)))
    return best


def pseudorandom_ci_audit(D, F, t: int, *, k_prime=None, C_f=3, seed: int = 0):
    """Check E_{w~D}[F] <= 2^k' * sum_i E_U[s_i] for a slice cover {s_i} of F.

    k' is D's measured evasiveness at the cover's density floor, so every
    cover slice qualifies and the inequality follows slice by slice.
    """
    from .cover import _indicator, removal_lemma

    bits = _indicator(F)
    Dbits = D.bits if isinstance(D, Grid3Indicator) else np.asarray(D).astype(bool)
    if bits.shape != Dbits.shape:
        raise DimensionError("D and F shapes differ")
    nD = int(Dbits.sum())
    if nD == 0:
        raise DomainError("D is empty")
    density = Fraction(int(bits.sum()), bits.size)
    direct = Fraction(int((bits & Dbits).sum()), nD)
    floor_exp = int(math.ceil(C_f * t))
    if k_prime is None:
        ratio = evasiveness_audit(Grid3Indicator(Dbits), floor_exp).max_ratio
    else:
        ratio = None
    ic, rep = removal_lemma(bits, t, C_f=C_f, seed=seed)
    scale = ratio if ratio is not None else 2.0 ** float(k_prime)
    implied = scale * ic.measure
    fractional_implied = scale * rep.fractional.value
    hyp = {"sparse": bool(density <= Fraction(1, 2 ** int(t))), "cover_valid": bool(ic.valid)}
    ok = direct <= implied
    values = {
        "direct": direct,
        "implied": implied,
        "fractional_implied": fractional_implied,
        "max_ratio": ratio if ratio is not None else scale,
        "k_prime": math.log2(scale) if scale else None,
        "cover_measure": ic.measure,
        "slice_count": len(ic.slices),
        "density": density,
    }
    return decide("pseudorandom_ci", hyp, bool(ok), values)
