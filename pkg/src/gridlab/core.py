"""Domain types, normalized expectations and the grid text format.

Every quantity here is an *average* over the uniform measure on the domain,
never a sum.  Arrays come in two flavours:

* exact: ``dtype=object`` holding :class:`fractions.Fraction`
* float: ``dtype=float64``; comparisons use an absolute tolerance ``tol``

Indices are dense 0-based integers; a domain is described by its sizes only.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence, Union

import numpy as np

__version__ = "0.1.0"

DEFAULT_TOL = 1e-9
MAX_CELLS = 1 << 24

Scalar = Union[Fraction, float]


class GridlabError(Exception):
    """Base class for all library errors."""


class DimensionError(GridlabError, ValueError):
    pass


class DomainError(GridlabError, ValueError):
    pass


class ResourceError(GridlabError, RuntimeError):
    pass


class EmptySupportError(GridlabError, ValueError):
    """A conditional expectation over an empty set was requested."""


class DegenerateInputError(GridlabError, ValueError):
    pass


class ParseError(GridlabError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# ---------------------------------------------------------------------------
# arithmetic helpers

def frac(x) -> Fraction:
    """Convert ints, Fractions, decimal strings and 'a/b' strings exactly.

    Floats are converted by their exact binary value.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        return Fraction(int(x))
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def decimal_fraction(x) -> Fraction:
    """Like :func:`frac` but floats go through their shortest repr (0.1 -> 1/10)."""
    if isinstance(x, (float, np.floating)):
        return Fraction(repr(float(x)))
    return frac(x)


def is_exact_array(a: np.ndarray) -> bool:
    return a.dtype == object


def exact_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    flat_in, flat_out = arr.reshape(-1), out.reshape(-1)
    for i, v in enumerate(flat_in):
        flat_out[i] = frac(v)
    return out


def float_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        return np.array([float(v) for v in arr.reshape(-1)], dtype=float).reshape(arr.shape)
    return arr.astype(float)


def as_array(values, exact: bool | None = None) -> np.ndarray:
    """Coerce grid-like input; ``exact=None`` keeps the input's flavour."""
    if isinstance(values, (Grid2, DensityFunction)):
        values = values.data
    elif isinstance(values, Grid3Indicator):
        values = values.bits.astype(np.int64)
    arr = np.asarray(values)
    if exact is None:
        exact = arr.dtype == object
    return exact_array(arr) if exact else float_array(arr)


def integerize(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Write an exact array as ``A / L`` with A an object array of Python ints."""
    flat = a.reshape(-1)
    lcm = math.lcm(*(v.denominator for v in flat)) if flat.size else 1
    ints = np.array([v.numerator * (lcm // v.denominator) for v in flat], dtype=object)
    return ints.reshape(a.shape), lcm


def array_sum(a: np.ndarray):
    """Deterministic sum; exact arrays sum left to right in row-major order."""
    if is_exact_array(a):
        total = Fraction(0)
        for v in a.reshape(-1):
            total += v
        return total
    return float(np.sum(a))


def array_mean(a: np.ndarray):
    if a.size == 0:
        raise DimensionError("expectation over an empty domain")
    s = array_sum(a)
    return s / a.size if isinstance(s, Fraction) else s / a.size


def check_cells(n: int, cap: int = MAX_CELLS) -> None:
    if n > cap:
        raise ResourceError(f"{n} cells exceeds the cap of {cap}")


def worker_count() -> int:
    """Worker cap from GRIDLAB_THREADS (default 1)."""
    raw = os.environ.get("GRIDLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True, eq=False)
class Grid2:
    """Nonnegative matrix over X x Y."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.dtype not in (object, np.float64):
            arr = as_array(arr)
            object.__setattr__(self, "data", arr)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"Grid2 needs a nonempty 2-d array, got shape {arr.shape}")
        check_cells(arr.size)
        if any(v < 0 for v in arr.reshape(-1)):
            raise DomainError("Grid2 entries must be nonnegative")
        arr.setflags(write=False)

    @classmethod
    def of(cls, values, exact: bool = False) -> "Grid2":
        return cls(as_array(values, exact))

    @classmethod
    def ones(cls, nx: int, ny: int, exact: bool = True) -> "Grid2":
        return cls.of(np.ones((nx, ny), dtype=np.int64), exact)

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def exact(self) -> bool:
        return is_exact_array(self.data)

    def to_exact(self) -> "Grid2":
        return self if self.exact else Grid2(exact_array(self.data))

    def to_float(self) -> "Grid2":
        return Grid2(float_array(self.data)) if self.exact else self

    def T(self) -> "Grid2":
        return Grid2(self.data.T.copy())

    def mean(self):
        return array_mean(self.data)

    def max(self):
        return max(self.data.reshape(-1))

    def __eq__(self, other):
        if not isinstance(other, Grid2) or other.shape != self.shape:
            return NotImplemented if not isinstance(other, Grid2) else False
        return bool(np.all(self.data == other.data))

    def __repr__(self):
        return f"Grid2({self.nx}x{self.ny}, exact={self.exact})"


@dataclass(frozen=True, eq=False)
class Grid3Indicator:
    """0/1 tensor over X x Y x Z."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"Grid3Indicator needs a nonempty 3-d array, got {arr.shape}")
        check_cells(arr.size)
        if arr.dtype != bool:
            vals = np.unique(arr)
            if not set(vals.tolist()) <= {0, 1}:
                raise DomainError("Grid3Indicator entries must be 0 or 1")
            arr = arr.astype(bool)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def size(self) -> int:
        return int(self.bits.size)

    def count(self) -> int:
        return int(self.bits.sum())

    def density(self) -> Fraction:
        return Fraction(self.count(), self.size)

    def points(self) -> list[tuple[int, int, int]]:
        return [tuple(int(i) for i in w) for w in np.argwhere(self.bits)]

    def __eq__(self, other):
        if not isinstance(other, Grid3Indicator):
            return NotImplemented
        return self.shape == other.shape and bool(np.all(self.bits == other.bits))

    def __repr__(self):
        return f"Grid3Indicator({'x'.join(map(str, self.shape))}, |D|={self.count()})"


@dataclass(frozen=True, eq=False)
class CylinderIntersection:
    """F(x,y,z) = fxy(x,y) * gxz(x,z) * hyz(y,z) with 0/1 faces."""

    fxy: np.ndarray
    gxz: np.ndarray
    hyz: np.ndarray

    def __post_init__(self):
        faces = []
        for name in ("fxy", "gxz", "hyz"):
            a = np.asarray(getattr(self, name))
            if a.ndim != 2:
                raise DimensionError(f"face {name} must be 2-d")
            if a.dtype != bool:
                if not set(np.unique(a).tolist()) <= {0, 1}:
                    raise DomainError(f"face {name} must be an indicator")
                a = a.astype(bool)
            else:
                a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            faces.append(a)
        f, g, h = faces
        if f.shape[0] != g.shape[0] or f.shape[1] != h.shape[0] or g.shape[1] != h.shape[1]:
            raise DimensionError(f"inconsistent face shapes {f.shape}, {g.shape}, {h.shape}")

    @classmethod
    def full(cls, nx: int, ny: int, nz: int) -> "CylinderIntersection":
        return cls(np.ones((nx, ny), bool), np.ones((nx, nz), bool), np.ones((ny, nz), bool))

    @classmethod
    def from_points(cls, grid: Grid3Indicator) -> "CylinderIntersection":
        """Faces are the three projections; exact when ``grid`` is itself a CI."""
        b = grid.bits
        return cls(b.any(axis=2), b.any(axis=1), b.any(axis=0))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.fxy.shape[0], self.fxy.shape[1], self.gxz.shape[1])

    def __call__(self, x: int, y: int, z: int) -> int:
        return int(self.fxy[x, y] and self.gxz[x, z] and self.hyz[y, z])

    def to_grid3(self) -> Grid3Indicator:
        return Grid3Indicator(
            self.fxy[:, :, None] & self.gxz[:, None, :] & self.hyz[None, :, :]
        )

    def density(self) -> Fraction:
        return self.to_grid3().density()


ORIENTATIONS = ("XY|Z", "YZ|X", "XZ|Y")

# (pair axes, point axis) for each orientation
_ORIENT_AXES = {"XY|Z": ((0, 1), 2), "YZ|X": ((1, 2), 0), "XZ|Y": ((0, 2), 1)}


def orientation_axes(orientation: str) -> tuple[tuple[int, int], int]:
    try:
        return _ORIENT_AXES[orientation]
    except KeyError:
        raise DomainError(f"unknown orientation {orientation!r}") from None


@dataclass(frozen=True)
class SliceFunction:
    """Indicator of pairSet x pointSet under one of the three 2-vs-1 groupings.

    Pairs are ordered along the orientation's pair axes, e.g. (y, z) for
    ``"YZ|X"``.
    """

    orientation: str
    pair_set: frozenset
    point_set: frozenset
    shape: tuple[int, int, int]

    def __post_init__(self):
        (a, b), c = orientation_axes(self.orientation)
        object.__setattr__(self, "pair_set", frozenset((int(u), int(v)) for u, v in self.pair_set))
        object.__setattr__(self, "point_set", frozenset(int(u) for u in self.point_set))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        na, nb, nc = self.shape[a], self.shape[b], self.shape[c]
        for u, v in self.pair_set:
            if not (0 <= u < na and 0 <= v < nb):
                raise DimensionError(f"pair {(u, v)} out of range")
        for u in self.point_set:
            if not 0 <= u < nc:
                raise DimensionError(f"point {u} out of range")

    @classmethod
    def full(cls, shape: Sequence[int], orientation: str = "XY|Z") -> "SliceFunction":
        (a, b), c = orientation_axes(orientation)
        pairs = {(u, v) for u in range(shape[a]) for v in range(shape[b])}
        return cls(orientation, frozenset(pairs), frozenset(range(shape[c])), tuple(shape))

    @property
    def omega(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    def size(self) -> int:
        return len(self.pair_set) * len(self.point_set)

    def density(self) -> Fraction:
        return Fraction(self.size(), self.omega)

    def __call__(self, x: int, y: int, z: int) -> int:
        w = (x, y, z)
        (a, b), c = orientation_axes(self.orientation)
        return int((w[a], w[b]) in self.pair_set and w[c] in self.point_set)

    def indicator(self) -> np.ndarray:
        (a, b), c = orientation_axes(self.orientation)
        pair = np.zeros((self.shape[a], self.shape[b]), bool)
        for u, v in self.pair_set:
            pair[u, v] = True
        pt = np.zeros(self.shape[c], bool)
        pt[list(self.point_set)] = True
        # build in (a, b, c) order then move axes into (x, y, z)
        block = pair[:, :, None] & pt[None, None, :]
        return np.moveaxis(block, (0, 1, 2), (a, b, c))

    def to_dict(self) -> dict:
        return {
            "orientation": self.orientation,
            "pairs": sorted([list(p) for p in self.pair_set]),
            "points": sorted(self.point_set),
        }


@dataclass(frozen=True, eq=False)
class DensityFunction:
    """Nonnegative p over a finite domain; normalized means E[p] = 1."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.dtype not in (object, np.float64):
            arr = as_array(arr)
            object.__setattr__(self, "data", arr)
        if arr.size == 0:
            raise DimensionError("empty density")
        if any(v < 0 for v in arr.reshape(-1)):
            raise DomainError("density values must be nonnegative")
        arr.setflags(write=False)

    @classmethod
    def uniform(cls, shape: Sequence[int], exact: bool = True) -> "DensityFunction":
        return cls(as_array(np.ones(tuple(shape), dtype=np.int64), exact))

    @classmethod
    def from_weights(cls, weights, exact: bool = True) -> "DensityFunction":
        """Normalize arbitrary nonnegative weights to mean 1."""
        arr = as_array(weights, exact)
        m = array_mean(arr)
        if m == 0:
            raise EmptySupportError("all-zero weights cannot be normalized")
        return cls(arr / m)

    @classmethod
    def uniform_on(cls, indicator: Grid3Indicator, exact: bool = True) -> "DensityFunction":
        return cls.from_weights(indicator.bits.astype(np.int64), exact)

    @property
    def shape(self):
        return self.data.shape

    @property
    def exact(self) -> bool:
        return is_exact_array(self.data)

    def mean(self):
        return array_mean(self.data)

    def support(self) -> np.ndarray:
        return np.array([v != 0 for v in self.data.reshape(-1)]).reshape(self.data.shape)

    def is_normalized(self, tol: float = DEFAULT_TOL) -> bool:
        m = self.mean()
        return m == 1 if self.exact else abs(m - 1) <= tol


@dataclass(frozen=True)
class SubCube:
    sx: tuple
    sy: tuple
    sz: tuple

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            idx = tuple(sorted(set(int(i) for i in getattr(self, name))))
            if not idx:
                raise DimensionError(f"subcube axis {name} is empty")
            object.__setattr__(self, name, idx)

    @classmethod
    def full(cls, shape: Sequence[int]) -> "SubCube":
        return cls(*(tuple(range(n)) for n in shape))

    def size(self) -> int:
        return len(self.sx) * len(self.sy) * len(self.sz)

    def density(self, shape: Sequence[int]) -> Fraction:
        return Fraction(self.size(), int(np.prod(shape)))

    def axes(self) -> tuple[tuple, tuple, tuple]:
        return (self.sx, self.sy, self.sz)

    def to_dict(self) -> dict:
        return {"x": list(self.sx), "y": list(self.sy), "z": list(self.sz)}


# ---------------------------------------------------------------------------
# operations

def expectation(t) -> Scalar:
    """Uniform average over all cells; exact for exact arrays."""
    if isinstance(t, Grid3Indicator):
        return t.density()
    if isinstance(t, CylinderIntersection):
        return t.density()
    return array_mean(as_array(t))


def _check_index_set(idx, n: int, axis: str) -> tuple:
    idx = tuple(sorted(set(int(i) for i in idx)))
    if not idx:
        raise DimensionError(f"empty index set on axis {axis}")
    if idx[0] < 0 or idx[-1] >= n:
        raise DimensionError(f"index out of range on axis {axis}")
    return idx


def restrict(t, region):
    """Sub-grid on ``region`` (a SubCube or a tuple of index sets per axis)."""
    if isinstance(region, SubCube):
        region = region.axes()
    if isinstance(t, Grid2):
        arr, ctor = t.data, Grid2
    elif isinstance(t, Grid3Indicator):
        arr, ctor = t.bits, Grid3Indicator
    elif isinstance(t, DensityFunction):
        arr, ctor = t.data, DensityFunction
    else:
        arr, ctor = np.asarray(t), np.asarray
    if len(region) != arr.ndim:
        raise DimensionError(f"region has {len(region)} axes, grid has {arr.ndim}")
    idx = [_check_index_set(r, n, "xyz"[i]) for i, (r, n) in enumerate(zip(region, arr.shape))]
    sub = arr[np.ix_(*idx)].copy()
    return ctor(sub)


def change_of_distribution_check(p: DensityFunction, S) -> tuple[Scalar, Scalar]:
    """Both sides of E_{w~p}[S(w)] = (|S|/|Omega|) * E_{w~S}[p(w)]."""
    pv = p.data if isinstance(p, DensityFunction) else as_array(p)
    s = S.bits if isinstance(S, Grid3Indicator) else np.asarray(S).astype(bool)
    if s.shape != pv.shape:
        raise DimensionError("density and indicator shapes differ")
    n_s = int(s.sum())
    if n_s == 0:
        raise EmptySupportError("E_{w~S}[p] is undefined for empty S")
    exact = is_exact_array(pv)
    zero = Fraction(0) if exact else 0.0
    lhs = array_sum(np.where(s, pv, zero)) / pv.size
    cond = array_sum(pv[s]) / n_s
    ratio = Fraction(n_s, pv.size) if exact else n_s / pv.size
    return lhs, ratio * cond


# ---------------------------------------------------------------------------
# grid text format

def format_scalar(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?(/\d+)?$")


def parse_grid(text: str, exact: bool | None = None):
    """Parse the ``grid2``/``grid3`` text format.

    Values containing '/' force exact mode unless ``exact=False``.
    Returns a Grid2 or, for grid3, a Grid3Indicator (0/1) or a raw array.
    """
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise ParseError("empty grid file", 1)
    lineno, header = lines[0]
    parts = header.split()
    kind = parts[0]
    if kind not in ("grid2", "grid3"):
        raise ParseError(f"expected 'grid2' or 'grid3' header, got {kind!r}", lineno)
    ndim = 2 if kind == "grid2" else 3
    if len(parts) != 1 + ndim:
        raise ParseError(f"{kind} header needs {ndim} sizes", lineno)
    try:
        dims = tuple(int(p) for p in parts[1:])
    except ValueError:
        raise ParseError("sizes must be integers", lineno) from None
    if min(dims) < 1:
        raise ParseError("sizes must be positive", lineno)
    total = int(np.prod(dims))
    check_cells(total)
    tokens: list[tuple[int, str]] = []
    for i, ln in lines[1:]:
        tokens.extend((i, tok) for tok in ln.split())
    if len(tokens) != total:
        where = tokens[-1][0] if tokens else lineno
        raise ParseError(f"expected {total} values, found {len(tokens)}", where)
    use_exact = exact if exact is not None else any("/" in t for _, t in tokens) or all(
        re.fullmatch(r"[+-]?\d+", t) for _, t in tokens
    )
    vals = []
    for i, tok in tokens:
        if not _NUM.match(tok):
            raise ParseError(f"bad value {tok!r}", i)
        v = Fraction(tok)
        if v < 0:
            raise ParseError(f"negative value {tok!r}", i)
        vals.append(v if use_exact else float(v))
    arr = np.empty(total, dtype=object if use_exact else float)
    arr[:] = vals
    arr = arr.reshape(dims)
    if ndim == 2:
        return Grid2(arr)
    if all(v in (0, 1) for v in vals):
        return Grid3Indicator(np.array([int(v) for v in vals]).reshape(dims))
    return arr


def format_grid(t) -> str:
    if isinstance(t, Grid2):
        arr, kind = t.data, "grid2"
    elif isinstance(t, Grid3Indicator):
        arr, kind = t.bits.astype(np.int64), "grid3"
    elif isinstance(t, CylinderIntersection):
        arr, kind = t.to_grid3().bits.astype(np.int64), "grid3"
    else:
        arr = np.asarray(t)
        kind = f"grid{arr.ndim}"
    header = " ".join([kind] + [str(s) for s in arr.shape])
    rows = arr.reshape(-1, arr.shape[-1])
    body = "\n".join(" ".join(format_scalar(v) for v in row) for row in rows)
    return header + "\n" + body + "\n"


def read_grid(path: str, exact: bool | None = None):
    with open(path) as fh:
        return parse_grid(fh.read(), exact)


def write_grid(path: str, t) -> None:
    with open(path, "w") as fh:
        fh.write(format_grid(t))


# ---------------------------------------------------------------------------
# reports

PASS, FAIL, UNMET = "pass", "fail", "hypothesis-unmet"


def jsonable(v):
    """Fractions become {"exact": "a/b", "float": x}; arrays become lists."""
    if isinstance(v, Fraction):
        return {"exact": format_scalar(v), "float": float(v)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()] if v.dtype != object else [jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return [jsonable(x) for x in sorted(v)]
    if hasattr(v, "to_dict"):
        return jsonable(v.to_dict())
    return v


@dataclass
class AuditReport:
    """Outcome of checking one conditional statement on one input.

    ``status`` is PASS, FAIL or UNMET (the input does not satisfy the
    statement's hypotheses; the conclusion is still evaluated and reported).
    """

    name: str
    status: str
    values: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "values": jsonable(self.values),
            "hypotheses": jsonable(self.hypotheses),
            "notes": list(self.notes),
        }


def decide(name: str, hypotheses: dict, conclusion: bool, values: dict, notes=()) -> AuditReport:
    met = all(bool(v) for v in hypotheses.values())
    if not met:
        status = UNMET
    else:
        status = PASS if conclusion else FAIL
    values = dict(values)
    values.setdefault("conclusion_holds", bool(conclusion))
    return AuditReport(name, status, values, dict(hypotheses), list(notes))
