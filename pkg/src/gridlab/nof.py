"""Three-party number-on-forehead experiments for the set D.

* a constant-cost randomized protocol deciding membership in D
* exact cover numbers of D by cylinder intersections at micro scale
* local search for large cylinder intersections inside D
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .core import (
    CylinderIntersection,
    DimensionError,
    Grid3Indicator,
    __version__,
    jsonable,
)
from .evasive import FieldVector, PrimeField, build_D, evasiveness_audit, inner_product

MAX_FACE_CELLS = 16
MAX_CANDIDATES = 200_000


# ---------------------------------------------------------------------------
# randomized protocol

@dataclass
class ProtocolTranscript:
    bits_sent: dict
    accepted: bool
    seed: object
    rounds: int
    messages: dict = field(default_factory=dict)

    @property
    def total_bits(self) -> int:
        return sum(self.bits_sent.values())

    def to_dict(self) -> dict:
        return {
            "bits_sent": dict(self.bits_sent),
            "total_bits": self.total_bits,
            "accepted": self.accepted,
            "seed": self.seed,
            "rounds": self.rounds,
            "messages": {k: list(v) for k, v in self.messages.items()},
        }


def _encode(v: int, width: int) -> np.ndarray:
    return (v >> np.arange(width)) & 1


def _as_vector(v, field: PrimeField, k: int) -> FieldVector:
    if isinstance(v, FieldVector):
        return v
    if isinstance(v, (int, np.integer)):
        return FieldVector.from_index(field, k, int(v))
    return FieldVector(field, tuple(v))


def randomized_protocol(q: int, k: int, instance, r: int = 10, seed=0) -> ProtocolTranscript:
    """Decide <x,y> = <x,z> = <y,z> with 2r + 1 bits of communication.

    Player P_z sees (x, y), so it knows a = <x,y>; P_y knows b = <x,z> and P_x
    knows c = <y,z>.  With public random masks m_j, m'_j, P_z announces the
    parities <enc(a), m_j> and P_x announces <enc(c), m'_j> for j < r.  P_y
    compares both against its own parities of enc(b) and announces the
    verdict.  Members of D are always accepted; if a != b or b != c, each
    round catches it with probability 1/2.
    """
    field = PrimeField(q)
    x, y, z = (_as_vector(v, field, k) for v in instance)
    if not x.k == y.k == z.k == k:
        raise DimensionError("instance vectors must have length k")
    a, b, c = inner_product(x, y), inner_product(x, z), inner_product(y, z)
    width = max(1, (q - 1).bit_length())
    rng = np.random.default_rng(seed)
    masks_ab = rng.integers(0, 2, size=(r, width))
    masks_bc = rng.integers(0, 2, size=(r, width))
    ea, eb, ec = (_encode(v, width) for v in (a, b, c))
    from_z = masks_ab.dot(ea) % 2
    from_x = masks_bc.dot(ec) % 2
    own_ab = masks_ab.dot(eb) % 2
    own_bc = masks_bc.dot(eb) % 2
    accepted = bool(np.array_equal(from_z, own_ab) and np.array_equal(from_x, own_bc))
    return ProtocolTranscript(
        bits_sent={"P_x": int(r), "P_y": 1, "P_z": int(r)},
        accepted=accepted,
        seed=seed,
        rounds=int(r),
        messages={"P_z": from_z.tolist(), "P_x": from_x.tolist(), "P_y": [int(accepted)]},
    )


def acceptance_rate(q: int, k: int, instance, r: int, trials: int, seed: int = 0) -> tuple[float, int]:
    """Fraction of accepting runs over seeds (seed, 0), ..., (seed, trials - 1)."""
    hits = sum(randomized_protocol(q, k, instance, r, seed=[seed, i]).accepted for i in range(trials))
    return hits / trials, hits


# ---------------------------------------------------------------------------
# cylinder intersections inside D

@dataclass
class CoverNumberResult:
    exact: int | None
    lower_bound: int
    upper_bound: int
    method: str
    cover: list = field(default_factory=list)
    max_ci_size: int | None = None
    candidates: int = 0

    def to_dict(self) -> dict:
        return {
            "exact": self.exact,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "method": self.method,
            "max_ci_size": self.max_ci_size,
            "candidates": self.candidates,
            "cover": [
                {"fxy": ci.fxy.astype(int).tolist(), "gxz": ci.gxz.astype(int).tolist(),
                 "hyz": ci.hyz.astype(int).tolist()}
                for ci in self.cover
            ],
        }


def _bits(D) -> np.ndarray:
    return D.bits if isinstance(D, Grid3Indicator) else np.asarray(D).astype(bool)


def _closed_pairs(f: np.ndarray, Dz: np.ndarray) -> list[tuple[int, int]]:
    """Maximal (G, H) with f restricted to G x H inside Dz, as row/col bitmasks."""
    nx, ny = f.shape
    bad = f & ~Dz  # (x, y) pairs that may not both be selected
    out = set()
    for gmask in range(1 << nx):
        xs = [i for i in range(nx) if gmask >> i & 1]
        hmask = 0
        for j in range(ny):
            if not any(bad[i, j] for i in xs):
                hmask |= 1 << j
        ys = [j for j in range(ny) if hmask >> j & 1]
        gfull = 0
        for i in range(nx):
            if not any(bad[i, j] for j in ys):
                gfull |= 1 << i
        out.add((gfull, hmask))
    return sorted(out)


def enumerate_maximal_cis(D, max_candidates: int = MAX_CANDIDATES) -> list[tuple[int, CylinderIntersection]]:
    """Every cylinder intersection inside D that is maximal by point set.

    For each face f over (x, y) and each z, the admissible (G_z, H_z) are
    the closed pairs; a CI picks one pair per z.  Returns (point bitmask, CI)
    with the point bitmask over D's points in row-major order, or raises
    OverflowError when more than ``max_candidates`` combinations arise.
    """
    bits = _bits(D)
    nx, ny, nz = bits.shape
    pts = {tuple(map(int, w)): i for i, w in enumerate(np.argwhere(bits))}
    found: dict[int, CylinderIntersection] = {}
    total = 0
    for fmask in range(1, 1 << (nx * ny)):
        f = ((fmask >> np.arange(nx * ny)) & 1).astype(bool).reshape(nx, ny)
        choices = [_closed_pairs(f, bits[:, :, z]) for z in range(nz)]
        combos = math.prod(len(c) for c in choices)
        total += combos
        if total > max_candidates:
            raise OverflowError("too many cylinder intersections to enumerate")
        for pick in product(*choices):
            g = np.zeros((nx, nz), bool)
            h = np.zeros((ny, nz), bool)
            for z, (gm, hm) in enumerate(pick):
                g[:, z] = (gm >> np.arange(nx)) & 1
                h[:, z] = (hm >> np.arange(ny)) & 1
            F = f[:, :, None] & g[:, None, :] & h[None, :, :]
            if not F.any():
                continue
            mask = 0
            for w in np.argwhere(F):
                mask |= 1 << pts[tuple(map(int, w))]
            if mask not in found:
                # shrink faces to the projections so the CI is canonical
                found[mask] = CylinderIntersection(F.any(axis=2), F.any(axis=1), F.any(axis=0))
    masks = sorted(found, key=lambda m: (-bin(m).count("1"), m))
    maximal = [m for m in masks if not any(m != o and m & o == m for o in masks)]
    return [(m, found[m]) for m in maximal]


def _greedy_cover(universe: int, sets: list[int]) -> list[int]:
    chosen = []
    left = universe
    while left:
        best = max(range(len(sets)), key=lambda i: (bin(sets[i] & left).count("1"), -i))
        if not sets[best] & left:
            raise ValueError("sets do not cover the universe")
        chosen.append(best)
        left &= ~sets[best]
    return chosen


def _exact_cover(universe: int, sets: list[int], upper: list[int]) -> list[int]:
    """Minimum set cover by depth-first branch and bound."""
    best = list(upper)
    maxsize = max(bin(s).count("1") for s in sets)
    n_points = universe.bit_length()
    covering = [[i for i, s in enumerate(sets) if s >> p & 1] for p in range(n_points)]

    def search(left: int, chosen: list[int]):
        nonlocal best
        if not left:
            if len(chosen) < len(best):
                best = list(chosen)
            return
        need = -(-bin(left).count("1") // maxsize)
        if len(chosen) + need >= len(best):
            return
        # branch on the uncovered point with the fewest covering sets
        p = min((p for p in range(n_points) if left >> p & 1), key=lambda p: (len(covering[p]), p))
        for i in sorted(covering[p], key=lambda i: (-bin(sets[i] & left).count("1"), i)):
            chosen.append(i)
            search(left & ~sets[i], chosen)
            chosen.pop()

    search(universe, [])
    return best


def cover_number_exact(D, max_candidates: int = MAX_CANDIDATES, seed: int = 0) -> CoverNumberResult:
    """Fewest cylinder intersections inside D whose union is D."""
    bits = _bits(D)
    n = int(bits.sum())
    if n == 0:
        return CoverNumberResult(0, 0, 0, "bruteforce")
    nx, ny, nz = bits.shape
    universe = (1 << n) - 1
    if max(nx * ny, nx * nz, ny * nz) <= MAX_FACE_CELLS:
        try:
            cands = enumerate_maximal_cis(bits, max_candidates)
        except OverflowError:
            cands = None
        if cands is not None:
            sets = [m for m, _ in cands]
            greedy = _greedy_cover(universe, sets)
            best = _exact_cover(universe, sets, greedy)
            maxsize = max(bin(s).count("1") for s in sets)
            cover = [cands[i][1] for i in best]
            for ci in cover:
                assert not (ci.to_grid3().bits & ~bits).any()
            return CoverNumberResult(len(best), -(-n // maxsize), len(greedy), "bruteforce",
                                     cover, maxsize, len(cands))
    cover = greedy_ci_cover(bits, seed=seed)
    return CoverNumberResult(None, 1, len(cover), "greedy", cover, None, 0)


# ---------------------------------------------------------------------------
# local search

def _ci_points(f, g, h) -> np.ndarray:
    return f[:, :, None] & g[:, None, :] & h[None, :, :]


def _grow(faces, bits, weight, rng) -> None:
    """Switch on face cells in random order while F stays inside D."""
    cells = [(a, i, j) for a in range(3) for i in range(faces[a].shape[0]) for j in range(faces[a].shape[1])
             if not faces[a][i, j]]
    rng.shuffle(cells)
    changed = True
    while changed:
        changed = False
        scored = []
        for a, i, j in cells:
            if faces[a][i, j]:
                continue
            faces[a][i, j] = True
            F = _ci_points(*faces)
            faces[a][i, j] = False
            if (F & ~bits).any():
                continue
            scored.append((-int(weight[F].sum()), a, i, j))
        if scored:
            # take the best gain; random order already broke ties
            _, a, i, j = min(scored, key=lambda s: s[0])
            faces[a][i, j] = True
            changed = True


def max_monochromatic_ci(D, restarts: int = 20, seed: int = 0, weight=None, perturb: int = 3):
    """Large cylinder intersection inside D by randomized local search.

    Returns (ci, size, history) where ``history[i]`` is the best size after
    restart i (non-decreasing).  With ``weight`` the search maximizes the
    weighted count instead of the size.
    """
    bits = _bits(D)
    nx, ny, nz = bits.shape
    wt = np.ones(bits.shape, np.int64) if weight is None else np.asarray(weight, np.int64)
    rng = np.random.default_rng(seed)
    best, best_val, history = None, -1, []
    for _ in range(max(1, restarts)):
        faces = [np.zeros((nx, ny), bool), np.zeros((nx, nz), bool), np.zeros((ny, nz), bool)]
        _grow(faces, bits, wt, rng)
        cur = [f.copy() for f in faces]
        cur_val = int(wt[_ci_points(*cur)].sum())
        for _ in range(perturb):
            trial = [f.copy() for f in cur]
            on = [(a, i, j) for a in range(3) for i, j in zip(*np.nonzero(trial[a]))]
            if on:
                for idx in rng.choice(len(on), size=min(2, len(on)), replace=False):
                    a, i, j = on[idx]
                    trial[a][i, j] = False
            _grow(trial, bits, wt, rng)
            val = int(wt[_ci_points(*trial)].sum())
            if val >= cur_val:
                cur, cur_val = trial, val
        if cur_val > best_val:
            best, best_val = cur, cur_val
        history.append(best_val)
    F = _ci_points(*best)
    ci = CylinderIntersection(F.any(axis=2), F.any(axis=1), F.any(axis=0))
    return ci, int(F.sum()), history


def greedy_ci_cover(D, seed: int = 0, restarts: int = 5) -> list[CylinderIntersection]:
    """Cover D by repeatedly taking a CI that covers many uncovered points."""
    bits = _bits(D)
    left = bits.copy()
    cover = []
    step = 0
    while left.any():
        ci, _, _ = max_monochromatic_ci(bits, restarts, seed + step, weight=left.astype(np.int64))
        F = ci.to_grid3().bits
        if not (F & left).any():
            w = tuple(np.argwhere(left)[0])
            F = np.zeros(bits.shape, bool)
            F[w] = True
            ci = CylinderIntersection.from_points(Grid3Indicator(F))
        cover.append(ci)
        left &= ~F
        step += 1
    return cover


# ---------------------------------------------------------------------------
# report

def separation_report(q: int, k: int, r: int = 10, seed: int = 0, trials: int = 1000,
                      d: int = 4, completeness_seeds: int = 20) -> dict:
    """Randomized cost, error and density of D next to its cover-number bounds."""
    D = build_D(q, k)
    bits = D.bits
    N = q ** k
    members = [tuple(map(int, w)) for w in np.argwhere(bits)]
    complete = all(
        randomized_protocol(q, k, w, r, seed=[seed, s, i]).accepted
        for i, w in enumerate(members[:256]) for s in range(completeness_seeds)
    )
    outsiders = [tuple(map(int, w)) for w in np.argwhere(~bits)]
    soundness = None
    if outsiders:
        rng = np.random.default_rng(seed)
        w = outsiders[int(rng.integers(len(outsiders)))]
        rate, hits = acceptance_rate(q, k, w, r, trials, seed)
        sigma = math.sqrt(2.0 ** -r * (1 - 2.0 ** -r) / trials)
        soundness = {"instance": list(w), "false_accept_rate": rate, "accepts": hits, "trials": trials,
                     "bound": 2.0 ** -r + 3 * sigma}
    bits_sent = randomized_protocol(q, k, (0, 0, 0), r, seed=seed).total_bits
    report: dict = {
        "version": __version__,
        "q": q,
        "k": k,
        "N": N,
        "r": r,
        "seed": seed,
        "density": D.density(),
        "protocol": {"bits_sent": bits_sent, "complete": complete, "soundness": soundness},
    }
    if N <= 16:
        report["evasiveness"] = evasiveness_audit(D, d).to_dict()
    cn = cover_number_exact(D, seed=seed)
    report["cover_number"] = {k_: v for k_, v in cn.to_dict().items() if k_ != "cover"}
    if cn.exact is None:
        _, size, _ = max_monochromatic_ci(D, restarts=10, seed=seed)
        report["cover_number"]["heuristic_max_ci"] = size
    return jsonable(report)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)
