"""Certified segment-cover profiles for counted affine predictors.

A leaf's rank function is a step function, so it is pinned down by a finite
set of *control keys*: every stored key in the leaf plus the right end of
every gap (``x - 1``) and the leaf's own boundary points.  A block of control
points is Delta-linear when one affine map stays within Delta of every rank
on it; ``Comp(Delta)`` is the minimum number of contiguous Delta-linear blocks.

Feasibility is decided exactly.  Keys and ranks are integers, and the
incremental convex-hull test below only ever compares slopes by integer
cross-multiplication, so no rounding enters the certificate.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import KeySet, LeafInterval, rank, rank_diameter


class CertificateError(ValueError):
    """A sandwich or witness failed its own check."""


class SampledCurveError(ValueError):
    """A sampled (trace) curve was passed where a certificate is required."""


@dataclass(frozen=True)
class ControlCurve:
    keys: tuple[int, ...]
    ranks: tuple[int, ...]
    certified: bool = True

    def __post_init__(self):
        if len(self.keys) != len(self.ranks):
            raise ValueError("keys and ranks differ in length")
        if any(b <= a for a, b in zip(self.keys, self.keys[1:])):
            raise ValueError("control keys must be strictly increasing")
        if any(b < a for a, b in zip(self.ranks, self.ranks[1:])):
            raise ValueError("ranks must be nondecreasing")

    @property
    def N(self) -> int:
        return len(self.keys)

    @classmethod
    def from_points(cls, keys: Sequence[int], ranks: Sequence[int], certified: bool = True) -> "ControlCurve":
        return cls(tuple(int(k) for k in keys), tuple(int(r) for r in ranks), certified)

    @classmethod
    def sampled(cls, keyset: KeySet, trace: Iterable[int]) -> "ControlCurve":
        """Curve on trace keys only; usable as a diagnostic, never as a certificate."""
        ks = sorted(set(int(q) for q in trace))
        return cls(tuple(ks), tuple(rank(keyset, q) for q in ks), certified=False)


def control_keys(keyset: KeySet, interval: LeafInterval) -> np.ndarray:
    """Stored keys of the interval plus the gap endpoints where the rank can change.

    For an unbounded interval the tail beyond the last stored key has the
    same rank as that key; predictors clamp queries into the control range,
    so the tail needs no extra point.
    """
    start, stop = interval.index_range(keyset)
    stored = keyset.keys[start:stop]
    pts = [stored]
    if stored.size:
        before = stored - np.uint64(1)
        ok = stored > np.uint64(interval.lo)
        pts.append(before[ok])
    pts.append(np.array([interval.lo], dtype=np.uint64))
    if interval.hi is not None:
        pts.append(np.array([interval.hi - 1], dtype=np.uint64))
    elif stored.size == 0:
        pass
    keys = np.unique(np.concatenate(pts))
    if interval.hi is None and stored.size:
        keys = keys[keys <= stored[-1]]
    return keys


def control_curve(keyset: KeySet, interval: LeafInterval) -> ControlCurve:
    keys = control_keys(keyset, interval)
    ranks = np.searchsorted(keyset.keys, keys, side="right")
    return ControlCurve(tuple(int(k) for k in keys), tuple(int(r) for r in ranks), True)


# -- exact feasibility ------------------------------------------------------

def _slope_lt(a: tuple[int, int], b: tuple[int, int]) -> bool:
    # slopes as (dx, dy); dx of both operands share a sign
    return a[1] * b[0] < a[0] * b[1]


def _slope_gt(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[1] * b[0] > a[0] * b[1]


def _sub(p, q) -> tuple[int, int]:
    return (p[0] - q[0], p[1] - q[1])


def _cross(o, a, b) -> int:
    oa = _sub(a, o)
    ob = _sub(b, o)
    return oa[0] * ob[1] - oa[1] * ob[0]


class SegmentHull:
    """Streaming test for whether the points seen so far admit one line within +-delta.

    Maintains the lower hull of the upper-shifted points and the upper hull of
    the lower-shifted points, together with the two extreme separating lines
    (O'Rourke's algorithm, as used by optimal PLA builders).  ``add`` returns
    False, and leaves the hull unchanged, when the new point breaks feasibility.
    """

    def __init__(self, delta: int):
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        self.delta = delta
        self.count = 0
        self.upper: list[tuple[int, int]] = []
        self.lower: list[tuple[int, int]] = []
        self.upper_start = 0
        self.lower_start = 0
        self.rect: list[Optional[tuple[int, int]]] = [None] * 4
        self.last_x: Optional[int] = None

    def add(self, x: int, y: int) -> bool:
        if self.last_x is not None and x <= self.last_x:
            raise ValueError("points must arrive with increasing x")
        p1 = (x, y + self.delta)
        p2 = (x, y - self.delta)
        rect = self.rect
        if self.count == 0:
            rect[0], rect[1] = p1, p2
            self.upper = [p1]
            self.lower = [p2]
            self.upper_start = self.lower_start = 0
        elif self.count == 1:
            rect[2], rect[3] = p2, p1
            self.upper.append(p1)
            self.lower.append(p2)
        else:
            slope1 = _sub(rect[2], rect[0])
            slope2 = _sub(rect[3], rect[1])
            if _slope_lt(_sub(p1, rect[2]), slope1) or _slope_gt(_sub(p2, rect[3]), slope2):
                return False
            if _slope_lt(_sub(p1, rect[1]), slope2):
                lower = self.lower
                best = _sub(lower[self.lower_start], p1)
                best_i = self.lower_start
                for i in range(self.lower_start + 1, len(lower)):
                    val = _sub(lower[i], p1)
                    if _slope_gt(val, best):
                        break
                    best, best_i = val, i
                rect[1], rect[3] = lower[best_i], p1
                self.lower_start = best_i
                up = self.upper
                end = len(up)
                while end >= self.upper_start + 2 and _cross(up[end - 2], up[end - 1], p1) <= 0:
                    end -= 1
                del up[end:]
                up.append(p1)
            if _slope_gt(_sub(p2, rect[0]), slope1):
                upper = self.upper
                best = _sub(upper[self.upper_start], p2)
                best_i = self.upper_start
                for i in range(self.upper_start + 1, len(upper)):
                    val = _sub(upper[i], p2)
                    if _slope_lt(val, best):
                        break
                    best, best_i = val, i
                rect[0], rect[2] = upper[best_i], p2
                self.upper_start = best_i
                lo = self.lower
                end = len(lo)
                while end >= self.lower_start + 2 and _cross(lo[end - 2], lo[end - 1], p2) >= 0:
                    end -= 1
                del lo[end:]
                lo.append(p2)
        self.count += 1
        self.last_x = x
        return True

    def slope_range(self) -> tuple[Fraction, Fraction]:
        if self.count == 0:
            raise ValueError("empty hull")
        if self.count == 1:
            return Fraction(0), Fraction(0)
        s1 = _sub(self.rect[2], self.rect[0])
        s2 = _sub(self.rect[3], self.rect[1])
        return Fraction(s1[1], s1[0]), Fraction(s2[1], s2[0])


@dataclass(frozen=True)
class Witness:
    """Affine predictor ``slope * q + intercept`` with exact rational coefficients."""

    slope: Fraction
    intercept: Fraction

    def __call__(self, q: int) -> Fraction:
        return self.slope * q + self.intercept


def fit_witness(keys: Sequence[int], ranks: Sequence[int], slope: Fraction, delta: int) -> Optional[Witness]:
    lo = max(Fraction(r - delta) - slope * k for k, r in zip(keys, ranks))
    hi = min(Fraction(r + delta) - slope * k for k, r in zip(keys, ranks))
    if lo > hi:
        return None
    return Witness(slope, (lo + hi) / 2)


def is_delta_linear(curve: ControlCurve, a: int, b: int, delta: int) -> tuple[bool, Optional[Witness]]:
    """Exact feasibility of one affine map on points ``a..b`` (1-based, inclusive)."""
    if a > b:
        raise ValueError("reversed block indices")
    if a < 1 or b > curve.N:
        raise IndexError("block outside the curve")
    hull = SegmentHull(delta)
    keys = curve.keys[a - 1:b]
    ranks = curve.ranks[a - 1:b]
    for k, r in zip(keys, ranks):
        if not hull.add(k, r):
            return False, None
    u_min, u_max = hull.slope_range()
    w = fit_witness(keys, ranks, (u_min + u_max) / 2, delta)
    if w is None:
        raise CertificateError("hull accepted a block without a witness line")
    return True, w


def replay_error(curve: ControlCurve, a: int, b: int, witness: Witness) -> Fraction:
    return max(abs(witness(k) - r) for k, r in zip(curve.keys[a - 1:b], curve.ranks[a - 1:b]))


@dataclass(frozen=True)
class Block:
    a: int  # 1-based first control point
    b: int  # 1-based last control point
    witness: Witness


def _reach(curve: ControlCurve, a: int, delta: int) -> int:
    hull = SegmentHull(delta)
    b = a - 1
    for k, r in zip(curve.keys[a - 1:], curve.ranks[a - 1:]):
        if not hull.add(k, r):
            break
        b += 1
    return b


def min_segment_cover(curve: ControlCurve, delta: int) -> tuple[int, list[Block]]:
    """Minimum number of contiguous delta-linear blocks covering the curve.

    D[b] = 1 + min{D[a-1] : [a, b] delta-linear}, D[0] = 0.  Feasibility is
    hereditary, so the feasible ``a`` for each ``b`` form a suffix and D is
    nondecreasing; the smallest feasible ``a`` is tracked with one pointer
    and its reach is computed with the exact hull.
    """
    N = curve.N
    if N == 0:
        raise ValueError("empty curve")
    D = [0] * (N + 1)
    back = [0] * (N + 1)
    a = 1
    reach = _reach(curve, 1, delta)
    for b in range(1, N + 1):
        while reach < b:
            a += 1
            reach = _reach(curve, a, delta)
        D[b] = 1 + D[a - 1]
        back[b] = a
    blocks: list[Block] = []
    b = N
    while b > 0:
        a = back[b]
        ok, w = is_delta_linear(curve, a, b, delta)
        if not ok:
            raise CertificateError(f"cover block [{a}, {b}] failed re-verification")
        blocks.append(Block(a, b, w))
        b = a - 1
    blocks.reverse()
    if len(blocks) != D[N]:
        raise CertificateError("cover size disagrees with the DP value")
    return D[N], blocks


def cone_cover(curve: ControlCurve, delta: int) -> int:
    """Anchored shrinking-cone cover: every block's line passes through its first point.

    Never smaller than the optimum; used as the upper side of a sandwich.
    """
    N = curve.N
    if N == 0:
        raise ValueError("empty curve")
    count = 0
    i = 0
    keys, ranks = curve.keys, curve.ranks
    while i < N:
        count += 1
        x0, y0 = keys[i], ranks[i]
        lo = hi = None
        j = i + 1
        while j < N:
            dx = keys[j] - x0
            s_lo = Fraction(ranks[j] - delta - y0, dx)
            s_hi = Fraction(ranks[j] + delta - y0, dx)
            new_lo = s_lo if lo is None else max(lo, s_lo)
            new_hi = s_hi if hi is None else min(hi, s_hi)
            if new_lo > new_hi:
                break
            lo, hi = new_lo, new_hi
            j += 1
        i = j
    return count


@dataclass
class ProfileCurve:
    """Comp(Delta) on a radius grid; Comp(R) = 0 by the empty-predictor convention."""

    interval_id: int
    diameter: int
    values: dict[int, int] = field(default_factory=dict)
    certified: bool = True

    def __post_init__(self):
        self.values[self.diameter] = 0

    def __call__(self, delta: int) -> int:
        """Comp at ``delta``, read from the largest grid radius not above it."""
        if delta >= self.diameter:
            return 0
        best = None
        for d in sorted(self.values):
            if d <= delta:
                best = self.values[d]
        if best is None:
            raise KeyError(f"radius {delta} is below the profile grid")
        return best

    @property
    def grid(self) -> list[int]:
        return sorted(self.values)

    def options(self) -> list[tuple[int, int]]:
        return [(d, self.values[d]) for d in self.grid]

    def is_monotone(self) -> bool:
        vals = [self.values[d] for d in self.grid]
        return all(b <= a for a, b in zip(vals, vals[1:]))


def default_grid(diameter: int) -> list[int]:
    """Powers of two below the diameter, plus 0 and the diameter itself."""
    grid = {0, diameter}
    d = 1
    while d < diameter:
        grid.add(d)
        d *= 2
    return sorted(grid)


def profile_from_curve(curve: ControlCurve, diameter: int, grid: Sequence[int], interval_id: int = 0,
                       cover: Callable[[ControlCurve, int], int] | None = None) -> ProfileCurve:
    if not curve.certified:
        raise SampledCurveError("sampled curves cannot produce a certified profile")
    if list(grid) != sorted(grid):
        raise ValueError("radius grid must be ascending")
    cover = cover or (lambda c, d: min_segment_cover(c, d)[0])
    prof = ProfileCurve(interval_id, diameter)
    for d in grid:
        if d < diameter:
            prof.values[d] = cover(curve, d)
    # running minimum keeps the curve nonincreasing if the grid is coarse
    best = None
    for d in prof.grid:
        best = prof.values[d] if best is None else min(best, prof.values[d])
        prof.values[d] = best
    return prof


def profile_curve(keyset: KeySet, interval: LeafInterval, grid: Optional[Sequence[int]] = None,
                  interval_id: int = 0) -> ProfileCurve:
    R = rank_diameter(keyset, interval)
    curve = control_curve(keyset, interval)
    return profile_from_curve(curve, R, grid if grid is not None else default_grid(R), interval_id)


def sandwich_quality(lower: Callable[[int], int], upper: Callable[[int], int], radii: Iterable[int]) -> float:
    gamma = 1.0
    for d in radii:
        lo, up = lower(d), upper(d)
        if lo > up:
            raise CertificateError(f"lower bound {lo} exceeds upper bound {up} at radius {d}")
        gamma = max(gamma, up / max(1, lo))
    return gamma


def brute_force_cover(curve: ControlCurve, delta: int) -> int:
    """Exhaustive minimum over contiguous covers (small N only).

    Covers are enumerated by block count, so every cover with fewer blocks
    than the answer is checked and rejected.
    """
    N = curve.N
    if N > 22:
        raise ValueError("brute force is limited to small curves")
    feasible = {}
    for a in range(1, N + 1):
        for b in range(a, N + 1):
            feasible[a, b] = is_delta_linear(curve, a, b, delta)[0]
    for k in range(1, N + 1):
        for cuts in itertools.combinations(range(1, N), k - 1):
            bounds = [0, *cuts, N]
            if all(feasible[s + 1, e] for s, e in zip(bounds, bounds[1:])):
                return k
    return N


def write_profiles_csv(profiles: Iterable[ProfileCurve], out: io.TextIOBase | None = None) -> str:
    buf = out or io.StringIO()
    w = csv.writer(buf)
    w.writerow(["interval_id", "delta", "atoms", "certified_flag"])
    for prof in profiles:
        for d in prof.grid:
            w.writerow([prof.interval_id, d, prof.values[d], int(prof.certified)])
    return buf.getvalue() if isinstance(buf, io.StringIO) else ""


def read_profiles_csv(text: str) -> list[ProfileCurve]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out: list[ProfileCurve] = []
    for iid, group in itertools.groupby(rows, key=lambda r: int(r["interval_id"])):
        group = list(group)
        values = {int(r["delta"]): int(r["atoms"]) for r in group}
        diameter = max(d for d, a in values.items() if a == 0)
        prof = ProfileCurve(iid, diameter, values, certified=bool(int(group[0]["certified_flag"])))
        out.append(prof)
    return out
