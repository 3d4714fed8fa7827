"""Exact rank engines with comparison meters.

All five engines share one lookup path (route to a piece, predict, repair
inside the certified window) and differ only in how the pieces are built
and how a query reaches its piece:

* ``binary``   one empty piece, so repair is a plain binary search;
* ``pla``      greedy maximal +-eps segments, ordered search over segments;
* ``spline``   greedy spline knots behind a radix table;
* ``shadow-o`` shadow-price allocation with an alphabetic directory;
* ``shadow-r`` shadow-price allocation with a radix router.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .._kernels import bounded_search_batch
from ..alloc import Allocation, greedy_allocate
from ..core import KeySet, Workload
from ..directory import (DirectoryTree, RadixRouter, bounded_search, build_alphabetic, radix_router,
                         route, route_batch)
from .pieces import SEGMENT_BYTES, Pieces, control_arrays, empty_piece, segment_cover, spline_pieces

KNOT_BYTES = 16
MAX_COARSE_LEAVES = 4096


class IntegrityError(RuntimeError):
    """A certified window did not contain the true answer."""


@dataclass
class LookupMetrics:
    route_comparisons: int
    repair_comparisons: int
    window: int
    fallback: bool = False


@dataclass
class BatchMetrics:
    route_comparisons: np.ndarray
    repair_comparisons: np.ndarray
    window: np.ndarray
    fallback: np.ndarray

    def __getitem__(self, i) -> LookupMetrics:
        return LookupMetrics(int(self.route_comparisons[i]), int(self.repair_comparisons[i]),
                             int(self.window[i]), bool(self.fallback[i]))


def repair_search(keys: np.ndarray, lo: int, hi: int, q: int) -> tuple[int, int]:
    """Exact rank inside a certified window ``[lo, hi]``.

    The certificate is audited first with two unmetered probes; a violation
    raises instead of widening the search.
    """
    n = keys.size
    lo, hi = max(lo, 0), min(hi, n)
    if lo > hi or (lo > 0 and int(keys[lo - 1]) > q) or (hi < n and int(keys[hi]) <= q):
        raise IntegrityError(f"true rank of {q} lies outside window [{lo}, {hi}]")
    return bounded_search(keys, q, lo, hi)


def repair_bound(window: int) -> int:
    return math.ceil(math.log2(window + 2))


@dataclass
class RoutedIndex:
    family: str
    config: str
    keys: np.ndarray
    pieces: Pieces
    router: object  # None (ordered search over pieces), DirectoryTree or RadixRouter
    atoms: int
    budget: Optional[int] = None
    model_bytes: int = 0
    directory_bytes: int = 0
    repair_program_bytes: int = 0
    build_ms: float = 0.0
    allocation: Optional[Allocation] = None
    _first: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._first = self.pieces.first
        p = self.pieces
        # plain Python copies for the scalar path
        self._py = (p.x0.tolist(), p.xmax.tolist(), p.slope.tolist(), p.icpt.tolist(),
                    p.emin.tolist(), p.emax.tolist(), p.rlo.tolist(), p.rhi.tolist())

    @property
    def name(self) -> str:
        return f"{self.family}({self.config})" if self.config else self.family

    @property
    def total_bytes(self) -> int:
        return self.model_bytes + self.directory_bytes + self.repair_program_bytes

    @property
    def n(self) -> int:
        return int(self.keys.size)

    # -- routing --
    def route(self, q: int) -> tuple[int, int, bool]:
        r = self.router
        if r is None:
            s, c = bounded_search(self._first, q, 1, self.pieces.count)
            return s - 1, c, False
        if isinstance(r, DirectoryTree):
            s, c = route(r, q)
            return s, c, False
        return r.route(q)

    def route_batch(self, qs: np.ndarray):
        r = self.router
        m = qs.size
        if r is None:
            lo = np.ones(m, np.int64)
            hi = np.full(m, self.pieces.count, np.int64)
            s, c = bounded_search_batch(self._first, qs, lo, hi)
            return s - 1, c, np.zeros(m, bool)
        if isinstance(r, DirectoryTree):
            s, c = route_batch(r, qs)
            return s, c, np.zeros(m, bool)
        return r.route_batch(qs)

    # -- lookups --
    def window(self, s: int, q: int) -> tuple[int, int]:
        x0, xmax, slope, icpt, emin, emax, rlo, rhi = (a[s] for a in self._py)
        qc = min(max(q, x0), xmax)
        fp = math.floor(icpt + slope * float(qc - x0))
        return max(rlo, fp + emin), min(rhi, fp + emax)

    def lookup(self, q: int) -> tuple[int, LookupMetrics]:
        q = int(q)
        s, rc, fb = self.route(q)
        lo, hi = self.window(s, q)
        r, c = repair_search(self.keys, lo, hi, q)
        return r, LookupMetrics(rc, c, hi - lo + 1, fb)

    def rank(self, q: int) -> int:
        return self.lookup(q)[0]

    def lookup_batch(self, qs: np.ndarray, audit: bool = True) -> tuple[np.ndarray, BatchMetrics]:
        qs = np.asarray(qs, dtype=np.uint64)
        s, rc, fb = self.route_batch(qs)
        lo, hi = self.window_batch(s, qs)
        if audit:
            self.audit(qs, lo, hi)
        r, c = bounded_search_batch(self.keys, qs, lo, hi)
        return r, BatchMetrics(rc, c, hi - lo + 1, fb)

    def window_batch(self, s: np.ndarray, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.pieces
        fp = _predict(p.slope[s], p.icpt[s], p.x0[s], p.xmax[s], qs)
        lo = np.maximum(p.rlo[s], fp + p.emin[s])
        hi = np.minimum(p.rhi[s], fp + p.emax[s])
        return lo, hi

    def audit(self, qs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        keys = self.keys
        n = keys.size
        below_ok = (lo == 0) | (keys[np.maximum(lo - 1, 0)] <= qs)
        above_ok = (hi >= n) | (keys[np.minimum(hi, n - 1)] > qs)
        bad = ~(below_ok & above_ok & (lo <= hi))
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            raise IntegrityError(f"{self.name}: rank of {int(qs[i])} outside window [{lo[i]}, {hi[i]}]")


def _predict(slope, icpt, x0, xmax, q):
    qc = np.minimum(np.maximum(q, x0), xmax)
    return np.floor(icpt + slope * (qc - x0).astype(np.float64)).astype(np.int64)


def lookup(index: RoutedIndex, q: int) -> tuple[int, LookupMetrics]:
    return index.lookup(q)


# -- builders ------------------------------------------------------------------

def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        idx = fn(*args, **kwargs)
        idx.build_ms = (time.perf_counter() - t0) * 1e3
        return idx
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def build_binary(keyset: KeySet) -> RoutedIndex:
    cx, cy = control_arrays(keyset)
    return RoutedIndex("Binary", "", keyset.keys, empty_piece(cx, cy, 0, cx.size), None, atoms=0)


@_timed
def build_epsilon_pla(keyset: KeySet, eps: int) -> RoutedIndex:
    if eps < 1:
        raise ValueError("eps must be at least 1")
    cx, cy = control_arrays(keyset)
    pcs = segment_cover(cx, cy, 0, cx.size, eps)
    return RoutedIndex("PGM", str(eps), keyset.keys, pcs, None, atoms=pcs.count,
                       model_bytes=pcs.count * SEGMENT_BYTES)


@_timed
def build_radix_spline(keyset: KeySet, eps: int, radix_bits: int = 18) -> RoutedIndex:
    if eps < 1:
        raise ValueError("eps must be at least 1")
    cx, cy = control_arrays(keyset)
    pcs = spline_pieces(cx, cy, eps)
    router = radix_router(pcs.first[1:], int(keyset.keys[-1]), radix_bits, entry_bytes=4)
    return RoutedIndex("RS", str(eps), keyset.keys, pcs, router, atoms=pcs.count,
                       model_bytes=(pcs.count + 1) * KNOT_BYTES, directory_bytes=router.nbytes)


def coarse_leaf_count(n: int) -> int:
    """Power of two nearest sqrt(n), capped."""
    if n <= 1:
        return 1
    k = round(math.log2(math.sqrt(n)))
    return int(min(1 << max(k, 0), MAX_COARSE_LEAVES, n))


def radius_grid(R: int) -> list[int]:
    grid = []
    d = 1
    while d < R:
        grid.append(d)
        d *= 2
    return grid


@dataclass
class ShadowPlan:
    """Coarse leaves, their profiles and the greedy allocation over them."""

    bounds: np.ndarray  # control-point index boundaries, length m+1
    masses: np.ndarray
    diameters: np.ndarray
    profiles: list
    allocation: Allocation


def _range_masses(cx: np.ndarray, starts: np.ndarray, workload: Workload) -> np.ndarray:
    """Workload mass on each run of control points beginning at ``starts``."""
    firsts = cx[starts].copy()
    firsts[0] = 0
    cum = np.concatenate([[0.0], np.cumsum(workload.probs)])
    pos = np.searchsorted(workload.support, firsts, side="left")
    edges = np.append(pos, workload.support.size)
    return cum[edges[1:]] - cum[edges[:-1]]


def plan_shadow(keyset: KeySet, workload: Workload, budget: int, cx=None, cy=None,
                leaves: Optional[int] = None) -> ShadowPlan:
    if cx is None:
        cx, cy = control_arrays(keyset)
    n = keyset.n
    m = leaves or coarse_leaf_count(n)
    cut_pos = np.unique((np.arange(1, m, dtype=np.int64) * n) // m)
    cut_pos = cut_pos[cut_pos > 0]
    bounds = np.concatenate([[0], np.searchsorted(cx, keyset.keys[cut_pos], side="left"), [cx.size]])
    masses = _range_masses(cx, bounds[:-1], workload)
    diam = cy[bounds[1:] - 1] - cy[bounds[:-1]] + 1
    profiles = []
    for j in range(bounds.size - 1):
        R = int(diam[j])
        opts = [(R, 0)]
        if masses[j] > 0 and budget > 0:
            for d in reversed(radius_grid(R)):
                got = segment_cover(cx, cy, int(bounds[j]), int(bounds[j + 1]), d, max_segments=budget)
                cnt = got if isinstance(got, int) else got.count
                if cnt > budget:
                    break
                opts.append((d, cnt))
        profiles.append(sorted(opts))
    alloc = greedy_allocate(profiles, masses, budget)
    return ShadowPlan(bounds, masses, diam, profiles, alloc)


@_timed
def build_shadow(keyset: KeySet, workload: Workload, budget: int, variant: str = "ordered",
                 radix_bits: int = 18, leaves: Optional[int] = None) -> RoutedIndex:
    """Atom-budgeted index: allocate radii by shadow price, then route over the pieces.

    Leaves that receive atoms are split into their certified segments;
    runs of leaves left at full repair are merged into one empty piece.
    The directory is rebuilt over the final pieces with their query masses.
    """
    if variant not in ("ordered", "radix"):
        raise ValueError("variant must be 'ordered' or 'radix'")
    cx, cy = control_arrays(keyset)
    plan = plan_shadow(keyset, workload, budget, cx, cy, leaves)
    alloc = plan.allocation
    parts: list[Pieces] = []
    run_start = None
    atoms = 0
    for j in range(plan.bounds.size - 1):
        lo, hi = int(plan.bounds[j]), int(plan.bounds[j + 1])
        d = alloc.radii[j]
        if d >= plan.diameters[j]:
            if run_start is None:
                run_start = lo
            continue
        if run_start is not None:
            parts.append(empty_piece(cx, cy, run_start, lo))
            run_start = None
        pcs = segment_cover(cx, cy, lo, hi, d)
        if pcs.count != alloc.atoms[j]:
            raise RuntimeError(f"leaf {j}: cover size {pcs.count} disagrees with profile {alloc.atoms[j]}")
        atoms += pcs.count
        parts.append(pcs)
    if run_start is not None:
        parts.append(empty_piece(cx, cy, run_start, cx.size))
    pcs = Pieces.concat(parts)
    if atoms > budget:
        raise RuntimeError("allocation exceeded the atom budget")
    first = pcs.first
    if variant == "ordered":
        masses = _range_masses(cx, pcs.start, workload)
        router = build_alphabetic(masses, first[1:]) if pcs.count > 1 else build_alphabetic([1.0])
        family = "Shadow-O"
    else:
        router = radix_router(first[1:], int(keyset.keys[-1]), radix_bits, entry_bytes=8)
        family = "Shadow-R"
    return RoutedIndex(family, str(budget), keyset.keys, pcs, router, atoms=atoms, budget=budget,
                       model_bytes=atoms * SEGMENT_BYTES, directory_bytes=router.nbytes, allocation=alloc)


ENGINE_FAMILIES = ("binary", "pla", "spline", "shadow-o", "shadow-r")


def build_engine(family: str, keyset: KeySet, *, eps: int = 32, budget: int = 1024, radix_bits: int = 18,
                 workload: Optional[Workload] = None) -> RoutedIndex:
    if family == "binary":
        return build_binary(keyset)
    if family == "pla":
        return build_epsilon_pla(keyset, eps)
    if family == "spline":
        return build_radix_spline(keyset, eps, radix_bits)
    if family in ("shadow-o", "shadow-r"):
        if workload is None:
            raise ValueError("shadow engines need a workload")
        return build_shadow(keyset, workload, budget, "ordered" if family == "shadow-o" else "radix", radix_bits)
    raise ValueError(f"unknown engine family {family!r}")
