"""Ordered key sets, workloads, leaf intervals and the exact rank oracle.

Everything else in the package is checked against :func:`rank` and
:func:`predecessor`, which are plain binary searches over a sorted
``uint64`` array.  Rank follows the "count of keys <= q" convention.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

KEY_DTYPE = np.uint64
UNIVERSE_MAX = (1 << 64) - 1
NORMALIZATION_TOL = 1e-12


class EmptyConditionalError(ValueError):
    """Raised when a workload is restricted to an interval of zero mass."""


class UnnormalizedMassError(ValueError):
    pass


def as_keys(values: Iterable[int] | np.ndarray) -> np.ndarray:
    if not isinstance(values, np.ndarray):
        # plain ints: numpy would widen a mix of large and small values to float64
        values = list(values)
        if any(int(v) < 0 for v in values):
            raise ValueError("keys must be non-negative")
        return np.fromiter((int(v) for v in values), dtype=KEY_DTYPE, count=len(values))
    arr = values
    if arr.dtype == KEY_DTYPE:
        return arr
    if arr.size and arr.dtype.kind in "iu" and arr.min() < 0:
        raise ValueError("keys must be non-negative")
    if arr.dtype.kind == "O" or arr.dtype.kind == "f":
        return np.fromiter((int(v) for v in arr.ravel()), dtype=KEY_DTYPE, count=arr.size)
    return arr.astype(KEY_DTYPE)


def entropy_bits(probs: Iterable[float]) -> float:
    """Shannon entropy in bits; zero-probability terms contribute nothing."""
    return math.fsum(-p * math.log2(p) for p in probs if p > 0.0)


@dataclass(frozen=True)
class KeySet:
    keys: np.ndarray

    def __post_init__(self):
        keys = as_keys(self.keys)
        if keys.ndim != 1:
            raise ValueError("keys must be one-dimensional")
        if keys.size > 1 and not np.all(keys[1:] > keys[:-1]):
            raise ValueError("keys must be strictly increasing (duplicates are rejected)")
        keys.setflags(write=False)
        object.__setattr__(self, "keys", keys)

    @classmethod
    def from_unsorted(cls, values) -> "KeySet":
        return cls(np.unique(as_keys(values)))

    @property
    def n(self) -> int:
        return int(self.keys.size)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i) -> int:
        return int(self.keys[i])

    def rank(self, q: int) -> int:
        return rank(self, q)

    def predecessor(self, q: int) -> Optional[int]:
        return predecessor(self, q)

    def rank_many(self, queries: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.keys, as_keys(queries), side="right").astype(np.int64)


def rank(keyset: KeySet, q: int) -> int:
    """Number of stored keys <= q."""
    if keyset.n == 0:
        raise ValueError("rank on an empty key set")
    if q < 0:
        return 0
    if q > UNIVERSE_MAX:
        return keyset.n
    return int(np.searchsorted(keyset.keys, np.uint64(q), side="right"))


def predecessor(keyset: KeySet, q: int) -> Optional[int]:
    """Largest stored key <= q, or None below the first key."""
    if keyset.n == 0 or q < 0:
        return None
    r = rank(keyset, q)
    return None if r == 0 else int(keyset.keys[r - 1])


@dataclass(frozen=True)
class Workload:
    """Finite empirical query distribution.

    ``support`` is sorted and duplicate-free; ``probs`` sums to one.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = as_keys(self.support)
        probs = np.asarray(self.probs, dtype=np.float64)
        if support.shape != probs.shape:
            raise ValueError("support and probs differ in length")
        if np.any(probs < 0):
            raise ValueError("weights must be nonnegative")
        if support.size > 1 and not np.all(support[1:] > support[:-1]):
            raise ValueError("workload support must be sorted and unique")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, queries: Sequence[int], weights: Sequence[float]) -> "Workload":
        q = as_keys(queries)
        w = np.asarray(weights, dtype=np.float64)
        if q.shape != w.shape:
            raise ValueError("queries and weights differ in length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if not total > 0:
            raise ValueError("total weight must be positive")
        uniq, inv = np.unique(q, return_inverse=True)
        agg = np.zeros(uniq.size, dtype=np.float64)
        np.add.at(agg, inv, w)
        return cls(uniq, agg / agg.sum())

    @classmethod
    def from_queries(cls, queries: Sequence[int] | np.ndarray) -> "Workload":
        """Empirical distribution of a query stream (exact frequencies)."""
        uniq, counts = np.unique(as_keys(queries), return_counts=True)
        return cls(uniq, counts / counts.sum())

    @classmethod
    def uniform(cls, keys: Sequence[int] | np.ndarray) -> "Workload":
        k = np.unique(as_keys(keys))
        return cls(k, np.full(k.size, 1.0 / k.size))

    @property
    def total(self) -> float:
        return float(math.fsum(self.probs))

    def mass(self, interval: "LeafInterval") -> float:
        lo, hi = interval.support_slice(self.support)
        return float(math.fsum(self.probs[lo:hi]))

    def entropy(self) -> float:
        return entropy_bits(self.probs)


@dataclass(frozen=True)
class LeafInterval:
    """Key-aligned half-open universe interval ``[lo, hi)``; ``hi=None`` is +inf."""

    lo: int = 0
    hi: Optional[int] = None

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError("lo must be nonnegative")
        if self.hi is not None and self.hi <= self.lo:
            raise ValueError("empty interval")

    def contains(self, q: int) -> bool:
        return q >= self.lo and (self.hi is None or q < self.hi)

    @property
    def last(self) -> int:
        """Largest universe point inside the interval."""
        return UNIVERSE_MAX if self.hi is None else self.hi - 1

    def support_slice(self, sorted_values: np.ndarray) -> tuple[int, int]:
        lo = int(np.searchsorted(sorted_values, np.uint64(self.lo), side="left"))
        if self.hi is None:
            return lo, int(sorted_values.size)
        if self.hi > UNIVERSE_MAX:
            return lo, int(sorted_values.size)
        return lo, int(np.searchsorted(sorted_values, np.uint64(self.hi), side="left"))

    def index_range(self, keyset: KeySet) -> tuple[int, int]:
        """Positions ``[start, stop)`` of the stored keys inside the interval."""
        return self.support_slice(keyset.keys)


@dataclass(frozen=True)
class Partition:
    leaves: tuple[LeafInterval, ...]
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        leaves = tuple(self.leaves)
        if not leaves:
            raise ValueError("a partition needs at least one leaf")
        if leaves[0].lo != 0 or leaves[-1].hi is not None:
            raise ValueError("partition must cover the whole universe")
        for a, b in zip(leaves, leaves[1:]):
            if a.hi != b.lo:
                raise ValueError("leaves must be contiguous and ordered")
        masses = np.asarray(self.masses, dtype=np.float64)
        if masses.size and masses.size != len(leaves):
            raise ValueError("one mass per leaf")
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_cuts(cls, cuts: Sequence[int], workload: Optional[Workload] = None,
                  masses: Optional[Sequence[float]] = None) -> "Partition":
        """Leaves ``[0,c1), [c1,c2), ..., [ck, inf)``."""
        bounds = [0, *[int(c) for c in cuts], None]
        leaves = tuple(LeafInterval(a, b) for a, b in zip(bounds, bounds[1:]))
        if masses is None and workload is not None:
            masses = [workload.mass(leaf) for leaf in leaves]
        return cls(leaves, np.asarray(masses if masses is not None else [], dtype=np.float64))

    @property
    def m(self) -> int:
        return len(self.leaves)

    def locate(self, q: int) -> int:
        cuts = [leaf.lo for leaf in self.leaves[1:]]
        return bisect.bisect_right(cuts, q)


def check_normalized(masses: np.ndarray, tol: float = NORMALIZATION_TOL) -> None:
    total = math.fsum(float(p) for p in masses)
    if abs(total - 1.0) > tol:
        raise UnnormalizedMassError(f"masses sum to {total!r}, not 1")


def leaf_entropy(partition: Partition | Sequence[float]) -> float:
    masses = partition.masses if isinstance(partition, Partition) else np.asarray(partition, float)
    if masses.size == 0:
        raise ValueError("partition carries no masses")
    if np.any(masses < 0):
        raise UnnormalizedMassError("negative mass")
    check_normalized(masses)
    return entropy_bits(masses)


def rank_diameter(keyset: KeySet, interval: LeafInterval) -> int:
    """1 + the largest rank difference between two points of the interval."""
    lo_rank = rank(keyset, interval.lo)
    hi_rank = rank(keyset, interval.last)
    return 1 + hi_rank - lo_rank


def conditional_workload(workload: Workload, interval: LeafInterval) -> Workload:
    lo, hi = interval.support_slice(workload.support)
    probs = workload.probs[lo:hi]
    mass = math.fsum(probs)
    if not mass > 0:
        raise EmptyConditionalError(f"interval [{interval.lo}, {interval.hi}) carries no query mass")
    return Workload(workload.support[lo:hi].copy(), probs / mass)
