"""Order-preserving routers from a query key to a leaf.

``build_alphabetic`` lays the leaves out on [0, total) by mass and bisects
the code interval: each leaf ends at depth at most ceil(log2(1/p)) + 1, so
the expected depth is below H(p) + 2 while left-to-right order is kept.
``RadixRouter`` trades table bytes for comparisons: the top bits of the key
pick a short run of candidate leaves, which is then searched in order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import KeySet, Partition, entropy_bits

ZERO_MASS_FLOOR = 2.0 ** -40
NODE_BYTES = 16  # split key + two 4-byte child references
MAX_RADIX_BITS = 30


class DirectoryError(RuntimeError):
    """A directory failed a structural check."""


class RadixConfigError(ValueError):
    pass


@dataclass
class DirectoryTree:
    """Binary tree over ``m`` ordered leaves.

    Children are encoded as node indices (>= 0) or leaves (``-1 - j``).
    ``cuts[j-1]`` is the first key of leaf ``j``; a query goes right at a
    node when it is at least that node's split key.
    """

    cuts: np.ndarray
    split: np.ndarray  # leaf index j: leaves < j go left
    left: np.ndarray
    right: np.ndarray
    depths: np.ndarray
    root: int  # node index, or -1 when there is a single leaf

    @property
    def m(self) -> int:
        return len(self.depths)

    @property
    def nodes(self) -> int:
        return len(self.split)

    @property
    def nbytes(self) -> int:
        return self.nodes * NODE_BYTES

    def expected_depth(self, masses: Sequence[float]) -> float:
        return math.fsum(float(p) * int(d) for p, d in zip(masses, self.depths))


def build_alphabetic(masses: Sequence[float], cuts: Optional[Sequence[int]] = None) -> DirectoryTree:
    p = np.maximum(np.asarray(masses, dtype=np.float64), ZERO_MASS_FLOOR)
    m = p.size
    if m == 0:
        raise ValueError("need at least one leaf")
    if cuts is None:
        cuts = np.arange(1, m, dtype=np.uint64)
    cuts = np.asarray(cuts, dtype=np.uint64)
    if cuts.size != m - 1:
        raise ValueError("need m-1 cut keys")
    cum = np.concatenate([[0.0], np.cumsum(p)])
    mids = cum[:-1] + p / 2
    split, left, right = [], [], []
    depths = np.zeros(m, dtype=np.int64)

    def build(i: int, j: int, lo: float, hi: float, depth: int) -> int:
        if i == j:
            depths[i] = depth
            return -1 - i
        while True:
            mid = (lo + hi) / 2
            k = int(np.searchsorted(mids[i:j + 1], mid, side="left"))
            if k == 0:
                lo = mid
            elif k == j - i + 1:
                hi = mid
            else:
                break
        node = len(split)
        split.append(i + k)
        left.append(0)
        right.append(0)
        left[node] = build(i, i + k - 1, lo, mid, depth + 1)
        right[node] = build(i + k, j, mid, hi, depth + 1)
        return node

    root = build(0, m - 1, 0.0, float(cum[-1]), 0)
    return DirectoryTree(cuts, np.asarray(split, np.int64), np.asarray(left, np.int64),
                         np.asarray(right, np.int64), depths, root if m > 1 else -1)


def route(tree: DirectoryTree, q: int) -> tuple[int, int]:
    """(leaf index, comparisons); comparisons equal the leaf depth."""
    if tree.m == 1:
        return 0, 0
    node = tree.root
    comps = 0
    while node >= 0:
        comps += 1
        if q >= int(tree.cuts[tree.split[node] - 1]):
            node = int(tree.right[node])
        else:
            node = int(tree.left[node])
    return -1 - node, comps


def route_batch(tree: DirectoryTree, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = qs.size
    if tree.m == 1:
        return np.zeros(n, np.int64), np.zeros(n, np.int64)
    node = np.full(n, tree.root, dtype=np.int64)
    comps = np.zeros(n, np.int64)
    split_keys = tree.cuts[tree.split - 1]
    active = node >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        cur = node[idx]
        go_right = qs[idx] >= split_keys[cur]
        node[idx] = np.where(go_right, tree.right[cur], tree.left[cur])
        comps[idx] += 1
        active = node >= 0
    return -1 - node, comps


def kraft_check(tree: DirectoryTree) -> float:
    total = math.fsum(2.0 ** -int(d) for d in tree.depths)
    if total > 1.0 + 1e-12:
        raise DirectoryError(f"Kraft sum {total} exceeds one")
    return total


def depth_bounds(masses: Sequence[float]) -> tuple[float, float]:
    h = entropy_bits(masses)
    return h, h + 2


# -- radix routing -----------------------------------------------------------

def bounded_search(arr: np.ndarray, q: int, lo: int, hi: int) -> tuple[int, int]:
    """Largest r in [lo, hi] with r == lo or arr[r-1] <= q, plus comparisons used."""
    comps = 0
    while lo < hi:
        mid = (lo + hi + 1) // 2
        comps += 1
        if int(arr[mid - 1]) <= q:
            lo = mid
        else:
            hi = mid - 1
    return lo, comps


@dataclass
class RadixRouter:
    """Prefix table over sorted leaf start keys.

    ``table[t]`` counts cut keys at or below the start of prefix bucket
    ``t``; the leaf of any query in bucket ``t`` lies in
    ``[table[t], table[t+1]]``, which is searched in order.
    """

    bits: int
    shift: int
    cuts: np.ndarray
    table: np.ndarray
    entry_bytes: int = 4

    @property
    def nbytes(self) -> int:
        return (1 << self.bits) * self.entry_bytes

    def prefix(self, q: int) -> int:
        return min(q >> self.shift, (1 << self.bits) - 1)

    def route(self, q: int) -> tuple[int, int, bool]:
        """(leaf, comparisons, fallback) where fallback marks a multi-candidate scan."""
        t = self.prefix(q)
        lo, hi = int(self.table[t]), int(self.table[t + 1])
        leaf, comps = bounded_search(self.cuts, q, lo, hi)
        return leaf, comps, hi > lo

    def route_batch(self, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        from ._kernels import bounded_search_batch

        t = np.minimum(qs >> np.uint64(self.shift), np.uint64((1 << self.bits) - 1)).astype(np.int64)
        lo = self.table[t]
        hi = self.table[t + 1]
        leaf, comps = bounded_search_batch(self.cuts, qs, lo, hi)
        return leaf, comps, hi > lo


def radix_router(cuts: np.ndarray, max_key: int, bits: int, entry_bytes: int = 4,
                 memory_cap: int = 1 << 32) -> RadixRouter:
    if not 1 <= bits <= MAX_RADIX_BITS:
        raise RadixConfigError(f"radix bits must lie in [1, {MAX_RADIX_BITS}]")
    if (1 << bits) * entry_bytes > memory_cap:
        raise RadixConfigError(f"a {bits}-bit table exceeds the {memory_cap}-byte cap")
    cuts = np.asarray(cuts, dtype=np.uint64)
    shift = max(0, int(max_key).bit_length() - bits)
    starts = np.arange((1 << bits) + 1, dtype=np.uint64) << np.uint64(shift)
    table = np.searchsorted(cuts, starts, side="right").astype(np.int64)
    table[-1] = cuts.size
    return RadixRouter(bits, shift, cuts, table, entry_bytes)


def build_radix(keyset: KeySet, partition: Partition, bits: int = 18, entry_bytes: int = 4) -> RadixRouter:
    cuts = np.array([leaf.lo for leaf in partition.leaves[1:]], dtype=np.uint64)
    return radix_router(cuts, int(keyset.keys[-1]), bits, entry_bytes)
