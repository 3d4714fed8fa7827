"""Levelled dynamization of a static rank engine.

Level ``i`` holds at most ``beta - 1`` static structures built over about
``beta**i`` keys.  A new key enters level 0 as a singleton; when a level
collects ``beta`` structures they are merged into one structure at the next
level, like a carry in a base-``beta`` counter.  Deletions add a tombstone
to the structure holding the key, and a structure whose tombstones exceed
half its keys is rebuilt from its live keys.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import KeySet
from .engines import RoutedIndex, build_binary, build_epsilon_pla


def default_static(keys: np.ndarray) -> RoutedIndex:
    ks = KeySet(keys)
    return build_epsilon_pla(ks, 16) if ks.n >= 64 else build_binary(ks)


@dataclass
class _Structure:
    uid: int
    level: int
    index: RoutedIndex
    keys: np.ndarray
    tombstones: list = field(default_factory=list)  # sorted

    @property
    def size(self) -> int:
        return int(self.keys.size)

    def live_keys(self) -> np.ndarray:
        if not self.tombstones:
            return self.keys
        dead = np.asarray(self.tombstones, dtype=np.uint64)
        return self.keys[~np.isin(self.keys, dead)]

    def rank(self, q: int) -> int:
        return self.index.rank(q) - bisect.bisect_right(self.tombstones, q)


@dataclass
class OpResult:
    applied: bool
    reason: str = ""


class DynamicIndex:
    def __init__(self, beta: int = 2, static: Callable[[np.ndarray], RoutedIndex] = default_static):
        if beta < 2:
            raise ValueError("beta must be at least 2")
        self.beta = beta
        self.static = static
        self.levels: list[list[_Structure]] = []
        self.where: dict[int, _Structure] = {}
        self.rebuild_work = 0
        self.rebuilds = 0
        self._uid = 0
        self.inserts = self.deletes = self.queries = 0

    def __len__(self) -> int:
        return len(self.where)

    def _make(self, keys: np.ndarray, level: int) -> _Structure:
        self._uid += 1
        s = _Structure(self._uid, level, self.static(keys), keys)
        self.rebuild_work += int(keys.size)
        self.rebuilds += 1
        for k in keys.tolist():
            self.where[k] = s
        return s

    def _place(self, s: _Structure) -> None:
        level = s.level
        while len(self.levels) <= level:
            self.levels.append([])
        self.levels[level].append(s)
        while len(self.levels[level]) >= self.beta:
            group = self.levels[level]
            self.levels[level] = []
            merged = np.sort(np.concatenate([g.live_keys() for g in group]))
            if merged.size == 0:
                return
            level += 1
            while len(self.levels) <= level:
                self.levels.append([])
            self.levels[level].append(self._make(merged, level))

    def insert(self, key: int) -> OpResult:
        key = int(key)
        if key in self.where:
            return OpResult(False, "duplicate")
        self.inserts += 1
        self._place(self._make(np.array([key], dtype=np.uint64), 0))
        return OpResult(True)

    def delete(self, key: int) -> OpResult:
        key = int(key)
        s = self.where.pop(key, None)
        if s is None:
            return OpResult(False, "absent")
        self.deletes += 1
        bisect.insort(s.tombstones, key)
        if 2 * len(s.tombstones) > s.size:
            self.levels[s.level].remove(s)
            live = s.live_keys()
            if live.size:
                self.levels[s.level].append(self._make(live, s.level))
        return OpResult(True)

    def rank(self, q: int) -> int:
        self.queries += 1
        return sum(s.rank(q) for level in self.levels for s in level)

    def predecessor(self, q: int):
        r = self.rank(q)
        if r == 0:
            return None
        best = None
        for level in self.levels:
            for s in level:
                live = s.live_keys()
                i = int(np.searchsorted(live, np.uint64(q), side="right"))
                if i and (best is None or int(live[i - 1]) > best):
                    best = int(live[i - 1])
        return best

    def work_bound(self, n_ops: int, c: float = 8.0) -> float:
        """c * beta * log_beta(N) * N."""
        if n_ops <= 1:
            return c * self.beta
        return c * self.beta * math.log(n_ops, self.beta) * n_ops


def dyn_insert(dyn: DynamicIndex, key: int) -> OpResult:
    return dyn.insert(key)


def dyn_delete(dyn: DynamicIndex, key: int) -> OpResult:
    return dyn.delete(key)


def dyn_query(dyn: DynamicIndex, q: int) -> int:
    return dyn.rank(q)


@dataclass
class ReplayReport:
    ops: int
    inserts: int
    deletes: int
    queries: int
    mismatches: int
    rebuild_work: int
    rebuilds: int
    work_bound: float
    final_size: int

    @property
    def within_bound(self) -> bool:
        return self.rebuild_work <= self.work_bound


def replay_random(n_ops: int, beta: int = 2, seed: int = 0, universe: int = 1 << 32,
                  mix: tuple[float, float, float] = (0.5, 0.2, 0.3),
                  static: Callable[[np.ndarray], RoutedIndex] = default_static) -> ReplayReport:
    """Random insert/delete/rank operations checked against a sorted-list oracle.

    ``mix`` gives the insert, delete and query probabilities.  Deletes pick a
    live key when one exists; inserts and queries draw from the universe.
    """
    rng = np.random.default_rng(seed)
    dyn = DynamicIndex(beta, static)
    oracle: list[int] = []
    kinds = rng.choice(3, size=n_ops, p=np.asarray(mix) / sum(mix))
    draws = rng.integers(0, universe, size=n_ops).tolist()
    picks = rng.random(n_ops).tolist()
    mismatches = 0
    for kind, x, u in zip(kinds.tolist(), draws, picks):
        if kind == 0:
            applied = dyn.insert(x).applied
            i = bisect.bisect_left(oracle, x)
            if (i < len(oracle) and oracle[i] == x) == applied:
                mismatches += 1
            if applied:
                oracle.insert(i, x)
        elif kind == 1:
            key = oracle[int(u * len(oracle))] if oracle else x
            applied = dyn.delete(key).applied
            i = bisect.bisect_left(oracle, key)
            present = i < len(oracle) and oracle[i] == key
            if present != applied:
                mismatches += 1
            if present:
                oracle.pop(i)
        else:
            if dyn.rank(x) != bisect.bisect_right(oracle, x):
                mismatches += 1
    return ReplayReport(n_ops, dyn.inserts, dyn.deletes, dyn.queries, mismatches, dyn.rebuild_work,
                        dyn.rebuilds, dyn.work_bound(n_ops), len(oracle))
