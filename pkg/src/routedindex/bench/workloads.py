"""Deterministic query streams.

Every stream comes from a PCG64 generator seeded with ``(seed, kind tag)``
through numpy's SeedSequence, so the same spec over the same keys gives a
byte-identical stream on every platform numpy supports.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from ..core import KeySet

KINDS = ("uniform_hits", "misses", "mixed", "zipf_hits", "hotspot_hits", "gaps")
HITS_KINDS = ("uniform_hits", "zipf_hits", "hotspot_hits")
SHORT = {"uniform_hits": "hits", "misses": "misses", "mixed": "mixed", "zipf_hits": "zipf",
         "hotspot_hits": "hotspot", "gaps": "gaps"}


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    queries: int = 200_000
    seed: int = 0
    zipf_s: float = 0.99
    hotspot_mass: float = 0.9
    hotspot_width: float = 0.1
    gap_fraction: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload {self.kind!r}; choose from {KINDS}")
        if self.queries < 0:
            raise ValueError("query count must be nonnegative")

    def rng(self) -> np.random.Generator:
        tag = zlib.crc32(self.kind.encode())
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, tag])))


def _miss_points(keys: np.ndarray) -> np.ndarray:
    gaps = keys[1:] - keys[:-1]
    ok = np.nonzero(gaps >= 2)[0]
    if ok.size == 0:
        raise ValueError("no gap wide enough for an unsuccessful probe")
    return keys[ok] + (gaps[ok] >> np.uint64(1))


def zipf_indices(rng: np.random.Generator, n: int, s: float, size: int) -> np.ndarray:
    """Truncated Zipf on 1..n by rejection-inversion (Hormann and Derflinger), 0-based."""

    def h_int(x):
        lx = np.log(x)
        t = (1.0 - s) * lx
        return np.where(np.abs(t) > 1e-8, np.expm1(t) / np.where(t == 0, 1, t), 1 + t / 2) * lx

    def h_inv(y):
        t = np.maximum(y * (1.0 - s), -1.0)
        return np.exp(np.where(np.abs(t) > 1e-8, np.log1p(t) / np.where(t == 0, 1, t), 1 - t / 2) * y)

    def h(x):
        return np.exp(-s * np.log(x))

    hx1 = float(h_int(np.array(1.5))) - 1.0
    hn = float(h_int(np.array(n + 0.5)))
    sq = 2.0 - float(h_inv(h_int(np.array(2.5)) - h(np.array(2.0))))
    out = np.empty(size, np.int64)
    filled = 0
    while filled < size:
        m = max(64, int((size - filled) * 1.2))
        u = hn + rng.random(m) * (hx1 - hn)
        x = h_inv(u)
        k = np.clip(np.floor(x + 0.5), 1, n)
        ok = (k - x <= sq) | (u >= h_int(k + 0.5) - h(k))
        got = k[ok].astype(np.int64)[: size - filled]
        out[filled:filled + got.size] = got
        filled += got.size
    return out - 1


def gen_workload(spec: WorkloadSpec, keyset: KeySet) -> np.ndarray:
    keys = keyset.keys
    n = keys.size
    if n == 0:
        raise ValueError("empty key set")
    rng = spec.rng()
    m = spec.queries
    if spec.kind == "uniform_hits":
        return keys[rng.integers(0, n, m)]
    if spec.kind == "misses":
        pts = _miss_points(keys)
        return pts[rng.integers(0, pts.size, m)]
    if spec.kind == "mixed":
        pts = _miss_points(keys)
        hits = keys[rng.integers(0, n, m)]
        misses = pts[rng.integers(0, pts.size, m)]
        out = hits.copy()
        out[1::2] = misses[1::2]
        return out
    if spec.kind == "zipf_hits":
        return keys[zipf_indices(rng, n, spec.zipf_s, m)]
    if spec.kind == "hotspot_hits":
        width = max(1, int(round(spec.hotspot_width * n)))
        start = min(int(math.floor(0.45 * n)), n - width)
        hot = rng.random(m) < spec.hotspot_mass
        idx = np.where(hot, start + rng.integers(0, width, m), rng.integers(0, n, m))
        return keys[idx]
    # gaps: cycle through the widest gaps, probing a uniform point inside each
    gaps = keys[1:] - keys[:-1]
    wide = np.nonzero(gaps >= 2)[0]
    if wide.size == 0:
        raise ValueError("no gap wide enough for a gap probe")
    top = max(1, int(math.ceil(spec.gap_fraction * wide.size)))
    order = wide[np.argsort(-gaps[wide].astype(np.float64), kind="stable")[:top]]
    pick = order[np.arange(m) % order.size]
    inner = gaps[pick] - np.uint64(1)  # number of interior points
    off = (rng.random(m) * inner.astype(np.float64)).astype(np.uint64)
    off = np.minimum(off, inner - np.uint64(1))
    return keys[pick] + np.uint64(1) + off
