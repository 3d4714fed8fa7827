import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from routedindex.core import KeySet, Workload
from routedindex.index import (IntegrityError, build_binary, build_engine, build_epsilon_pla, build_radix_spline,
                               build_shadow, control_arrays, repair_bound, repair_search, segment_cover)
from routedindex.index.dynamic import DynamicIndex, dyn_delete, dyn_insert, dyn_query, replay_random


def rand_keys(seed, n, hi=1 << 40):
    rng = np.random.default_rng(seed)
    return KeySet(np.unique(rng.integers(0, hi, n, dtype=np.uint64)))


def probe_stream(ks, seed, m=5000):
    rng = np.random.default_rng(seed)
    hits = ks.keys[rng.integers(0, ks.n, m)]
    near = hits + rng.integers(0, 3, m).astype(np.uint64)
    edge = np.array([0, 1, int(ks.keys[0]), int(ks.keys[-1]), (1 << 64) - 1], dtype=np.uint64)
    return np.concatenate([hits, near, edge])


def all_engines(ks, qs):
    wl = Workload.from_queries(qs)
    return [build_binary(ks), build_epsilon_pla(ks, 8), build_epsilon_pla(ks, 64), build_radix_spline(ks, 16, 12),
            build_shadow(ks, wl, 64, "ordered"), build_shadow(ks, wl, 64, "radix", radix_bits=12)]


def test_repair_search_examples():
    keys = np.arange(10, 200, 10, dtype=np.uint64)
    assert repair_search(keys, 3, 3, 35) == (3, 0)
    r, c = repair_search(keys, 2, 10, 55)  # delta 4 window, width 9
    assert r == 5 and c <= 4 == repair_bound(9) - 0
    with pytest.raises(IntegrityError):
        repair_search(keys, 0, 2, 55)
    big = np.arange(1 << 20, dtype=np.uint64)
    r, c = repair_search(big, 0, big.size, 12345)
    assert r == 12346 and c <= 21


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3000))
def test_engines_exact_and_metered(seed, n):
    ks = rand_keys(seed, n)
    qs = probe_stream(ks, seed)
    want = ks.rank_many(qs)
    for idx in all_engines(ks, qs):
        ranks, met = idx.lookup_batch(qs)
        assert (ranks == want).all(), idx.name
        assert (met.repair_comparisons <= np.ceil(np.log2(met.window + 1))).all()
        for i in range(0, qs.size, 997):
            r, m1 = idx.lookup(int(qs[i]))
            assert r == want[i]
            assert m1 == met[i]


def test_lookup_edge_cases():
    ks = KeySet(np.array([10, 20, 30], np.uint64))
    for idx in (build_binary(ks), build_epsilon_pla(ks, 1)):
        assert idx.rank(5) == 0
        assert idx.rank(20) == 2
        assert idx.rank((1 << 64) - 1) == 3


def test_pla_linear_keyset_one_segment():
    ks = KeySet(np.arange(1000, dtype=np.uint64) * 7 + 3)
    for eps in (1, 8, 64):
        assert build_epsilon_pla(ks, eps).atoms == 1


def test_pla_window_bound():
    ks = rand_keys(1, 20000)
    qs = probe_stream(ks, 2)
    for eps in (32, 128, 512):
        idx = build_epsilon_pla(ks, eps)
        _, met = idx.lookup_batch(qs)
        assert met.window.max() <= 2 * eps + 2
        assert met.repair_comparisons.max() <= math.ceil(math.log2(2 * eps + 3))


def test_radix_spline_exact_line():
    ks = KeySet(np.arange(1, 5000, dtype=np.uint64) * 1000)
    idx = build_radix_spline(ks, 4, 18)
    _, met = idx.lookup_batch(ks.keys)
    assert met.repair_comparisons.max() <= 1
    assert idx.directory_bytes == (1 << 18) * 4


def test_segment_cover_cap():
    ks = rand_keys(3, 5000)
    cx, cy = control_arrays(ks)
    full = segment_cover(cx, cy, 0, cx.size, 4)
    capped = segment_cover(cx, cy, 0, cx.size, 4, max_segments=full.count - 1)
    assert isinstance(capped, int) and capped > full.count - 1
    assert (full.radius <= 4).all()


def test_shadow_budget_zero_is_binary_search():
    ks = rand_keys(4, 4096)
    qs = probe_stream(ks, 5)
    for variant in ("ordered", "radix"):
        idx = build_shadow(ks, Workload.from_queries(qs), 0, variant)
        ranks, met = idx.lookup_batch(qs)
        assert idx.pieces.count == 1 and idx.atoms == 0
        assert (met.route_comparisons == 0).all()
        assert (ranks == ks.rank_many(qs)).all()


@pytest.mark.parametrize("budget", [256, 1024])
def test_shadow_respects_budget(budget):
    ks = rand_keys(6, 50000)
    qs = probe_stream(ks, 7)
    idx = build_shadow(ks, Workload.from_queries(qs), budget)
    assert idx.atoms <= budget
    assert idx.allocation.atoms_used == idx.atoms


def test_shadow_piecewise_linear_keyset():
    runs = [np.arange(2000, dtype=np.uint64) * s + base for s, base in ((3, 0), (17, 10**6), (5, 10**8), (101, 10**9))]
    ks = KeySet(np.concatenate(runs))
    qs = ks.keys[np.random.default_rng(0).integers(0, ks.n, 20000)]
    idx = build_shadow(ks, Workload.from_queries(qs), 64)
    ranks, met = idx.lookup_batch(qs)
    assert (ranks == ks.rank_many(qs)).all()
    assert met.repair_comparisons.mean() <= 1.0


def test_build_engine_dispatch():
    ks = rand_keys(8, 1000)
    assert build_engine("binary", ks).family == "Binary"
    assert build_engine("spline", ks, eps=8, radix_bits=10).family == "RS"
    with pytest.raises(ValueError):
        build_engine("shadow-o", ks)
    with pytest.raises(ValueError):
        build_engine("btree", ks)


def test_dynamic_examples():
    dyn = DynamicIndex(beta=2)
    for k in range(1, 101):
        dyn_insert(dyn, k)
    assert dyn_query(dyn, 100) == 100
    assert dyn.predecessor(0) is None and dyn.predecessor(57) == 57
    assert not dyn_insert(dyn, 50).applied
    d2 = DynamicIndex(beta=3)
    dyn_insert(d2, 42)
    dyn_delete(d2, 42)
    assert dyn_query(d2, 42) == 0 and dyn_query(d2, 10**9) == 0
    assert not dyn_delete(d2, 42).applied


@pytest.mark.parametrize("beta", [2, 3, 8])
def test_dynamic_replay(beta):
    rep = replay_random(5000, beta, seed=beta, universe=5000)
    assert rep.mismatches == 0
    assert rep.within_bound


def test_dynamic_rejects_bad_beta():
    with pytest.raises(ValueError):
        DynamicIndex(beta=1)
