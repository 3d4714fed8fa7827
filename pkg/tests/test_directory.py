import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from routedindex.core import KeySet, Partition, entropy_bits
from routedindex.directory import (RadixConfigError, bounded_search, build_alphabetic, build_radix, depth_bounds,
                                   kraft_check, radix_router, route, route_batch)


def test_single_leaf():
    t = build_alphabetic([1.0])
    assert route(t, 12345) == (0, 0)
    assert t.expected_depth([1.0]) == 0


def test_uniform_four_leaves():
    t = build_alphabetic([0.25] * 4)
    assert t.depths.tolist() == [2, 2, 2, 2]
    assert t.expected_depth([0.25] * 4) == pytest.approx(2.0) == pytest.approx(entropy_bits([0.25] * 4))
    assert kraft_check(t) == 1.0


def test_two_leaves_one_comparison():
    t = build_alphabetic([0.5, 0.5], cuts=[100])
    assert route(t, 99) == (0, 1)
    assert route(t, 100) == (1, 1)


def test_chain_kraft():
    t = build_alphabetic([0.5, 0.25, 0.25])
    assert sorted(t.depths.tolist()) == [1, 2, 2]
    assert kraft_check(t) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_depth_within_entropy_bounds(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 257))
    p = rng.dirichlet(np.full(m, float(rng.choice([0.1, 1.0, 10.0]))))
    t = build_alphabetic(p)
    lo, hi = depth_bounds(p)
    assert lo - 1e-9 <= t.expected_depth(p) <= hi + 1e-9
    assert kraft_check(t) <= 1.0


def test_zero_mass_leaves_are_routable():
    p = np.array([0.5, 0.0, 0.0, 0.5])
    t = build_alphabetic(p, cuts=[10, 20, 30])
    for q, leaf in [(5, 0), (10, 1), (25, 2), (31, 3)]:
        assert route(t, q)[0] == leaf


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_route_matches_scan(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 100))
    cuts = np.sort(rng.choice(np.arange(1, 10_000), m - 1, replace=False)).astype(np.uint64)
    t = build_alphabetic(rng.dirichlet(np.ones(m)), cuts)
    qs = rng.integers(0, 11_000, 300).astype(np.uint64)
    want = np.searchsorted(cuts, qs, side="right")
    leaves, comps = route_batch(t, qs)
    assert (leaves == want).all()
    assert (comps == t.depths[leaves]).all()
    for q in qs[:30].tolist():
        assert route(t, q)[0] == int(np.searchsorted(cuts, np.uint64(q), side="right"))


def test_bounded_search_comparisons():
    arr = np.arange(0, 2000, 2, dtype=np.uint64)
    assert bounded_search(arr, 7, 4, 4) == (4, 0)
    r, c = bounded_search(arr, 11, 2, 10)  # window of 9 candidates
    assert r == 6 and c <= 4
    big = np.arange(1 << 20, dtype=np.uint64)
    r, c = bounded_search(big, 777_777, 0, big.size)
    assert r == 777_778 and c <= 21


def test_radix_one_bit_splits_top():
    keys = np.arange(16, dtype=np.uint64) * 16
    ks = KeySet(keys)
    part = Partition.from_cuts([128])
    r = build_radix(ks, part, bits=1)
    assert r.shift == int(keys[-1]).bit_length() - 1
    assert r.route(5)[0] == 0 and r.route(200)[0] == 1


def test_radix_table_bytes():
    r = radix_router(np.array([10, 20], np.uint64), 1 << 40, 18, entry_bytes=8)
    assert r.nbytes == (1 << 18) * 8
    with pytest.raises(RadixConfigError):
        radix_router(np.array([1], np.uint64), 100, 0)
    with pytest.raises(RadixConfigError):
        radix_router(np.array([1], np.uint64), 100, 30, entry_bytes=8, memory_cap=1 << 20)


def test_radix_skewed_keys_fall_back_correctly():
    rng = np.random.default_rng(0)
    cuts = np.sort(np.unique(np.concatenate([rng.integers(0, 1000, 300), [1 << 50]]))).astype(np.uint64)
    r = radix_router(cuts, 1 << 50, 8)
    qs = np.concatenate([rng.integers(0, 1200, 500), rng.integers(0, 1 << 51, 50)]).astype(np.uint64)
    leaf, comps, fb = r.route_batch(qs)
    assert (leaf == np.searchsorted(cuts, qs, side="right")).all()
    assert fb.any()
    for q in qs[:50].tolist():
        assert r.route(q)[0] == int(np.searchsorted(cuts, np.uint64(q), side="right"))
