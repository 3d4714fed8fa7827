"""Acceptance criteria 1-10.  Each test records one verdict line."""
import hashlib
import math
import random
import time

import numpy as np
import pytest

from routedindex.alloc import (PowerLawLeaf, deficiency, dual_certificate, greedy_allocate, hard_mass,
                               powerlaw_cost)
from routedindex.bench import (TABLE4, WorkloadSpec, extract_keys, gen_workload, ingest_sosd, rank_checksum,
                               synthetic_keys, write_sosd)
from routedindex.bench.datasets import DatasetSpec, file_md5
from routedindex.bench.runner import TRAIN_SEED
from routedindex.bench.workloads import HITS_KINDS, KINDS
from routedindex.core import KeySet, LeafInterval, Workload, entropy_bits
from routedindex.directory import build_alphabetic, kraft_check
from routedindex.index import build_binary, build_epsilon_pla, build_radix_spline, build_shadow
from routedindex.index.dynamic import replay_random
from routedindex.profile import ControlCurve, brute_force_cover, control_curve, min_segment_cover, replay_error
from routedindex.residual import TranscriptConfig, brute_force_eval, exact_eval, spread_diagnostic

from conftest import data_file

BUDGETS = (32, 64, 128, 256)


def zipf_masses(m=32, s=1.2):
    w = np.arange(1, m + 1, dtype=float) ** -s
    return w / w.sum()


def test_criterion_1_powerlaw_closed_form(criterion):
    t0 = time.perf_counter()
    cases = {
        "uniform": ([PowerLawLeaf(1 / 32, 256, 256)] * 32, 5.00, (7.01, 6.43, 5.71, 4.88), 0.01),
        "hard-leaf": ([PowerLawLeaf(0.25, 4096, 256)] + [PowerLawLeaf(0.75 / 31, 64, 256)] * 31,
                      4.53, (6.05, 5.48, 4.77, 3.98), 0.01),
        "zipf": ([PowerLawLeaf(float(p), 256, 256) for p in zipf_masses()], 3.75, (5.66, 5.18, 4.54, 3.78), 0.02),
    }
    ok, parts = True, []
    for name, (leaves, ent, reps, tol) in cases.items():
        got = [powerlaw_cost(leaves, b) for b in BUDGETS]
        ok &= abs(got[0][0] - ent) <= 0.01
        ok &= all(abs(r - want) <= tol for (_, r), want in zip(got, reps))
        parts.append(f"{name} H={got[0][0]:.3f} rep=" + ",".join(f"{r:.3f}" for _, r in got))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    assert criterion(1, ok, "; ".join(parts) + f"; {elapsed * 1e3:.1f} ms")


def _random_control_curve(rng: random.Random) -> ControlCurve:
    if rng.random() < 0.5:
        # curve of a real key-aligned interval
        while True:
            keys = sorted(rng.sample(range(1, 300), rng.randint(1, 9)))
            ks = KeySet(np.array(keys, np.uint64))
            lo = rng.choice(keys)
            hi = rng.choice([None, lo + rng.randint(1, 120)])
            c = control_curve(ks, LeafInterval(lo, hi))
            if c.N <= 20:
                return c
    n = rng.randint(1, 20)
    xs = sorted(rng.sample(range(0, 1000), n))
    ys = [0]
    for _ in range(n - 1):
        ys.append(ys[-1] + rng.choice([0, 0, 1, 1, 2, 3, 8]))
    return ControlCurve.from_points(xs, ys)


def test_criterion_2_profile_dp_oracle(criterion):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    mismatches = bad_witness = 0
    for _ in range(200):
        c = _random_control_curve(rng)
        delta = rng.choice([0, 0, 1, 1, 2, 3, 5, 8])
        count, blocks = min_segment_cover(c, delta)
        if count != brute_force_cover(c, delta):
            mismatches += 1
        bad_witness += sum(replay_error(c, b.a, b.b, b.witness) > delta for b in blocks)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and bad_witness == 0 and elapsed < 30
    assert criterion(2, ok, f"200 curves, {mismatches} count mismatches, {bad_witness} witness failures, "
                            f"{elapsed:.1f} s")


def test_criterion_3_exact_eval_oracle(criterion):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        keys = np.unique(rng.integers(0, 1 << 20, n)).astype(np.uint64)
        w = rng.dirichlet(np.ones(keys.size)) * (rng.random(keys.size) > 0.15)
        if w.sum() == 0:
            w[-1] = 1.0
        w = w / w.sum()
        budget = int(rng.integers(0, 4))
        Q = int(rng.choice([1, 2, 4, 16]))
        res = exact_eval(KeySet(keys), Workload(keys, w), TranscriptConfig(Q), (budget,))
        rg, gg = brute_force_eval(keys, w, Q, budget)
        worst = max(worst, abs(res.rgap[0] - rg), abs(res.gap[0] - gg))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    assert criterion(3, ok, f"100 instances, max |DP - brute force| = {worst:.2e}, {elapsed:.1f} s")


def _table2(ks: KeySet, label: str):
    sample = extract_keys(ks, 1024)
    budgets = (0, 4, 8, 16, 32, 64, 128)
    out = {}
    for kind in HITS_KINDS:
        stream = gen_workload(WorkloadSpec(kind, 50_000, 0), sample)
        w = Workload.from_queries(stream)
        res = exact_eval(sample, w, TranscriptConfig(16), budgets)
        out[kind] = (w.entropy(), res)
    return out


def _table2_ok(results):
    ok, parts = True, []
    for kind, (h, res) in results.items():
        k32 = res.budgets.index(32)
        checks = [abs(res.rgap[0] - h) <= 1e-9,
                  all(a >= b - 1e-12 for a, b in zip(res.rgap, res.rgap[1:])),
                  all(a >= b - 1e-12 for a, b in zip(res.gap, res.gap[1:])),
                  all(nodes == 1024 for nodes in res.program_nodes),
                  res.rgap[k32] < res.rgap[0]]
        ok &= all(checks)
        parts.append(f"{kind} RGap(0)={res.rgap[0]:.3f} RGap(32)={res.rgap[k32]:.3f} Gap(32)={res.gap[k32]:.3f}")
    return ok, parts


def test_criterion_4_table2_properties(criterion):
    ks = synthetic_keys("lognormal", 200_000, 0)
    ok, parts = _table2_ok(_table2(ks, "synthetic"))
    assert criterion(4, ok, "synthetic lognormal: " + "; ".join(parts))


@pytest.mark.slow
@pytest.mark.parametrize("name", list(TABLE4))
def test_criterion_4_real_data(name, criterion):
    path = data_file(name)
    if path is None:
        pytest.skip(f"{name} not present (set ROUTEDINDEX_DATA_DIR)")
    results = _table2(ingest_sosd(path, TABLE4[name]), name)
    ok, parts = _table2_ok(results)
    h0 = results["uniform_hits"][1].rgap[0]
    ok &= abs(h0 - 9.98) <= 0.02
    assert criterion(4, ok, f"{name}: " + "; ".join(parts))


def test_criterion_5_routing_bounds(criterion):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst_lo, worst_hi, worst_kraft = math.inf, -math.inf, 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 257))
        conc = float(rng.choice([0.05, 0.3, 1.0, 5.0]))
        p = rng.dirichlet(np.full(m, conc))
        t = build_alphabetic(p)
        h = entropy_bits(p)
        d = t.expected_depth(p)
        worst_lo = min(worst_lo, d - h)
        worst_hi = max(worst_hi, d - h)
        worst_kraft = max(worst_kraft, kraft_check(t))
    elapsed = time.perf_counter() - t0
    ok = worst_lo >= -1e-9 and worst_hi <= 2 + 1e-9 and worst_kraft <= 1.0 and elapsed < 10
    assert criterion(5, ok, f"depth - H in [{worst_lo:.3f}, {worst_hi:.3f}], max Kraft {worst_kraft:.3f}, "
                            f"{elapsed:.1f} s")


def _random_instance(rng):
    m = int(rng.integers(1, 9))
    masses = rng.dirichlet(np.ones(m))
    profs = []
    for _ in range(m):
        R = int(rng.integers(1, 200))
        grid = sorted({0, R, *[2 ** k for k in range(9) if 2 ** k < R]})
        atoms = sorted((int(a) for a in rng.integers(1, 20, len(grid) - 1)), reverse=True)
        profs.append(list(zip(grid[:-1], atoms)) + [(R, 0)])
    return profs, masses


def test_criterion_6_weak_duality_and_layer_cake(criterion):
    rng = np.random.default_rng(6)
    violations = 0
    worst_gap = 0.0
    for _ in range(200):
        profs, masses = _random_instance(rng)
        budget = int(rng.integers(0, 60))
        opt = deficiency(profs, masses, budget)
        for lam in np.logspace(-4, 1.5, 20):
            if dual_certificate(profs, masses, budget, float(lam)) > opt + 1e-12:
                violations += 1
        greedy = greedy_allocate(profs, masses, budget)
        worst_gap = max(worst_gap, greedy.repair_bits - greedy.dual_bound)
    worst_layer = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 80))
        ps = rng.dirichlet(np.full(m, float(rng.choice([0.2, 1.0, 5.0]))))
        leaves = [PowerLawLeaf(float(p), float(k), 1 << 20, 1.0)
                  for p, k in zip(ps, np.exp(rng.uniform(0, 10, m))) if p > 0]
        _, direct, layer = hard_mass(leaves, int(rng.integers(0, 512)))
        worst_layer = max(worst_layer, abs(direct - layer))
    ok = violations == 0 and worst_layer <= 1e-9
    assert criterion(6, ok, f"{violations} dual violations over 200x20, max greedy-dual gap {worst_gap:.3f} bits, "
                            f"layer-cake max error {worst_layer:.1e}")


@pytest.fixture(scope="module")
def million_keys():
    return synthetic_keys("uniform", 1_000_000, 0)


def test_criterion_7_engine_exactness(million_keys, criterion):
    ks = million_keys
    static = {"Binary": build_binary(ks), **{f"PGM({e})": build_epsilon_pla(ks, e) for e in (32, 128, 512)},
              "RS(32)": build_radix_spline(ks, 32, 18)}
    ok, parts = True, []
    pgm_avgs = {}
    for kind in KINDS:
        stream = gen_workload(WorkloadSpec(kind, 200_000, 0), ks)
        train = Workload.from_queries(gen_workload(WorkloadSpec(kind, 200_000, TRAIN_SEED), ks))
        engines = dict(static)
        engines["Shadow-O(1024)"] = build_shadow(ks, train, 1024, "ordered")
        engines["Shadow-R(1024)"] = build_shadow(ks, train, 1024, "radix", 18)
        oracle = rank_checksum(ks.rank_many(stream))
        bad = []
        for name, idx in engines.items():
            ranks, met = idx.lookup_batch(stream)
            if rank_checksum(ranks) != oracle:
                bad.append(f"{name} checksum")
            bound = np.ceil(np.log2(met.window + 1))  # u - l + 2 with width = u - l + 1
            if np.any(met.repair_comparisons > bound):
                bad.append(f"{name} meter")
            if name.startswith("PGM"):
                pgm_avgs.setdefault(kind, {})[name] = float(met.repair_comparisons.mean())
        ok &= not bad
        avg = pgm_avgs[kind]
        ok &= avg["PGM(32)"] < avg["PGM(128)"] < avg["PGM(512)"]
        parts.append(f"{kind}: " + ("ok" if not bad else ",".join(bad)) + " PGM repair "
                     + "/".join(f"{avg[f'PGM({e})']:.2f}" for e in (32, 128, 512)))
    hits32 = pgm_avgs["uniform_hits"]["PGM(32)"]
    ok &= 5.0 <= hits32 <= 7.0
    assert criterion(7, ok, f"1e6 keys, 7 engines x 6 workloads; " + "; ".join(parts))


def test_criterion_8_spread_constructed(criterion):
    rng = np.random.default_rng(8)
    m = 300_000
    leaf = rng.integers(0, 8, m)
    lo = rng.integers(0, 10_000, m)
    width = rng.choice([16, 64, 256], m)
    uni = spread_diagnostic(leaf, lo, lo + width - 1, lo + rng.integers(0, width))
    point = spread_diagnostic(leaf, lo, lo + width - 1, lo + width // 2)
    ok = 0.95 <= uni.ratio <= 1.05 and point.ratio == 0.0 and point.support == 1.0
    assert criterion(8, ok, f"uniform ratio {uni.ratio:.3f}, point-mass ratio {point.ratio:.3f} "
                            f"support {point.support:.1f}")


@pytest.mark.slow
def test_criterion_8_books_pattern(criterion):
    name = "books_200M_uint32"
    path = data_file(name)
    if path is None:
        pytest.skip(f"{name} not present (set ROUTEDINDEX_DATA_DIR)")
    ks = ingest_sosd(path, TABLE4[name])
    ratios = {}
    for kind in ("uniform_hits", "gaps"):
        train = Workload.from_queries(gen_workload(WorkloadSpec(kind, 200_000, TRAIN_SEED), ks))
        idx = build_shadow(ks, train, 1024, "radix", 18)
        qs = gen_workload(WorkloadSpec(kind, 200_000, 0), ks)
        s, _, _ = idx.route_batch(qs)
        lo, hi = idx.window_batch(s, qs)
        ranks, _ = idx.lookup_batch(qs)
        ratios[kind] = spread_diagnostic(s, lo, hi, ranks).ratio
    ok = ratios["uniform_hits"] > 0.5 and ratios["gaps"] < 0.2
    assert criterion(8, ok, f"Books hits ratio {ratios['uniform_hits']:.2f}, gaps ratio {ratios['gaps']:.2f}")


def test_criterion_9_dynamic(criterion):
    ok, parts = True, []
    for beta in (2, 8):
        rep = replay_random(100_000, beta, seed=9)
        ok &= rep.mismatches == 0 and rep.within_bound
        parts.append(f"beta={beta}: {rep.mismatches} mismatches, work {rep.rebuild_work} <= {rep.work_bound:.0f}")
    assert criterion(9, ok, "; ".join(parts))


def test_criterion_10_ingestion_roundtrip(tmp_path, criterion):
    rng = np.random.default_rng(10)
    ok = True
    for width in (4, 8):
        vals = np.unique(rng.integers(0, 1 << (8 * width - 1), 1000)).astype(np.uint64)
        p = tmp_path / f"synthetic_uint{8 * width}"
        write_sosd(p, vals, width)
        spec = DatasetSpec(p.name, width, vals.size, hashlib.md5(p.read_bytes()).hexdigest())
        ok &= p.stat().st_size == spec.file_size
        ok &= ingest_sosd(p, spec, verify_md5=True).keys.tolist() == vals.tolist()
    assert criterion(10, ok, "self-written 32- and 64-bit SOSD files round-trip with size and MD5 checks")


@pytest.mark.slow
@pytest.mark.parametrize("name", list(TABLE4))
def test_criterion_10_real_checksums(name, criterion):
    path = data_file(name)
    if path is None:
        pytest.skip(f"{name} not present (set ROUTEDINDEX_DATA_DIR)")
    spec = TABLE4[name]
    size_ok = path.stat().st_size == spec.file_size
    digest = file_md5(path)
    assert criterion(10, size_ok and digest == spec.md5, f"{name}: size {path.stat().st_size}, md5 {digest}")
