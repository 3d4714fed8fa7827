"""Benchmark runner: build engines, replay query streams, meter and checksum."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .._kernels import fnv1a64
from ..core import KeySet, Workload
from ..index.engines import RoutedIndex, build_engine
from ..residual import spread_diagnostic
from .workloads import WorkloadSpec, gen_workload

log = logging.getLogger(__name__)

SCHEMA = "routedindex-bench/1"
TRAIN_SEED = 987_654_321


class ChecksumDivergenceError(RuntimeError):
    """An engine returned a rank sequence different from the oracle's."""


class SchemaError(ValueError):
    pass


def rank_checksum(ranks: np.ndarray) -> str:
    """FNV-1a 64 over the little-endian uint64 encoding of the ranks."""
    return f"{int(fnv1a64(np.asarray(ranks, dtype=np.uint64))):016x}"


@dataclass(frozen=True)
class EngineConfig:
    family: str  # binary | pla | spline | shadow-o | shadow-r
    eps: int = 32
    budget: int = 1024
    radix_bits: int = 18

    @property
    def label(self) -> str:
        if self.family == "binary":
            return "Binary"
        if self.family in ("pla", "spline"):
            return f"{'PGM' if self.family == 'pla' else 'RS'}({self.eps})"
        return f"{'Shadow-O' if self.family == 'shadow-o' else 'Shadow-R'}({self.budget})"

    @property
    def workload_dependent(self) -> bool:
        return self.family.startswith("shadow")


def default_engines(epsilons: Sequence[int] = (32, 128, 512), budgets: Sequence[int] = (256, 1024),
                    radix_bits: int = 18) -> list[EngineConfig]:
    out = [EngineConfig("binary")]
    out += [EngineConfig("pla", eps=e) for e in epsilons]
    out += [EngineConfig("spline", eps=e, radix_bits=radix_bits) for e in epsilons]
    out += [EngineConfig(f, budget=b, radix_bits=radix_bits) for f in ("shadow-o", "shadow-r") for b in budgets]
    return out


@dataclass
class BenchRecord:
    dataset: str
    workload: str
    index: str
    family: str
    config: str
    seed: int
    queries: int
    build_ms: float
    total_bytes: int
    directory_bytes: int
    repair_program_bytes: int
    atoms: int
    mean_ns: float
    p95_ns: float
    repair_avg: float
    route_avg: float
    fallback_count: int
    entropy_ratio: float
    support: float
    mean_window: float
    checksum: str

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RunConfig:
    queries: int = 200_000
    seeds: Sequence[int] = (0, 1, 2)
    warmup: int = 1000
    latency_sample: int = 20_000
    workload_params: dict = field(default_factory=dict)


def _build(cfg: EngineConfig, keyset: KeySet, workload: Optional[Workload]) -> RoutedIndex:
    return build_engine(cfg.family, keyset, eps=cfg.eps, budget=cfg.budget, radix_bits=cfg.radix_bits,
                        workload=workload)


def measure(index: RoutedIndex, stream: np.ndarray, warmup: int, latency_sample: int,
            oracle_checksum: str) -> dict:
    warm, measured = stream[:warmup], stream[warmup:]
    if warm.size:
        index.lookup_batch(warm, audit=False)
    t0 = time.perf_counter_ns()
    ranks, met = index.lookup_batch(measured, audit=False)
    elapsed = time.perf_counter_ns() - t0
    checksum = rank_checksum(ranks)
    if checksum != oracle_checksum:
        raise ChecksumDivergenceError(f"{index.name}: checksum {checksum} differs from oracle {oracle_checksum}")
    s, _, _ = index.route_batch(measured)
    lo, hi = index.window_batch(s, measured)
    index.audit(measured, lo, hi)
    diag = spread_diagnostic(s, lo, hi, ranks)
    sample = measured[:latency_sample].tolist()
    lat = np.empty(len(sample), np.int64)
    clock = time.perf_counter_ns
    look = index.lookup
    for i, q in enumerate(sample):
        t = clock()
        look(q)
        lat[i] = clock() - t
    return {
        "mean_ns": elapsed / max(1, measured.size),
        "p95_ns": float(np.percentile(lat, 95)) if lat.size else float("nan"),
        "repair_avg": float(met.repair_comparisons.mean()),
        "route_avg": float(met.route_comparisons.mean()),
        "fallback_count": int(met.fallback.sum()),
        "entropy_ratio": diag.ratio,
        "support": diag.support,
        "mean_window": diag.mean_window,
        "checksum": checksum,
    }


def run_benchmark(datasets: dict[str, KeySet], workloads: Sequence[str], engines: Sequence[EngineConfig],
                  run: RunConfig = RunConfig()) -> list[BenchRecord]:
    """Every (dataset, workload, engine, seed) cell; aborts on any checksum divergence."""
    records: list[BenchRecord] = []
    for ds_name, keyset in datasets.items():
        static_cache: dict[EngineConfig, RoutedIndex] = {}
        for kind in workloads:
            spec_kw = dict(run.workload_params)
            train = Workload.from_queries(gen_workload(WorkloadSpec(kind, run.queries, TRAIN_SEED, **spec_kw), keyset))
            built = {}
            for cfg in engines:
                if cfg.workload_dependent:
                    built[cfg] = _build(cfg, keyset, train)
                else:
                    if cfg not in static_cache:
                        static_cache[cfg] = _build(cfg, keyset, None)
                    built[cfg] = static_cache[cfg]
            for seed in run.seeds:
                stream = gen_workload(WorkloadSpec(kind, run.queries + run.warmup, seed, **spec_kw), keyset)
                oracle = rank_checksum(keyset.rank_many(stream[run.warmup:]))
                for cfg, index in built.items():
                    m = measure(index, stream, run.warmup, run.latency_sample, oracle)
                    records.append(BenchRecord(
                        dataset=ds_name, workload=kind, index=cfg.label, family=index.family,
                        config=index.config, seed=seed, queries=run.queries, build_ms=index.build_ms,
                        total_bytes=index.total_bytes, directory_bytes=index.directory_bytes,
                        repair_program_bytes=index.repair_program_bytes, atoms=index.atoms, **m))
                    log.info("%s %s %s seed=%d mean=%.1fns repair=%.2f", ds_name, kind, cfg.label, seed,
                             m["mean_ns"], m["repair_avg"])
    return records


def write_records(records: Iterable[BenchRecord], path: Optional[str | Path] = None) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}; latency_sample=prefix; p95=scalar-path; checksum=fnv1a64-le-u64\n")
    w = csv.DictWriter(buf, fieldnames=BenchRecord.columns(), lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(asdict(r))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_records(text: str) -> list[BenchRecord]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#") or f"schema={SCHEMA}" not in lines[0]:
        raise SchemaError(f"missing or unknown schema header; expected {SCHEMA}")
    reader = csv.DictReader(lines[1:])
    if reader.fieldnames != BenchRecord.columns():
        raise SchemaError("column set differs from the current schema")
    out = []
    types = {f.name: f.type for f in fields(BenchRecord)}
    for row in reader:
        vals = {}
        for k, v in row.items():
            t = types[k]
            vals[k] = int(v) if t == "int" else float(v) if t == "float" else v
        out.append(BenchRecord(**vals))
    return out
