"""Datasets, workloads, the benchmark runner and table aggregation."""
from .aggregate import aggregate, mean_ci, pearson, summarize
from .datasets import (SYNTHETIC, TABLE4, DatasetError, DatasetSpec, extract_keys, ingest_sosd, load_dataset,
                       synthetic_keys, write_sosd)
from .runner import (SCHEMA, BenchRecord, ChecksumDivergenceError, EngineConfig, RunConfig, SchemaError,
                     default_engines, rank_checksum, read_records, run_benchmark, write_records)
from .workloads import HITS_KINDS, KINDS, WorkloadSpec, gen_workload

__all__ = [
    "BenchRecord", "ChecksumDivergenceError", "DatasetError", "DatasetSpec", "EngineConfig", "HITS_KINDS", "KINDS",
    "RunConfig", "SCHEMA", "SYNTHETIC", "SchemaError", "TABLE4", "WorkloadSpec", "aggregate", "default_engines",
    "extract_keys", "gen_workload", "ingest_sosd", "load_dataset", "mean_ci", "pearson", "rank_checksum",
    "read_records", "run_benchmark", "summarize", "synthetic_keys", "write_records", "write_sosd",
]
