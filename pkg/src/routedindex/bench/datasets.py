"""SOSD-format datasets: checksum table, reader/writer, synthetic generators."""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import KeySet

log = logging.getLogger(__name__)

HEADER_BYTES = 8


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    width: int  # bytes per value, 4 or 8
    count: int
    md5: Optional[str] = None

    def __post_init__(self):
        if self.width not in (4, 8):
            raise ValueError("value width must be 4 or 8 bytes")

    @property
    def file_size(self) -> int:
        return HEADER_BYTES + self.count * self.width

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<u4") if self.width == 4 else np.dtype("<u8")

    @classmethod
    def from_name(cls, name: str, count: Optional[int] = None) -> "DatasetSpec":
        """Infer the width from an SOSD-style name suffix (``_uint32``/``_uint64``)."""
        if name in TABLE4:
            return TABLE4[name]
        width = 4 if name.endswith("uint32") else 8
        return cls(name, width, count if count is not None else -1)


TABLE4 = {
    s.name: s
    for s in (
        DatasetSpec("books_200M_uint32", 4, 200_000_000, "55845580be1554d82be1c0dda416005c"),
        DatasetSpec("fb_200M_uint64", 8, 200_000_000, "679eff3bfbc80572b30f6575b40b6918"),
        DatasetSpec("wiki_ts_200M_uint64", 8, 200_000_000, "4f1402b1c476d67f77d2da4955432f7d"),
        DatasetSpec("osm_cellids_800M_uint64", 8, 800_000_000, "70670bf41196b9591e07d0128a281b9a"),
    )
}

SHORT_NAMES = {"books_200M_uint32": "Books", "fb_200M_uint64": "FB", "wiki_ts_200M_uint64": "Wiki",
               "osm_cellids_800M_uint64": "OSM"}


def file_md5(path: str | os.PathLike, chunk: int = 1 << 24) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def write_sosd(path: str | os.PathLike, values, width: int = 8) -> None:
    dtype = np.dtype("<u4") if width == 4 else np.dtype("<u8")
    arr = np.asarray(values)
    if width == 4 and arr.size and int(arr.max()) > 0xFFFFFFFF:
        raise DatasetError("values do not fit in 32 bits")
    arr = arr.astype(dtype)
    with open(path, "wb") as fh:
        fh.write(np.array([arr.size], dtype="<u8").tobytes())
        fh.write(arr.tobytes())


@dataclass
class IngestReport:
    count: int
    duplicates: int
    was_sorted: bool
    md5: Optional[str] = None


def ingest_sosd(path: str | os.PathLike, spec: Optional[DatasetSpec] = None, verify_md5: bool = False,
                report: Optional[IngestReport] = None) -> KeySet:
    """Read an SOSD file into a KeySet, widening 32-bit values to 64 bits.

    Validates the header count against the file size (and the declared
    spec when given); sorts unsorted input and collapses duplicates, which
    are counted and logged rather than rejected.
    """
    path = Path(path)
    if spec is None:
        spec = DatasetSpec.from_name(path.name)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        count = int(np.frombuffer(fh.read(HEADER_BYTES), dtype="<u8")[0])
    if size != HEADER_BYTES + count * spec.width:
        raise DatasetError(f"{path.name}: size {size} does not match header count {count} x {spec.width}")
    if spec.count >= 0 and count != spec.count:
        raise DatasetError(f"{path.name}: header count {count}, expected {spec.count}")
    digest = None
    if verify_md5:
        if spec.md5 is None:
            raise DatasetError(f"{path.name}: no reference digest to verify against")
        digest = file_md5(path)
        if digest != spec.md5:
            raise DatasetError(f"{path.name}: MD5 {digest} does not match {spec.md5}")
    raw = np.fromfile(path, dtype=spec.dtype, count=count, offset=HEADER_BYTES).astype(np.uint64)
    was_sorted = bool(np.all(raw[1:] >= raw[:-1])) if raw.size > 1 else True
    keys = np.unique(raw) if not was_sorted else raw[np.concatenate([[True], raw[1:] != raw[:-1]])]
    dups = int(raw.size - keys.size)
    if dups:
        log.warning("%s: collapsed %d duplicate keys", path.name, dups)
    if report is not None:
        report.count, report.duplicates, report.was_sorted, report.md5 = count, dups, was_sorted, digest
    return KeySet(keys)


def extract_keys(keyset: KeySet, k: int = 1024) -> KeySet:
    """k keys at indices floor(i*n/k).  Equal spacing never repeats an index
    when n >= k, so the result is already strictly increasing."""
    n = keyset.n
    if n <= k:
        return keyset
    idx = (np.arange(k, dtype=np.int64) * n) // k
    return KeySet(keyset.keys[idx])


# -- synthetic datasets --------------------------------------------------------

SYNTHETIC = ("uniform", "segmented", "lognormal")


def synthetic_keys(kind: str, n: int, seed: int = 0) -> KeySet:
    rng = np.random.default_rng(np.random.SeedSequence([seed, sum(map(ord, kind))]))
    if kind == "uniform":
        keys = np.unique(rng.integers(0, 1 << 63, size=n + n // 16, dtype=np.uint64))
        while keys.size < n:
            keys = np.unique(np.concatenate([keys, rng.integers(0, 1 << 63, size=n, dtype=np.uint64)]))
        keys = np.sort(rng.choice(keys, n, replace=False))
    elif kind == "segmented":
        # piecewise-linear: a few runs with different constant spacings
        runs = max(1, min(64, n // 1000))
        bounds = np.sort(rng.choice(np.arange(1, n), runs - 1, replace=False)) if runs > 1 else np.zeros(0, int)
        lens = np.diff(np.concatenate([[0], bounds, [n]]))
        steps = rng.integers(1, 1 << 20, size=runs)
        jumps = rng.integers(1, 1 << 30, size=runs)
        gaps = np.repeat(steps, lens).astype(np.uint64)
        starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
        gaps[starts] = jumps.astype(np.uint64)
        keys = np.cumsum(gaps, dtype=np.uint64)
    elif kind == "lognormal":
        gaps = np.maximum(1, rng.lognormal(mean=0.0, sigma=2.0, size=n) * 1000).astype(np.uint64)
        keys = np.cumsum(gaps, dtype=np.uint64)
    else:
        raise ValueError(f"unknown synthetic dataset {kind!r}; choose from {SYNTHETIC}")
    return KeySet(keys)


def load_dataset(name: str, data_dir: Optional[str] = None, n: int = 1_000_000, seed: int = 0,
                 verify_md5: bool = False) -> KeySet:
    """``synthetic:<kind>`` names are generated; anything else is read from ``data_dir``."""
    if name.startswith("synthetic:"):
        return synthetic_keys(name.split(":", 1)[1], n, seed)
    if data_dir is None:
        raise DatasetError("a data directory is required for file datasets")
    return ingest_sosd(Path(data_dir) / name, TABLE4.get(name), verify_md5=verify_md5)
