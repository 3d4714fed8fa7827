import os
from pathlib import Path

import numpy as np
import pytest

from routedindex.core import KeySet, LeafInterval, Partition, Workload

DATA_DIR = os.environ.get("ROUTEDINDEX_DATA_DIR")


@pytest.fixture
def running_keys() -> KeySet:
    return KeySet(np.arange(10, 90, 10))


@pytest.fixture
def running_partition() -> Partition:
    return Partition.from_cuts([46], masses=[0.75, 0.25])


def data_file(name: str):
    if not DATA_DIR:
        return None
    p = Path(DATA_DIR) / name
    return p if p.exists() else None


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion's verdict; printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        prev = _CRITERIA.get(number)
        ok = ok and (prev is None or prev[0])
        detail = detail if prev is None else f"{prev[1]}; {detail}"
        _CRITERIA[number] = (ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
