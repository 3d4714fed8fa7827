"""Plain-text summary tables from benchmark CSVs."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .datasets import SHORT_NAMES
from .runner import BenchRecord
from .workloads import SHORT

UNDEF = "undef"
FAMILIES = ("Binary", "Shadow", "PGM", "RS")


@dataclass
class Summary:
    """One configuration averaged over seeds."""

    dataset: str
    workload: str
    index: str
    family: str
    n: int
    mean_ns: tuple[float, Optional[float]]
    p95_ns: tuple[float, Optional[float]]
    build_ms: tuple[float, Optional[float]]
    total_bytes: float
    directory_bytes: float
    repair_avg: float
    route_avg: float
    entropy_ratio: float
    support: float
    mean_window: float

    @property
    def group(self) -> str:
        return "Shadow" if self.family.startswith("Shadow") else self.family


def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, Optional[float]]:
    """Mean and half-width of the Student-t confidence interval (None for one value)."""
    v = np.asarray(values, float)
    m = float(v.mean())
    if v.size < 2:
        return m, None
    half = float(stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))
    return m, half


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or x.std() == 0 or y.std() == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def summarize(records: Iterable[BenchRecord]) -> list[Summary]:
    groups: dict = defaultdict(list)
    for r in records:
        groups[r.dataset, r.workload, r.index].append(r)
    out = []
    for (ds, wl, idx), rs in groups.items():
        avg = lambda name: float(np.mean([getattr(r, name) for r in rs]))
        out.append(Summary(ds, wl, idx, rs[0].family, len(rs),
                           mean_ci([r.mean_ns for r in rs]), mean_ci([r.p95_ns for r in rs]),
                           mean_ci([r.build_ms for r in rs]), avg("total_bytes"), avg("directory_bytes"),
                           avg("repair_avg"), avg("route_avg"), avg("entropy_ratio"), avg("support"),
                           avg("mean_window")))
    return out


def fmt_ci(v: tuple[float, Optional[float]], digits: int = 1) -> str:
    m, h = v
    return f"{m:.{digits}f}" if h is None or math.isnan(h) else f"{m:.{digits}f}+-{h:.{digits}f}"


def fmt_num(x: Optional[float], digits: int = 2) -> str:
    return UNDEF if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.{digits}f}"


def render(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    line = lambda cells: "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([line(header), line(["-" * w for w in widths]), *map(line, rows)]) + "\n"


def _ds(name: str) -> str:
    return SHORT_NAMES.get(name, name)


def _fastest(items: Iterable[Summary]) -> Optional[Summary]:
    items = list(items)
    return min(items, key=lambda s: s.mean_ns[0]) if items else None


def table_results(summ: Sequence[Summary], workload: str = "uniform_hits") -> str:
    rows = []
    for ds in sorted({s.dataset for s in summ}):
        for fam in FAMILIES:
            best = _fastest(s for s in summ if s.dataset == ds and s.workload == workload and s.group == fam)
            if best:
                rows.append([_ds(ds), best.index, f"{best.total_bytes / 1e6:.2f}", f"{best.directory_bytes / 1e6:.2f}",
                             fmt_ci(best.build_ms), fmt_ci(best.mean_ns), fmt_ci(best.p95_ns), f"{best.repair_avg:.2f}"])
    return render(["Dataset", "Index", "Size MB", "Dir MB", "Build ms", "Mean ns", "p95 ns", "Repair"], rows)


def table_stress(summ: Sequence[Summary]) -> str:
    rows = []
    for ds in sorted({s.dataset for s in summ}):
        for wl in [w for w in SHORT if w != "uniform_hits"]:
            cells = []
            for fam in FAMILIES:
                best = _fastest(s for s in summ if s.dataset == ds and s.workload == wl and s.group == fam)
                cells.append(fmt_ci(best.mean_ns) if best else "-")
            if any(c != "-" for c in cells):
                rows.append([_ds(ds), SHORT[wl], *cells])
    return render(["Dataset", "Workload", *FAMILIES], rows)


def table_spread(summ: Sequence[Summary]) -> str:
    rows = []
    for ds in sorted({s.dataset for s in summ}):
        for wl in SHORT:
            best = _fastest(s for s in summ if s.dataset == ds and s.workload == wl and s.group == "Shadow")
            if best:
                rows.append([_ds(ds), SHORT[wl], best.index, fmt_num(best.entropy_ratio),
                             f"{best.support:.1f}", f"{best.mean_window:.1f}"])
    return render(["Dataset", "Workload", "Index", "Ratio", "Support", "Window"], rows)


def table_overhead(summ: Sequence[Summary], workload: str = "uniform_hits") -> str:
    rows = []
    for ds in sorted({s.dataset for s in summ}):
        o = _fastest(s for s in summ if s.dataset == ds and s.workload == workload and s.family == "Shadow-O")
        r = _fastest(s for s in summ if s.dataset == ds and s.workload == workload and s.family == "Shadow-R")
        if o or r:
            rows.append([_ds(ds),
                         f"{o.total_bytes / 1e6:.2f}" if o else "-", f"{r.total_bytes / 1e6:.2f}" if r else "-",
                         fmt_ci(o.mean_ns) if o else "-", fmt_ci(r.mean_ns) if r else "-",
                         f"{o.route_avg:.1f}" if o else "-", f"{r.route_avg:.1f}" if r else "-"])
    return render(["Dataset", "Ord MB", "Rad MB", "Ordered ns", "Radix ns", "Ord route", "Rad route"], rows)


def table_correlation(summ: Sequence[Summary]) -> str:
    rows = []
    for ds in sorted({s.dataset for s in summ}):
        learned = [s for s in summ if s.dataset == ds and s.group != "Binary"]
        hits = [s for s in learned if s.workload == "uniform_hits"]
        rows.append([_ds(ds), fmt_num(pearson([s.repair_avg for s in hits], [s.mean_ns[0] for s in hits])),
                     fmt_num(pearson([s.repair_avg for s in learned], [s.mean_ns[0] for s in learned]))])
    return render(["Dataset", "Hits learned", "All workloads"], rows)


def aggregate(records: Sequence[BenchRecord]) -> dict[str, str]:
    summ = summarize(records)
    return {
        "table3_results.txt": table_results(summ),
        "tableA1_stress.txt": table_stress(summ),
        "tableA2_spread.txt": table_spread(summ),
        "tableA3_overhead.txt": table_overhead(summ),
        "tableA4_correlation.txt": table_correlation(summ),
    }
