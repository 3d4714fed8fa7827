"""Command-line driver for every experiment in the package."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .alloc import PowerLawLeaf, greedy_allocate, powerlaw_cost, powerlaw_radii
from .bench.aggregate import aggregate, render, summarize, table_spread
from .bench.datasets import SYNTHETIC, TABLE4, extract_keys, load_dataset
from .bench.runner import EngineConfig, RunConfig, default_engines, read_records, run_benchmark, write_records
from .bench.workloads import HITS_KINDS, KINDS, SHORT, WorkloadSpec, gen_workload
from .core import KeySet, LeafInterval, Workload
from .index.dynamic import replay_random
from .profile import profile_curve, read_profiles_csv, write_profiles_csv
from .residual import TranscriptConfig, exact_eval

DATA_ENV = "ROUTEDINDEX_DATA_DIR"
EXACT_BUDGETS = (0, 4, 8, 16, 32, 64, 128)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _seeds(spec: str) -> list[int]:
    """``3`` means seeds 0,1,2; ``4,7`` lists them explicitly."""
    if "," in spec:
        return [int(s) for s in spec.split(",") if s]
    return list(range(int(spec)))


def _ints(spec: str) -> list[int]:
    return [int(s) for s in spec.split(",") if s]


def _datasets(args) -> dict[str, KeySet]:
    names = args.dataset or ["synthetic:uniform"]
    return {name: load_dataset(name, args.data_dir, n=args.n, seed=args.data_seed, verify_md5=args.verify_md5)
            for name in names}


def _workloads(args, default: Sequence[str] = KINDS) -> list[str]:
    kinds = args.workload or list(default)
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise SystemExit(f"unknown workload(s) {bad}; choose from {KINDS}")
    return kinds


def _wl_params(args) -> dict:
    return {"zipf_s": args.zipf_s, "hotspot_mass": args.hotspot_mass, "hotspot_width": args.hotspot_width}


# -- subcommands ---------------------------------------------------------------

def cmd_profile(args) -> int:
    """Exact profile curves for an equal-count partition of the extracted sample."""
    profiles = []
    for name, ks in _datasets(args).items():
        sample = extract_keys(ks, args.extract)
        m = max(1, min(args.leaves, sample.n))
        cut_idx = sorted({(j * sample.n) // m for j in range(1, m)} - {0})
        bounds = [0, *[int(sample.keys[i]) for i in cut_idx], None]
        for j, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
            profiles.append(profile_curve(sample, LeafInterval(lo, hi), interval_id=j))
        logging.info("%s: %d leaves over %d keys", name, m, sample.n)
    _emit(write_profiles_csv(profiles), args.out)
    return 0


def _read_leaf_spec(text: str):
    """Power-law leaf rows (p, kappa, R, alpha) or a profile CSV with an optional mass column."""
    header = next(csv.reader(io.StringIO(text)), [])
    if "kappa" in header:
        rows = list(csv.DictReader(io.StringIO(text)))
        leaves = [PowerLawLeaf(float(r["p"]), float(r["kappa"]), int(r["R"]), float(r.get("alpha") or 1.0))
                  for r in rows]
        return leaves, [leaf.profile() for leaf in leaves], [leaf.p for leaf in leaves]
    if "interval_id" in header:
        profs = read_profiles_csv(text)
        masses = {}
        if "p" in header:
            for r in csv.DictReader(io.StringIO(text)):
                masses[int(r["interval_id"])] = float(r["p"])
        if masses:
            ps = [masses[p.interval_id] for p in profs]
        else:
            ps = [1.0 / len(profs)] * len(profs)
        return None, profs, ps
    raise SystemExit("leaf spec needs either p,kappa,R,alpha columns or a profile CSV")


def cmd_allocate(args) -> int:
    leaves, profiles, masses = _read_leaf_spec(Path(args.leaf_spec).read_text(encoding="utf-8"))
    budgets = args.budget or [32]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["budget", "leaf", "p", "radius", "atoms"])
    certs = []
    for b in budgets:
        alloc = greedy_allocate(profiles, masses, b)
        for j, (p, d, a) in enumerate(zip(alloc.masses, alloc.radii, alloc.atoms)):
            w.writerow([b, j, f"{p:.12g}", d, a])
        cert = {"budget": b, "atoms_used": alloc.atoms_used, "lambda": alloc.lam,
                "entropy_bits": alloc.entropy_bits, "repair_bits": alloc.repair_bits,
                "dual_bound": alloc.dual_bound}
        if leaves is not None:
            ent, rep = powerlaw_cost(leaves, b)
            cert.update(closed_form_entropy=ent, closed_form_repair=rep,
                        closed_form_radii=" ".join(map(str, powerlaw_radii(leaves, b))))
        certs.append(cert)
    _emit(buf.getvalue(), args.out)
    cbuf = io.StringIO()
    cw = csv.DictWriter(cbuf, fieldnames=list(certs[0]), lineterminator="\n")
    cw.writeheader()
    cw.writerows(certs)
    if args.certificate:
        _emit(cbuf.getvalue(), args.certificate)
    else:
        sys.stderr.write(cbuf.getvalue())
    return 0


def cmd_exact_param(args) -> int:
    cfg = TranscriptConfig(quantum=args.quantum)
    selected = args.budget[0] if args.budget else 32
    budgets = sorted(set(EXACT_BUDGETS) | {selected})
    buf = io.StringIO()
    cols = (["dataset", "workload", "answer_entropy"] + [f"rgap_{b}" for b in budgets] + [f"gap_{b}" for b in budgets]
            + ["budget", "atoms", "program_nodes"])
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    kinds = _workloads(args, HITS_KINDS)
    if any(k not in HITS_KINDS for k in kinds):
        raise SystemExit("exact evaluation needs a hits workload (support on the sampled keys)")
    for name, ks in _datasets(args).items():
        sample = extract_keys(ks, 1024)
        for kind in kinds:
            for seed in _seeds(args.seeds):
                stream = gen_workload(WorkloadSpec(kind, args.queries, seed, **_wl_params(args)), sample)
                res = exact_eval(sample, Workload.from_queries(stream), cfg, budgets)
                row = {"dataset": name, "workload": kind, "answer_entropy": f"{res.answer_entropy:.6f}",
                       "budget": selected}
                for b, r, g in zip(budgets, res.rgap, res.gap):
                    row[f"rgap_{b}"], row[f"gap_{b}"] = f"{r:.6f}", f"{g:.6f}"
                k = budgets.index(selected)
                row["atoms"] = res.rgap_selection[k].atoms
                row["program_nodes"] = res.program_nodes[k]
                w.writerow(row)
                logging.info("%s %s seed=%d RGap(0)=%.3f RGap(%d)=%.3f", name, kind, seed, res.rgap[0], selected,
                             res.rgap[k])
    _emit(buf.getvalue(), args.out)
    return 0


def _engine_configs(args, families: Optional[Sequence[str]] = None) -> list[EngineConfig]:
    engines = default_engines(args.epsilon or (32, 128, 512), args.budget or (256, 1024), args.radix_bits)
    families = families or args.engine
    if families:
        engines = [e for e in engines if e.family in families]
    return engines


def _run_config(args) -> RunConfig:
    return RunConfig(queries=args.queries, seeds=_seeds(args.seeds), warmup=args.warmup,
                     latency_sample=args.latency_sample, workload_params=_wl_params(args))


def cmd_bench(args) -> int:
    recs = run_benchmark(_datasets(args), _workloads(args), _engine_configs(args), _run_config(args))
    _emit(write_records(recs), args.out)
    return 0


def cmd_diagnose(args) -> int:
    if args.csv:
        recs = [r for path in args.csv for r in read_records(Path(path).read_text(encoding="utf-8"))]
    else:
        recs = run_benchmark(_datasets(args), _workloads(args), _engine_configs(args, ("shadow-o", "shadow-r")),
                             _run_config(args))
    _emit(table_spread(summarize(recs)), args.out)
    return 0


def cmd_dynamic_sim(args) -> int:
    rows = []
    for beta in args.beta:
        for seed in _seeds(args.seeds):
            rep = replay_random(args.ops, beta, seed, args.universe)
            rows.append([str(beta), str(seed), str(rep.ops), str(rep.mismatches), str(rep.rebuild_work),
                         f"{rep.work_bound:.0f}", "yes" if rep.within_bound else "NO", str(rep.final_size)])
    _emit(render(["beta", "seed", "ops", "mismatches", "rebuild work", "bound", "within", "final n"], rows),
          args.out)
    return 0 if all(r[3] == "0" and r[6] == "yes" for r in rows) else 1


def cmd_aggregate(args) -> int:
    recs = [r for path in args.csv for r in read_records(Path(path).read_text(encoding="utf-8"))]
    tables = aggregate(recs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in tables.items():
            (out / name).write_text(text, encoding="utf-8")
    else:
        for name, text in tables.items():
            sys.stdout.write(f"== {name}\n{text}\n")
    return 0


# -- parser --------------------------------------------------------------------

def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", default=os.environ.get(DATA_ENV),
                   help=f"directory holding SOSD files (default ${DATA_ENV})")
    p.add_argument("--dataset", action="append",
                   help=f"file name in the data dir ({', '.join(TABLE4)}) or synthetic:<{'|'.join(SYNTHETIC)}>")
    p.add_argument("--n", type=int, default=1_000_000, help="key count for synthetic datasets")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--verify-md5", action="store_true")


def _add_workload(p: argparse.ArgumentParser, queries: int) -> None:
    p.add_argument("--workload", action="append", help=f"one of {', '.join(KINDS)} (repeatable)")
    p.add_argument("--queries", type=int, default=queries)
    p.add_argument("--seeds", default="3", help="seed count, or a comma list of seeds")
    p.add_argument("--zipf-s", type=float, default=0.99)
    p.add_argument("--hotspot-mass", type=float, default=0.9)
    p.add_argument("--hotspot-width", type=float, default=0.1)


def _add_engines(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=_ints, help="comma list of error bounds for PGM and RS")
    p.add_argument("--budget", type=_ints, help="comma list of atom budgets for the shadow engines")
    p.add_argument("--radix-bits", type=int, default=18)
    p.add_argument("--engine", action="append", choices=["binary", "pla", "spline", "shadow-o", "shadow-r"])
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--latency-sample", type=int, default=20_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="routedindex", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="exact segment-count profiles of a sampled partition")
    _add_data(p)
    p.add_argument("--extract", type=int, default=1024, help="keys kept from the dataset")
    p.add_argument("--leaves", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("allocate", help="shadow-price allocation and its dual certificate")
    p.add_argument("leaf_spec", help="CSV with p,kappa,R,alpha rows or a profile CSV")
    p.add_argument("--budget", type=_ints, help="comma list of atom budgets")
    p.add_argument("--out", help="allocation CSV")
    p.add_argument("--certificate", help="certificate CSV (default: stderr)")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("exact-param", help="exact RGap and Gap on the 1024-key extraction")
    _add_data(p)
    _add_workload(p, 50_000)
    p.set_defaults(seeds="1")
    p.add_argument("--budget", type=_ints, help="selected budget for the atoms/nodes columns (default 32)")
    p.add_argument("--quantum", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_exact_param)

    p = sub.add_parser("bench", help="latency and comparison benchmark")
    _add_data(p)
    _add_workload(p, 200_000)
    _add_engines(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diagnose", help="spread diagnostics of shadow windows")
    _add_data(p)
    _add_workload(p, 200_000)
    _add_engines(p)
    p.add_argument("--csv", action="append", help="read records instead of running")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("dynamic-sim", help="replay random updates against the levelled index")
    p.add_argument("--ops", type=int, default=100_000)
    p.add_argument("--beta", type=_ints, default=[2, 8])
    p.add_argument("--seeds", default="1")
    p.add_argument("--universe", type=int, default=1 << 32)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dynamic_sim)

    p = sub.add_parser("aggregate", help="summary tables from benchmark CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", help="directory for the table files (default: stdout)")
    p.set_defaults(func=cmd_aggregate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
