import csv
import io

import pytest

from routedindex.cli import build_parser, main


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_parser_defaults():
    args = build_parser().parse_args(["bench"])
    assert args.radix_bits == 18 and args.queries == 200_000
    args = build_parser().parse_args(["exact-param"])
    assert args.quantum == 16 and args.queries == 50_000


def test_allocate_powerlaw(tmp_path, capsys):
    spec = tmp_path / "leaves.csv"
    spec.write_text("p,kappa,R,alpha\n" + "".join("0.03125,256,256,1\n" for _ in range(32)))
    out, cert = tmp_path / "alloc.csv", tmp_path / "cert.csv"
    assert main(["allocate", str(spec), "--budget", "32,64", "--out", str(out), "--certificate", str(cert)]) == 0
    alloc = rows(out)
    assert len(alloc) == 64
    c = rows(cert)
    assert float(c[0]["closed_form_repair"]) == pytest.approx(7.01, abs=0.01)
    for r in c:
        assert int(r["atoms_used"]) <= int(r["budget"])
        assert float(r["dual_bound"]) <= float(r["repair_bits"]) + 1e-9


def test_profile_then_allocate(tmp_path):
    prof = tmp_path / "prof.csv"
    assert main(["profile", "--dataset", "synthetic:uniform", "--n", "3000", "--extract", "256",
                 "--leaves", "4", "--out", str(prof)]) == 0
    r = rows(prof)
    assert {x["interval_id"] for x in r} == {"0", "1", "2", "3"}
    out = tmp_path / "a.csv"
    assert main(["allocate", str(prof), "--budget", "8", "--out", str(out),
                 "--certificate", str(tmp_path / "c.csv")]) == 0
    assert sum(int(x["atoms"]) for x in rows(out)) <= 8


def test_exact_param(tmp_path):
    out = tmp_path / "t2.csv"
    assert main(["exact-param", "--dataset", "synthetic:lognormal", "--n", "4000", "--workload", "uniform_hits",
                 "--queries", "5000", "--out", str(out)]) == 0
    (r,) = rows(out)
    assert float(r["rgap_0"]) == pytest.approx(float(r["answer_entropy"]), abs=1e-6)
    assert r["program_nodes"] == "1024"
    with pytest.raises(SystemExit):
        main(["exact-param", "--dataset", "synthetic:uniform", "--n", "2000", "--workload", "misses"])


def test_bench_aggregate_diagnose(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--dataset", "synthetic:segmented", "--n", "20000", "--workload", "uniform_hits",
                 "--workload", "misses", "--queries", "2000", "--seeds", "2", "--epsilon", "16",
                 "--budget", "64", "--radix-bits", "10", "--warmup", "50", "--latency-sample", "100",
                 "--out", str(out)]) == 0
    tables = tmp_path / "tables"
    assert main(["aggregate", str(out), "--out", str(tables)]) == 0
    assert (tables / "table3_results.txt").read_text().startswith("Dataset")
    assert len(list(tables.iterdir())) == 5
    assert main(["diagnose", "--csv", str(out)]) == 0
    assert "Ratio" in capsys.readouterr().out


def test_dynamic_sim(capsys):
    assert main(["dynamic-sim", "--ops", "2000", "--beta", "2,4"]) == 0
    text = capsys.readouterr().out
    assert "mismatches" in text and "NO" not in text


def test_unknown_workload():
    with pytest.raises(SystemExit):
        main(["bench", "--workload", "nope"])
