import csv
import io
import json
import logging

import pytest

from rdsmg.errors import MalformedRecord
from rdsmg.cli import build_parser, main, parse_levels, read_dg_spec

FAST = ["--particles", "6", "--iters", "4", "--seed", "2"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def write(tmp_path, text, name="net.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_loadflow_report_and_csv(capsys, tmp_path):
    vcsv = tmp_path / "v.csv"
    code, out, _ = run(capsys, "loadflow", "--csv", vcsv, "--no-timestamp")
    assert code == 0
    report = json.loads(out)
    assert report["scenario"] == "loadflow"
    assert report["min_voltage"][0] == 18
    assert [b for b, _, _ in report["voltage_profile"]] == list(range(1, 34))
    table = rows(vcsv.read_text())
    assert table[0] == ["bus", "v_pu"]
    assert len(table) == 34
    lowest = min(table[1:], key=lambda r: float(r[1]))
    assert lowest[0] == "18" and lowest[1].startswith("0.91")
    assert b"\r" not in vcsv.read_bytes()


def test_csv_timestamp_line(capsys, tmp_path):
    vcsv = tmp_path / "v.csv"
    assert run(capsys, "loadflow", "--csv", vcsv)[0] == 0
    assert vcsv.read_text().startswith("# generated ")


def test_out_file_keeps_stdout_quiet(capsys, tmp_path):
    path = tmp_path / "report.json"
    code, out, _ = run(capsys, "loadflow", "--out", path)
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["base_loss_kw"] > 0


def test_missing_file_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "loadflow", tmp_path / "absent.csv")
    assert code == 2
    assert "MalformedRecord" in err


def test_bad_dataset_exits_2(capsys, tmp_path):
    path = write(tmp_path, "#BUS\n1,0,0\n2,1,1\n3,1,1\n#BRANCH\n1,2,0.1,0.1\n")
    assert run(capsys, "site", path)[0] == 2


def test_collapse_exits_3(capsys, tmp_path):
    path = write(tmp_path, "#BUS\n1,0,0\n2,60000,40000\n#BRANCH\n1,2,1.0,1.0\n")
    code, _, err = run(capsys, "loadflow", path)
    assert code == 3
    assert "VoltageCollapse" in err or "NonConvergence" in err


def test_non_convergence_exits_3(capsys):
    code, _, err = run(capsys, "loadflow", "--max-iter", "1")
    assert code == 3 and "NonConvergence" in err


def test_site_top_3(capsys):
    code, out, _ = run(capsys, "site", "--top", "3", "--no-timestamp")
    assert code == 0
    table = rows(out)
    assert table[0] == ["bus", "mli", "rank", "candidate"]
    body = table[1:]
    assert len(body) == 32
    assert [r[3] for r in body].count("1") == 3
    assert [int(r[2]) for r in body] == list(range(1, 33))
    assert [int(r[0]) for r in body[:3]] == [25, 24, 30]


def test_site_top_32(capsys):
    code, out, _ = run(capsys, "site", "--top", "32", "--no-timestamp")
    assert code == 0
    assert all(r[3] == "1" for r in rows(out)[1:])


def test_site_two_bus(capsys, tmp_path):
    path = write(tmp_path, "#BUS\n1,0,0\n2,100,50\n#BRANCH\n1,2,0.5,0.4\n")
    code, out, _ = run(capsys, "site", path, "--no-timestamp")
    assert code == 0
    assert rows(out)[1:] == [["2", rows(out)[1][1], "1", "1"]]


def test_size_round_trip_through_loadflow(capsys, tmp_path):
    dg = tmp_path / "dg.csv"
    code, out, _ = run(capsys, "size", "--dg-csv", dg)
    assert code == 0
    report = json.loads(out)
    assert report["reduction_pct"] >= 12
    assert [r["bus"] for r in report["dg_table"]] == [25, 24, 30]
    code, out, _ = run(capsys, "loadflow", "--dg", dg)
    assert code == 0
    again = json.loads(out)
    assert abs(again["final_loss_kw"] - report["final_loss_kw"]) <= 1e-6
    assert again["scenario"] == "loadflow+dg"


def test_report_invariants(capsys):
    code, out, _ = run(capsys, "optimize", "--penetration", "60", *FAST)
    assert code == 0
    r = json.loads(out)
    assert r["reduction_pct"] == pytest.approx(100 * (r["base_loss_kw"] - r["final_loss_kw"]) / r["base_loss_kw"],
                                               rel=1e-12)
    assert [b for b, _, _ in r["voltage_profile"]] == list(range(1, 34))
    assert r["penetration_real_pct"] == pytest.approx(60.0, rel=1e-9)
    assert r["solver_stats"]["seed"] == 2
    assert set(r["dg_table"][0]) == {"kind", "bus", "p_kW", "q_kVAr", "pf", "sign"}
    assert r["reference"]["analytical_loss_kw"] > 0


def test_optimize_outputs(capsys, tmp_path):
    conv, vcsv, dg = tmp_path / "conv.csv", tmp_path / "v.csv", tmp_path / "dg.csv"
    code, out, _ = run(capsys, "optimize", "--penetration", "80", *FAST, "--convergence", conv,
                       "--csv", vcsv, "--dg-csv", dg, "--no-timestamp")
    assert code == 0
    report = json.loads(out)
    history = rows(conv.read_text())
    assert history[0] == ["iteration", "gbest_f_kW"] and len(history) == 5
    assert rows(vcsv.read_text())[0] == ["bus", "v_base_pu", "v_dg_pu"]
    code, out, _ = run(capsys, "loadflow", "--dg", dg)
    assert abs(json.loads(out)["final_loss_kw"] - report["final_loss_kw"]) <= 1e-6


def test_two_levels_give_distinct_reports(capsys):
    _, a, _ = run(capsys, "optimize", "--penetration", "50", *FAST)
    _, b, _ = run(capsys, "optimize", "--penetration", "80", *FAST)
    assert json.loads(a)["scenario"] != json.loads(b)["scenario"]
    assert json.loads(a)["final_loss_kw"] != json.loads(b)["final_loss_kw"]


@pytest.mark.parametrize("argv", [
    ["optimize", "--penetration", "80", "--iters", "0"],
    ["optimize", "--penetration", "0"],
    ["optimize", "--penetration", "101"],
    ["optimize"],
    ["sweep", "--levels", "50,abc"],
    ["sweep", "--levels", "120"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_infeasible_exits_4(capsys, tmp_path):
    # 2500 kW per unit cannot cover 80% of a 15 MW feeder
    path = write(tmp_path, "#BUS\n1,0,0\n2,5000,100\n3,5000,100\n4,5000,100\n"
                           "#BRANCH\n1,2,0.01,0.01\n2,3,0.01,0.01\n3,4,0.01,0.01\n")
    code, _, err = run(capsys, "optimize", path, "--penetration", "80", *FAST)
    assert code == 4 and "InfeasibleScenario" in err


def test_sweep_single_level_at_full_load(capsys):
    code, out, _ = run(capsys, "sweep", "--levels", "100", *FAST, "--no-timestamp")
    assert code == 0
    table = rows(out)
    assert table[0] == ["level", "final_loss_kW", "reduction_pct", "min_voltage"]
    assert len(table) == 2 and table[1][0] == "100"


def test_sweep_drops_duplicate_levels(capsys, caplog):
    with caplog.at_level(logging.WARNING, logger="rdsmg"):
        code, out, _ = run(capsys, "sweep", "--levels", "50,50,60", *FAST, "--no-timestamp")
    assert code == 0
    assert [r[0] for r in rows(out)[1:]] == ["50", "60"]
    assert any("duplicate" in rec.message for rec in caplog.records)


def test_seed_from_environment(capsys, monkeypatch):
    fast = ["--particles", "6", "--iters", "3"]
    monkeypatch.setenv("RDSMG_SEED", "7")
    _, out, _ = run(capsys, "optimize", "--penetration", "50", *fast)
    assert json.loads(out)["solver_stats"]["seed"] == 7
    _, explicit, _ = run(capsys, "optimize", "--penetration", "50", *fast, "--seed", "7")
    assert explicit == out
    monkeypatch.delenv("RDSMG_SEED")
    _, default, _ = run(capsys, "optimize", "--penetration", "50", *fast)
    assert json.loads(default)["solver_stats"]["seed"] == 0


def test_parse_levels():
    assert parse_levels("50, 60,80") == [50.0, 60.0, 80.0]
    args = build_parser().parse_args(["sweep"])
    assert args.levels == [50.0, 60.0, 80.0] and args.profile == "table2"


def test_dg_spec_errors(net33, tmp_path):
    good = write(tmp_path, "kind,bus,p_kW,pf,sign\n# c\nPV,18,500,1.0,1\nWind,30,300,0.9,-1\n", "dg.csv")
    units = read_dg_spec(good, net33)
    assert [u.bus for u in units] == [18, 30] and units[1].q < 0
    for text in ("PV,18,500,0.9,1\n", "PV,99,500,1,1\n", "PV,18,500\n", "Diesel,18,5,1,1\n"):
        with pytest.raises(MalformedRecord):
            read_dg_spec(write(tmp_path, text, "bad.csv"), net33)
