import csv
import json
from fractions import Fraction

import pytest

from stopgrid.cli import main, read_config
from stopgrid.experiments import BOUNDARY_COLUMNS, csv_text, fmt

BASE = ["--mu0", "-1", "--mu1", "1", "--sigma", "4", "--r", "0.1"]
FAST = ["--grid", "801"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", *BASE, "--N", "10", "--total-learning", "1", "--out", str(out)]) == 0
    b = rows(out / "boundaries.csv")
    assert list(b[0]) == BOUNDARY_COLUMNS
    assert [int(r["n"]) for r in b] == list(range(1, 11))
    man = json.loads((out / "manifest.json").read_text())
    run = man["runs"][0]
    assert abs(float(b[0]["b_n"]) - run["b1_closed_form"]) < 1e-4
    assert run["k"] == 0.5 and run["rho"] == 0.5 and run["gamma"] > 1
    raw = (out / "boundaries.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    curves = rows(out / "curves.csv")
    assert {"pi", "V_n", "F_n", "g_n"} <= set(curves[0])


def test_single_right_single_row(tmp_path):
    assert main(["solve", *BASE, "--N", "1", "--eps", "0.2", *FAST, "--out", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "boundaries.csv")) == 1


def test_rerun_is_byte_identical(tmp_path):
    args = ["solve", *BASE, "--N", "3", "--total-learning", "1", *FAST]
    main([*args, "--out", str(tmp_path / "a")])
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())["arguments"]
    replay = ["solve", "--mu0", str(man["mu0"]), "--mu1", str(man["mu1"]),
              "--sigma", str(man["sigma"]), "--r", str(man["r"]), "--N", str(man["N"]),
              "--total-learning", str(man["total_learning"]), "--grid", str(man["grid"]),
              "--out", str(tmp_path / "b")]
    main(replay)
    for name in ("boundaries.csv", "curves.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_invalid_parameters_exit_2(tmp_path, capsys):
    assert main(["solve", "--mu0", "1", "--mu1", "2", "--sigma", "4", "--r", "0.1", "--N", "2",
                 "--eps", "0.1", "--out", str(tmp_path)]) == 2
    assert "mu0 < 0 < mu1" in capsys.readouterr().err
    assert main(["solve", *BASE, "--N", "2", "--out", str(tmp_path)]) == 2
    assert main(["solve", *BASE, "--N", "2", "--eps", "0.1", "--total-learning", "1"]) == 2
    assert main(["solve", "--sigma", "4"]) == 2
    assert main(["nonsense"]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    args = ["solve", "--mu0", "-4", "--mu1", "1", "--sigma", "1", "--r", "0.0625", "--N", "1",
            "--eps", "0", "--grid", "801", "--out", str(tmp_path)]
    assert main(args) == 3
    assert "sign change" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("# base\nmu0 = -1\nmu1=1\nsigma=4\nr=0.1\nN=4\ntotal-learning=1\ngrid=801\n")
    assert read_config(conf)["total_learning"] == "1"
    assert main(["solve", "--config", str(conf), "--N", "2", "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["runs"][0]["N"] == 2
    assert man["grid"]["m"] == 801
    bad = tmp_path / "bad.txt"
    bad.write_text("colour=blue\n")
    assert main(["solve", "--config", str(bad)]) == 2


def test_outdir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("STOPGRID_OUTDIR", str(tmp_path / "env"))
    assert main(["solve", *BASE, "--N", "1", "--eps", "0", *FAST]) == 0
    assert (tmp_path / "env" / "boundaries.csv").exists()


def test_sweep_sigma(tmp_path, capsys):
    out = tmp_path / "s"
    code = main(["sweep", *BASE, "--N", "3", "--total-learning", "1", *FAST, "--axis", "sigma",
                 "--values", "1,4,10", "--out", str(out)])
    assert code == 0
    data = rows(out / "sweep.csv")
    b1 = [float(r["b_n"]) for r in data if r["n"] == "1"]
    assert b1 == pytest.approx([0.9564, 0.7440, 0.6091], abs=1e-4)
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert all(s["passed"] for s in summary["summaries"])
    assert "PASS" in capsys.readouterr().out


def test_sweep_records_failed_run(tmp_path):
    out = tmp_path / "s"
    code = main(["sweep", "--mu0", "-4", "--mu1", "1", "--sigma", "1", "--r", "0.0625", "--N", "1",
                 "--eps", "0", "--grid", "801", "--axis", "sigma", "--values", "1,4",
                 "--out", str(out)])
    assert code == 1
    status = [r["status"] for r in rows(out / "sweep.csv")]
    assert status[0].startswith("numerical_failure") and status[-1] == "ok"


def test_sweep_mu_pair_and_bad_values(tmp_path):
    assert main(["sweep", *BASE, "--N", "1", "--eps", "0", *FAST, "--axis", "mu_pair",
                 "--values=-5:1,-1:5", "--out", str(tmp_path)]) == 0
    assert main(["sweep", *BASE, "--N", "1", "--eps", "0", "--axis", "r",
                 "--values", "a,b", "--out", str(tmp_path)]) == 2
    assert main(["sweep", *BASE, "--N", "1", "--eps", "0", "--axis", "r",
                 "--values=-1", "--out", str(tmp_path)]) == 2


def test_figure7_fractions(tmp_path):
    assert main(["figures", "--figure", "7", "--grid", "801", "--outdir", str(tmp_path)]) == 0
    runs = json.loads((tmp_path / "figure7_manifest.json").read_text())["runs"]
    pairs = [(Fraction(r["k_fraction"]), Fraction(r["rho_fraction"])) for r in runs]
    assert pairs == [(Fraction(5, 6), Fraction(3, 2)), (Fraction(2, 3), Fraction(3, 4)),
                     (Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 3), Fraction(3, 4)),
                     (Fraction(1, 6), Fraction(3, 2))]
    for r, (k, rho) in zip(runs, pairs):
        assert r["k"] == float(k) and r["rho"] == float(rho)


def test_figure1_curves_within_bounds(tmp_path):
    assert main(["figures", "--figure", "1", "--grid", "801", "--outdir", str(tmp_path)]) == 0
    for r in rows(tmp_path / "figure1.csv"):
        lo, hi = float(r["lower_bound"]), float(r["upper_bound"])
        for col in ("V_n", "F_n"):
            assert lo - 1e-12 <= float(r[col]) <= hi + 1e-12


def test_figures_requires_choice(tmp_path):
    assert main(["figures", "--outdir", str(tmp_path)]) == 2


def test_verify_small_run(tmp_path):
    out = tmp_path / "v"
    code = main(["verify", *BASE, "--N", "2", "--total-learning", "1", *FAST, "--paths", "3000",
                 "--dt", "2e-3", "--seed", "1", "--out", str(out)])
    report = json.loads((out / "verify_report.json").read_text())
    assert code == (0 if report["passed"] else 1)
    names = [c["name"] for c in report["checks"]]
    assert any("single stop" in n for n in names)
    assert any("policy dominance" in n for n in names)
    assert (out / "verify_report.txt").exists()


def test_verify_no_learning_adds_degeneracy_checks(tmp_path):
    out = tmp_path / "v"
    main(["verify", *BASE, "--N", "2", "--eps", "0", *FAST, "--paths", "2000", "--dt", "2e-3",
          "--out", str(out)])
    checks = {c["name"]: c for c in json.loads((out / "verify_report.json").read_text())["checks"]}
    assert checks["no-learning boundaries equal b_1"]["passed"]
    assert checks["no-learning V_n = n V_1"]["passed"]


def test_csv_formatting():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(3) == "3" and fmt(None) == "" and fmt(True) == "true"
    assert csv_text(["a", "b"], [[1, 0.5]]) == "a,b\n1,0.5\n"
    with pytest.raises(ValueError):
        csv_text(["a"], [[1, 2]])
