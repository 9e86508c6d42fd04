import json

import pytest

from pneuforce import cli
from pneuforce.calibration import parse_dataset
from conftest import DATA

PROTOTYPE = str(DATA / "prototype_calibration.csv")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_dimension_diameter(capsys):
    code, out, _ = run(capsys, "dimension", "--force", "40", "--pressure", "5e5")
    assert code == 0 and "diameter = 10.09 mm" in out


def test_dimension_force(capsys):
    code, out, _ = run(capsys, "dimension", "--diameter", "0.010", "--pressure", "5e5")
    assert code == 0 and "force = 39.27 N" in out


def test_dimension_pressure(capsys):
    code, out, _ = run(capsys, "dimension", "--diameter", "0.010", "--force", "39.27")
    assert code == 0 and out.startswith("pressure = ")


@pytest.mark.parametrize("argv", [["dimension", "--force", "40"],
                                  ["dimension", "--force", "40", "--pressure", "5e5", "--diameter", "0.01"]])
def test_dimension_needs_exactly_two(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and "usage" in err


def test_simulate_bad_dt(capsys):
    code, _, err = run(capsys, "simulate", "--dt", "-1")
    assert code == 1 and "dt must be > 0" in err


def test_simulate_step(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code, text, _ = run(capsys, "simulate", "--force", "step:39.24@1.0", "--t-end", "5", "--out", str(out),
                        "--set", "decimation=100")
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "t,x,v,p,F_in,V_out" and len(rows) == 5002
    p_end = float(rows[-1].split(",")[3])
    assert abs(p_end - 6.0091e5) <= 1.2732e5
    assert "drift" in text and "settle time" in text


def test_simulate_constant_zero_rows_identical(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert run(capsys, "simulate", "--force", "constant:0", "--t-end", "0.1", "--out", str(out))[0] == 0
    states = {tuple(line.split(",")[1:4]) for line in out.read_text().splitlines()[1:]}
    assert len(states) == 1


def test_simulate_numeric_failure(capsys):
    code, _, err = run(capsys, "simulate", "--dt", "2e-3", "--t-end", "2", "--set", "input_filter_tau=0")
    assert code == 2 and "non-finite" in err


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sensor\nt_end = 0.01\ndt=1e-4\n")
    out = tmp_path / "traj.csv"
    assert run(capsys, "--config", str(cfg), "simulate", "--out", str(out))[0] == 0
    assert len(out.read_text().splitlines()) == 102
    assert run(capsys, "--config", str(cfg), "simulate", "--dt", "1e-5", "--out", str(out))[0] == 0
    assert len(out.read_text().splitlines()) == 1002


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("t_end=1\nwidget=3\n")
    code, _, err = run(capsys, "--config", str(cfg), "simulate")
    assert code == 1 and "widget" in err


def test_invalid_value_rejected_before_running(capsys):
    code, _, err = run(capsys, "synth", "--set", "mass=-1", "--out", "never.csv")
    assert code == 1 and "mass" in err


def test_synth_schedule_rule(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--set", "n_steps=7", "--out", str(tmp_path / "x.csv"))
    assert code == 1 and "at least 8" in err


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(capsys, "--quiet", "synth", "--seed", "3", "--noise", "1e-4", "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    parse_dataset(a.read_text())


def test_synth_noise_free_analyzes_to_zero_spread(tmp_path, capsys):
    ds = tmp_path / "ds.csv"
    assert run(capsys, "synth", "--noise", "0", "--out", str(ds))[0] == 0
    report = tmp_path / "r.json"
    assert run(capsys, "analyze", str(ds), "--out", str(report))[0] == 0
    doc = json.loads(report.read_text())
    assert all(lv["b"] == 0 and lv["b_prime"] == 0 for lv in doc["error_report"]["levels"])


def test_analyze_prototype(tmp_path, capsys):
    report, flat = tmp_path / "r.json", tmp_path / "r.csv"
    before = open(PROTOTYPE, "rb").read()
    code, out, _ = run(capsys, "analyze", PROTOTYPE, "--mode", "raw", "--case", "B", "--out", str(report),
                       "--csv", str(flat))
    assert code == 0
    doc = json.loads(report.read_text())
    top = doc["error_report"]["levels"][-1]
    assert top["b"] == pytest.approx(7.4292789, abs=1e-6)
    assert top["b_prime"] == pytest.approx(4.4505662, abs=1e-6)
    assert top["v"] == pytest.approx(0.1245284, abs=1e-6)
    assert doc["error_report"]["f0"]["X1"] == pytest.approx(-0.2403236, abs=1e-6)
    assert doc["classification"]["assigned_class"] == "none"
    assert "class: none" in out
    assert flat.read_text().startswith("force_kgf,x_bar_r,b,b_prime,v,f_c,w1")
    assert open(PROTOTYPE, "rb").read() == before


def test_analyze_outputs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "analyze", PROTOTYPE, "--out", str(a))
    run(capsys, "analyze", PROTOTYPE, "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_analyze_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, _, err = run(capsys, "analyze", str(empty))
    assert code == 1 and "missing header" in err


def test_analyze_parse_error_location(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(open(PROTOTYPE).read().replace("2.38038", "2.38.038"))
    code, _, err = run(capsys, "analyze", str(bad))
    assert code == 1 and "line 6, column 2" in err


def test_analyze_incomplete_inputs(capsys):
    code, _, err = run(capsys, "analyze", PROTOTYPE, "--case", "A")
    assert code == 3 and "delta_T" in err


def test_analyze_case_a_with_delta_t(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", PROTOTYPE, "--case", "A", "--degree", "2", "--set", "delta_T=0.5",
                       "--out", str(tmp_path / "r.json"))
    assert code == 0 and "U %" in out


def test_analyze_missing_file(capsys):
    assert run(capsys, "analyze", "/nonexistent/file.csv")[0] == 1


def test_quiet_suppresses_summary(capsys):
    code, out, _ = run(capsys, "--quiet", "analyze", PROTOTYPE)
    assert code == 0 and out == ""


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "pneuforce", "dimension", "--force", "40", "--pressure", "5e5"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "diameter = 10.09 mm" in res.stdout
