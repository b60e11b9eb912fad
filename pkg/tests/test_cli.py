import json

import numpy as np
import pytest

from slowfast_srde.cli import main
from slowfast_srde.io import read_container, read_table


def test_hypcheck_emits_report(capsys):
    assert main(["hypcheck", "preset:tanh"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and rep["integral_value"] == pytest.approx(rep["integral_closed_form"])


def test_usage_errors(capsys, tmp_path):
    assert main(["simulate", str(tmp_path / "missing.toml")]) == 1
    assert main(["frobnicate", "preset:tanh"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["hypcheck", "preset:tanh", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["rate", "preset:ou1"]) == 1  # needs --path


def test_failed_hypothesis_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("""
[eigensystem]
slow_modes = 2
fast_modes = 2
[coefficients.b1]
kind = "constant"
[coefficients.b2]
kind = "linear"
y_coef = 2.0
[coefficients.sigma1]
kind = "constant"
value = 1.0
[coefficients.sigma2]
kind = "constant"
value = 1.0
""")
    assert main(["hypcheck", str(cfg)]) == 2


def test_simulate_writes_container(tmp_path, capsys):
    out = tmp_path / "tr.sfc"
    assert main(["simulate", "preset:ou1", "--replicas", "2", "--entry", "0", "--out", str(out)]) == 0
    arrays, meta = read_container(out)
    assert arrays["X"].shape[0] == 2 and meta["entry"] == 0 and meta["epsilon"] == 0.5


def test_laplace_table_has_gap_column(tmp_path, capsys):
    out = tmp_path / "lap.csv"
    code = main(["laplace", "preset:ou1", "--replicas", "64", "--out", str(out),
                 "--gnuplot-stub", str(tmp_path / "lap.gp")])
    assert code in (0, 2)
    kind, cols, rows = read_table(out)
    assert kind == "laplace" and "gap" in cols and len(rows) == 4
    assert "plot" in (tmp_path / "lap.gp").read_text()


def test_rate_verb_round_trip(tmp_path, capsys):
    t = np.linspace(0, 1, 1001)
    path = tmp_path / "p.csv"
    path.write_text("t,psi0\n" + "".join(f"{a!r},{a!r}\n" for a in t.tolist()))
    out, fb = tmp_path / "r.json", tmp_path / "fb.csv"
    assert main(["rate", "preset:ou1", "--path", str(path), "--out", str(out),
                 "--feedback", str(fb)]) == 0
    res = json.loads(out.read_text())
    assert res["value"] == pytest.approx(7 / 6, abs=1e-4)
    assert read_table(fb)[0] == "feedback"
