"""Command line behavior: formats, determinism, exit codes."""

import json
import math
from importlib import resources

import numpy as np
import pytest

from qobserver import StateSpace, build_quantum_observer
from qobserver.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_simulate_default_oneway_header_and_first_row(capsys):
    code, out, err = _run(capsys, "simulate", "--horizon", "0.01")
    assert code == 0 and err == ""
    lines = out.splitlines()
    assert lines[0] == "t,re(x1),im(x1),re(x2),im(x2),re(err),im(err)"
    assert lines[1] == "0.0,1.0,0.0,0.0,0.0,1.0,0.0"
    assert len(lines) == 12  # header + 11 samples


def test_simulate_writes_file_and_is_deterministic(tmp_path, capsys):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    for path in (out1, out2):
        code = main(["simulate", "--scenario", "observer", "--horizon", "0.1",
                     "--out", str(path)])
        assert code == 0
    capsys.readouterr()
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_verified_has_vout_column(capsys):
    code, out, _ = _run(capsys, "simulate", "--scenario", "observer-verified",
                        "--horizon", "0.002")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].endswith("re(vout),im(vout)")
    first = lines[1].split(",")
    # vout mean starts at C/sqrt(2) * err = 0.5 for the default parameters
    assert first[-2] == "0.5" and first[-1] == "0.0"


def test_simulate_covariance_columns(capsys):
    code, out, _ = _run(capsys, "simulate", "--scenario", "twoway",
                        "--horizon", "0.002", "--covariance")
    assert code == 0
    header = out.splitlines()[0]
    assert "re(cov1_1)" in header and "im(cov4_4)" in header
    row = out.splitlines()[1].split(",")
    idx = header.split(",").index("re(cov1_1)")
    assert row[idx] == "0.5"  # vacuum start


def test_simulate_with_drive_and_x0(capsys):
    code, out, _ = _run(capsys, "simulate", "--scenario", "classical",
                        "--horizon", "0.002", "--drive", "sin:amp=1,freq=2",
                        "--x0", "0,0")
    assert code == 0
    assert out.splitlines()[1] == "0.0,0.0,0.0,0.0,0.0,0.0,0.0"


def test_compile_json_round_trips(capsys):
    code, out, _ = _run(capsys, "compile", "--scenario", "observer")
    assert code == 0
    payload = json.loads(out)
    assert payload["inputs"] == ["bin", "noise", "pump"]
    assert payload["outputs"] == ["mix", "gainout", "pumpout"]
    model = StateSpace.from_json(payload["model"])
    ref = build_quantum_observer(1.0, 0.5, 2.0, verifiable=False).joint
    for attr in ("a_minus", "a_plus", "b_minus", "b_plus", "c_minus", "c_plus", "d"):
        assert np.array_equal(getattr(model, attr), getattr(ref, attr)), attr
    rate = payload["observer"]["error_a"]
    assert abs(rate[0][0][0] - (-0.25 - math.sqrt(0.5))) < 1e-10


def test_compile_is_deterministic(capsys):
    _, out1, _ = _run(capsys, "compile", "--scenario", "twoway")
    _, out2, _ = _run(capsys, "compile", "--scenario", "twoway")
    assert out1 == out2


def test_compile_positional_path_matches_scenario_form(capsys):
    path = str(resources.files("qobserver") / "scenarios" / "oneway.qnet")
    code, direct, _ = _run(capsys, "compile", path)
    assert code == 0
    code, flagged, _ = _run(capsys, "compile", "--scenario", f"file:{path}")
    assert code == 0
    assert direct == flagged


def test_analyze_reports_marginal_stability(capsys):
    code, out, _ = _run(capsys, "analyze", "--scenario", "twoway")
    assert code == 0
    payload = json.loads(out)
    assert payload["analysis"]["is_hurwitz"] is False
    assert abs(payload["analysis"]["stability_margin"]) < 1e-9
    assert len(payload["analysis"]["decoherence_free"]["eigenvalues"]) == 2
    assert payload["error"]["autonomous"] is True
    assert abs(payload["error"]["rate"][0] - (-0.5)) < 1e-12


def test_analyze_observer_rate(capsys):
    code, out, _ = _run(capsys, "analyze", "--scenario", "observer",
                        "--gamma-l", "2.0")
    payload = json.loads(out)
    assert code == 0
    assert payload["analysis"]["is_hurwitz"] is True
    expect = -(0.25 + math.sqrt(0.5))
    assert abs(payload["error"]["rate"][0] - expect) < 1e-10


def test_sweep_rate_table(capsys):
    code, out, _ = _run(capsys, "sweep", "--scenario", "observer",
                        "--sweep", "gamma_l=0:2:5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "gamma_l,error_decay_rate,stability_margin"
    rates = [float(line.split(",")[1]) for line in lines[1:]]
    expect = [0.25 + math.sqrt(0.5 * g / 2.0) for g in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert np.max(np.abs(np.array(rates) - np.array(expect))) < 1e-9


def test_sweep_classical_gain(capsys):
    code, out, _ = _run(capsys, "sweep", "--scenario", "classical",
                        "--sweep", "gain=0:4:5")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    # error rate is 1 + gain for the shipped demo plant (a=-1, c=1)
    for row in rows:
        assert abs(float(row[1]) - (1.0 + float(row[0]))) < 1e-12


def test_file_scenario_simulation(capsys):
    path = str(resources.files("qobserver") / "scenarios" / "twoway.qnet")
    code, out, _ = _run(capsys, "simulate", "--scenario", f"file:{path}",
                        "--horizon", "0.002", "--drive", "const:amp=1")
    assert code == 0
    assert out.splitlines()[0] == "t,re(x1),im(x1),re(x2),im(x2)"


def test_plot_renders_files(tmp_path, capsys):
    fig = tmp_path / "traj.png"
    code = main(["simulate", "--scenario", "observer-verified",
                 "--horizon", "0.5", "--step", "1e-2",
                 "--plot", str(fig), "--out", str(tmp_path / "t.csv")])
    capsys.readouterr()
    assert code == 0
    assert fig.stat().st_size > 1000
    swfig = tmp_path / "sweep.png"
    code = main(["sweep", "--scenario", "observer", "--sweep", "gamma_l=0:2:3",
                 "--plot", str(swfig), "--out", str(tmp_path / "s.csv")])
    capsys.readouterr()
    assert code == 0
    assert swfig.stat().st_size > 1000


# ------------------------------------------------------------- exit codes

def test_exit_code_unknown_scenario(capsys):
    code, _, err = _run(capsys, "compile", "--scenario", "nope")
    assert code == 2 and "unknown scenario" in err


def test_exit_code_missing_file(capsys):
    code, _, err = _run(capsys, "compile", "--scenario", "file:/does/not/exist")
    assert code == 1 and "cannot read" in err


def test_exit_code_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.qnet"
    bad.write_text("mode a(omega=")
    code, _, err = _run(capsys, "compile", "--scenario", f"file:{bad}")
    assert code == 1 and "syntax" in err


def test_exit_code_bad_sweep(capsys):
    assert _run(capsys, "sweep", "--scenario", "observer",
                "--sweep", "gamma_l=0:2:0")[0] == 2
    assert _run(capsys, "sweep", "--scenario", "observer",
                "--sweep", "gamma_l=0:2")[0] == 2
    assert _run(capsys, "sweep", "--scenario", "twoway",
                "--sweep", "gamma_l=0:2:3")[0] == 2
    assert _run(capsys, "sweep", "--scenario", "observer",
                "--sweep", "gamma_l=a:b:3")[0] == 2


def test_exit_code_bad_drive(capsys):
    assert _run(capsys, "simulate", "--horizon", "0.01",
                "--drive", "triangle:amp=1")[0] == 2
    assert _run(capsys, "simulate", "--horizon", "0.01",
                "--drive", "sin:amp=1,bogus=2")[0] == 2
    assert _run(capsys, "simulate", "--horizon", "0.01",
                "--drive", "sin:port=nosuch")[0] == 2


def test_exit_code_bad_x0(capsys):
    assert _run(capsys, "simulate", "--horizon", "0.01",
                "--x0", "1,2,3")[0] == 2
    assert _run(capsys, "simulate", "--horizon", "0.01",
                "--x0", "zebra")[0] == 2


def test_exit_code_bad_params(capsys):
    code, _, err = _run(capsys, "simulate", "--scenario", "observer",
                        "--gamma", "-1", "--horizon", "0.01")
    assert code == 2
