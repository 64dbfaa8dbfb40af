import json
import subprocess
import sys

import numpy as np
import pytest

from nhgeo.cli import ParseError, RunConfig, ValidationError, main, parse_config, trajectory_csv
from nhgeo.dynamics import Trajectory


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def test_minimal_config_defaults():
    cfg = parse_config('{"system": "nonholonomic-particle"}')
    assert cfg.dt == 1e-3
    assert cfg.seed == 0
    assert cfg.T == 10.0
    assert cfg.q0 is None


def test_config_roundtrip():
    text = json.dumps({"system": "vertical-disk", "params": {"R": 2}, "dt": 0.01, "T": 1,
                       "q0": [0, 0, 0, 0], "v0": [1, 0, 2, 0], "tolerances": {"distance": 1e-3}})
    once = parse_config(text)
    twice = parse_config(once.to_json())
    assert once == twice
    assert twice.to_json() == once.to_json()


@pytest.mark.parametrize("text, fragment", [
    ('{"system": "vertical-disk", "dt": -1}', "dt must be a positive real"),
    ('{"system": "vertical-disk", "T": 0}', "T must be a positive real"),
    ('{"system": "vertical-disk", "colour": 1}', "unknown key 'colour'"),
    ('{"system": "spinning-top"}', "system must be one of"),
    ('{}', "missing 'system'"),
    ('{"system": "vertical-disk", "q0": [0, 0]}', "q0 and v0 must be given together"),
    ('{"system": "vertical-disk", "q0": [0, 0, 0], "v0": [0, 0, 0]}', "q0 must have length 4"),
    ('{"system": "veselova", "params": {"I1": -2}}', "parameter 'I1' must be a positive real"),
    ('{"system": "veselova", "seed": 1.5}', "seed must be a non-negative integer"),
    ('{"system": "veselova", "tolerances": {"speed": 1}}', "unknown tolerance 'speed'"),
])
def test_config_violations(text, fragment):
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert any(fragment in v for v in info.value.violations)


def test_config_lists_all_violations():
    with pytest.raises(ValidationError) as info:
        parse_config('{"system": "vertical-disk", "dt": -1, "T": -1, "extra": 0}')
    assert len(info.value.violations) == 3


@pytest.mark.parametrize("text, line", [('{"system": \n "x",,}', 2), ("[1, 2]", 1), ("", 1)])
def test_config_parse_error_line(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


def test_runconfig_descriptor():
    cfg = RunConfig(system="vertical-disk", params={"R": 2.0})
    assert cfg.descriptor().params == {"R": 2.0}


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def test_csv_format():
    tr = Trajectory(np.array([0.0, 0.1]), np.array([[1.0, 2.0], [1.0 / 3.0, 2.0]]), np.zeros((2, 2)))
    text = trajectory_csv(tr)
    lines = text.split("\n")
    assert lines[0] == "t,q1,q2,v1,v2"
    assert lines[2].split(",")[1] == "0.33333333333333331"
    assert text.endswith("\n") and "\r" not in text
    assert float(lines[2].split(",")[0]) == 0.1


def test_simulate_disk_theta_affine(tmp_path, capsys):
    out = tmp_path / "disk.csv"
    code, _, _ = run(["simulate", "--system", "vertical-disk", "--out", str(out)], capsys)
    assert code == 0
    raw = out.read_bytes()
    assert raw.decode("ascii").count("\n") == 10002
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    # chart (theta, phi, x, y); benchmark base velocity (1, 1)
    np.testing.assert_allclose(data[:, 1], data[:, 0], atol=1e-12)


def test_simulate_reproducible(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "nonholonomic-particle", "T": 0.5, "dt": 0.01}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--config", str(cfg), "--out", str(a)], capsys)[0] == 0
    assert run(["simulate", "--config", str(cfg), "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def test_build_metric_particle(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "nonholonomic-particle", "points": [[0.0, 1.0, 0.0]]}))
    code, out, _ = run(["build-metric", "--config", str(cfg)], capsys)
    assert code == 0
    H = json.loads(out)["points"][0]["H"]
    np.testing.assert_allclose(H, [[2, 0, -1], [0, 0.5, 0], [-1, 0, 1]], atol=1e-14)


def test_recover_phi_command(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "nonholonomic-particle", "grid_size": 2}))
    code, out, _ = run(["recover-phi", "--config", str(cfg)], capsys)
    assert code == 0
    rows = json.loads(out)["points"]
    assert len(rows) == 4
    for r in rows:
        assert abs(r["phi"] - r["phi_analytic"]) <= 1e-6
        np.testing.assert_allclose(r["dphi"], r["dphi_analytic"], atol=1e-7)


def test_distance_command(capsys):
    code, out, _ = run(["distance", "--system", "vertical-disk"], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["residual"] <= 1e-4
    assert abs(data["L"] - data["d"]) == pytest.approx(data["residual"])


def test_verify_particle_seed7(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, _, _ = run(["verify", "--system", "nonholonomic-particle", "--seed", "7", "--out", str(a)], capsys)
    assert code == 0
    report = json.loads(a.read_text())
    assert report["passed"] and report["seed"] == 7
    assert all(c["pass"] for c in report["checks"])
    run(["verify", "--system", "nonholonomic-particle", "--seed", "7", "--out", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_verify_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "vertical-disk", "tolerances": {"energy_conservation": 0.0,
                                                                         "constraint_conservation": 0.0}}))
    code, out, _ = run(["verify", "--config", str(cfg)], capsys)
    assert code == 1
    assert json.loads(out)["passed"] is False


# --------------------------------------------------------------------------
# errors and exit codes
# --------------------------------------------------------------------------

def test_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"system": "vertical-disk", "dt": -1}')
    code, out, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2 and out == ""
    payload = json.loads(err)
    assert payload["error"] == "ValidationError"
    assert payload["violations"] == ["dt must be a positive real"]


def test_parse_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"system":\n\n oops}')
    code, _, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2
    assert json.loads(err)["line"] == 3


def test_bad_param_flag(capsys):
    code, _, err = run(["simulate", "--system", "vertical-disk", "--param", "R"], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "ParseError"


def test_param_flag_override(tmp_path, capsys):
    out = tmp_path / "m.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"system": "vertical-disk", "points": [[0.0, 0.0, 0.0, 0.0]]}))
    run(["build-metric", "--config", str(cfg), "--param", "R=2", "--out", str(out)], capsys)
    H = np.array(json.loads(out.read_text())["points"][0]["H"])
    assert H[0, 2] == pytest.approx(-2.0)


def test_numerical_failure_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    # initial velocity far outside the distribution
    cfg.write_text(json.dumps({"system": "nonholonomic-particle", "q0": [0, 0, 0], "v0": [1, 1, 1], "T": 1}))
    code, out, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 3 and out == ""
    assert json.loads(err)["error"] == "ConstraintViolated"


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "nhgeo", "build-metric", "--system", "nonholonomic-particle",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["system"] == "nonholonomic-particle"
