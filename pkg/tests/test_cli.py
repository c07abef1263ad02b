import json
import subprocess
import sys
from pathlib import Path

import pytest

from lagorbits import __version__
from lagorbits.cli import main

SCEN = Path(__file__).parent.parent / "scenarios"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def torus_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("torus")
    code = run("find-orbit", SCEN / "torus.toml", "--method", "class-min", "--class", 1, 0, "--out", out)
    return code, out


def test_find_orbit_class_min(torus_run):
    code, out = torus_run
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["version"] == __version__ and res["seed"] == 0
    assert res["command"] == "find-orbit"
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["certificate"]["status"] == "PASS"
    assert abs(cert["certificate"]["action"] - 1.0) < 1e-6
    for name in ("ps.csv", "loop.csv"):
        assert (out / name).read_text().startswith(f"# schema={name[:-4]}/1 version={__version__}")


def test_verify_round_trip(torus_run, capsys):
    _, out = torus_run
    assert run("verify", out / "certificate.json") == 0
    assert "re-verified" in capsys.readouterr().out


def test_verify_detects_tampering(torus_run, tmp_path, capsys):
    _, out = torus_run
    data = json.loads((out / "certificate.json").read_text())
    data["certificate"]["action"] *= 1.001
    bad = tmp_path / "cert.json"
    bad.write_text(json.dumps(data))
    assert run("verify", bad) == 1
    assert "action: recorded" in capsys.readouterr().out


def test_verify_input_errors(tmp_path):
    assert run("verify", tmp_path / "missing.json") == 2
    (tmp_path / "x.json").write_text("{not json")
    assert run("verify", tmp_path / "x.json") == 2
    (tmp_path / "y.json").write_text("{}")
    assert run("verify", tmp_path / "y.json") == 2


def test_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("find-orbit", SCEN / "torus.toml", "--method", "class-min", "--out", out) == 0
    for name in ("result.json", "certificate.json", "ps.csv", "loop.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_bad_scenario_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[manifold]\nkind = "klein"\n')
    assert run("find-orbit", p, "--out", tmp_path) == 2
    assert "manifold.kind" in capsys.readouterr().err
    assert run("find-orbit", tmp_path / "none.toml") == 2


def test_class_min_needs_class(tmp_path):
    p = tmp_path / "t.toml"
    p.write_text('[manifold]\nkind = "torus"\n')
    assert run("find-orbit", p, "--method", "class-min", "--out", tmp_path) == 2


def test_drift_exit_code(tmp_path, capsys):
    code = run("find-orbit", SCEN / "cylinder_exp.toml", "--method", "class-min", "--out", tmp_path)
    assert code == 1
    assert "drift" in capsys.readouterr().out
    assert not (tmp_path / "certificate.json").exists()


def test_estimate_cu(tmp_path, capsys):
    assert run("estimate-cu", SCEN / "kinetic_plane.toml", "--out", tmp_path) == 0
    est = json.loads((tmp_path / "cu.json").read_text())["estimate"]
    lo, hi = est["bracket"]
    assert lo <= 0.0 <= hi + 1e-12 and hi - lo <= 1e-2


def test_barrier_command(tmp_path, capsys):
    assert run("barrier", SCEN / "magplane.toml", "--k", 0.5, "--out", tmp_path) == 0
    b = json.loads((tmp_path / "barrier.json").read_text())["barrier"]
    assert b["a"] > 0
    assert capsys.readouterr().out.startswith("a=")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "lagorbits", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
