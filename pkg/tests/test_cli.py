import json
import subprocess
import sys

import pytest

from burgers_lab import cli
from burgers_lab.inviscid import DivergenceError


def test_unknown_flag(tmp_path):
    assert cli.main(["viscous-solve", "--bogus", "1", "--out", str(tmp_path)]) == 2


def test_unknown_command(tmp_path):
    assert cli.main(["frobnicate", "--out", str(tmp_path)]) == 2


def test_out_of_range_value(tmp_path):
    assert cli.main(["viscous-solve", "--grid", "3", "--out", str(tmp_path)]) == 2
    assert cli.main(["viscous-solve", "--eps", "abc", "--out", str(tmp_path)]) == 2


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("grid = 64\nwibble = 3\n")
    assert cli.main(["viscous-solve", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_missing_file(tmp_path):
    assert cli.main(["viscous-solve", "--config", str(tmp_path / "nope"),
                     "--out", str(tmp_path)]) == 2


def test_config_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ngrid = 64   # trailing\n\nt-end = 0.5\neps = 0.5\n")
    values = cli.read_config_file(cfg)
    assert values == {"grid": "64", "t_end": "0.5", "eps": "0.5"}
    resolved = cli.resolve_config("viscous-solve", values, {"grid": "32"})
    assert resolved["grid"] == 32 and resolved["t_end"] == 0.5 and resolved["eps"] == [0.5]
    cfg.write_text("just words\n")
    with pytest.raises(cli.UsageError):
        cli.read_config_file(cfg)


def test_viscous_solve_report(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("grid = 64\nt_end = 0.5\n")
    out = tmp_path / "out"
    args = ["viscous-solve", "--config", str(cfg), "--save-every", "5", "--out", str(out)]
    assert cli.main(args) == 0
    first = (out / "viscous-solve.json").read_bytes()
    doc = json.loads(first)
    assert doc["status"] == "pass" and doc["config"]["grid"] == 64
    assert "viscous-solve-slices.csv" in doc["files"]
    assert (out / "viscous-solve-slices.csv").exists()
    header = json.loads((out / "viscous-solve.header.json").read_text())
    assert "timestamp" in header and "timestamp" not in doc
    assert cli.main(args) == 0
    assert (out / "viscous-solve.json").read_bytes() == first


def test_inviscid_solve_writes_shocks(tmp_path):
    assert cli.main(["inviscid-solve", "--potential", "zero", "--grid", "128", "--t-end", "2.0",
                     "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "inviscid-solve.json").read_text())
    assert "inviscid-solve-shocks.csv" in doc["files"]
    lines = (tmp_path / "inviscid-solve-shocks.csv").read_text().splitlines()
    assert len(lines) > 1


def test_contract_violation_exit(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "bounds", lambda c: {"passed": False})
    assert cli.main(["bounds", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "bounds.json").read_text())["status"] == "fail"


def test_numeric_failure_exit(tmp_path, monkeypatch):
    def boom(cfg):
        raise DivergenceError("blew up")

    monkeypatch.setitem(cli.RUNNERS, "bounds", boom)
    assert cli.main(["bounds", "--out", str(tmp_path)]) == 3


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "burgers_lab", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "counterexample" in r.stdout
