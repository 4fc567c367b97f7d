"""CLI contract: exit codes, report schema (golden files), determinism, config handling."""

import csv
import json
import os
from pathlib import Path

import pytest

from deskqc.cli import ConfigError, ExperimentConfig, ExperimentReport, emit_plot_data, run_cli

GOLDEN = Path(__file__).parent / "golden"

BELL_QASM = """OPENQASM 2.0;
include "qelib1.inc";
qreg q[2];
creg c[2];
h q[0];
cx q[0],q[1];
measure q -> c;
"""

# small but complete invocations, one per subcommand
FAST_ARGS = {
    "chsh": ["--shots", "200", "--points", "4", "--resamples", "100"],
    "ghz": ["--shots", "100", "--fidelity-shots", "200"],
    "mermin": ["--shots", "200", "--resamples", "100"],
    "maxcut": ["--nodes", "4", "--shots", "100"],
    "qscore": ["--sizes", "3,4", "--instances", "3", "--shots", "64"],
    "neutrino": ["--points", "4", "--shots", "200", "--resamples", "100"],
    "jones": ["--knot", "hopf", "--thetas", "3", "--shots", "200", "--resamples", "100"],
    "vqe": ["--shots", "0", "--max-iters", "5"],
    "qutrit-fit": ["--delays", "20"],
}


def shape(x):
    """Structure of a JSON value: dict keys recursively, list element shape, scalar type name."""
    if isinstance(x, dict):
        return {k: shape(v) for k, v in sorted(x.items())}
    if isinstance(x, list):
        return [shape(x[0])] if x else []
    if isinstance(x, bool):
        return "bool"
    if isinstance(x, (int, float)):
        return "number"
    if x is None:
        return "null"
    return type(x).__name__


def _run(tmp_path, name, extra=(), seed=7):
    out = tmp_path / f"{name}.json"
    argv = [name, *extra, "--seed", str(seed), "--out", str(out)]
    code = run_cli(argv)
    assert code == 0, argv
    return json.loads(out.read_text())


@pytest.fixture
def qasm_file(tmp_path):
    p = tmp_path / "bell.qasm"
    p.write_text(BELL_QASM)
    return p


@pytest.mark.parametrize("name", sorted(FAST_ARGS) + ["transpile"])
def test_report_schema_matches_golden(tmp_path, name, qasm_file):
    extra = [str(qasm_file)] if name == "transpile" else FAST_ARGS[name]
    rep = _run(tmp_path, name, extra)
    got = {"top": shape({k: v for k, v in rep.items() if k not in ("config", "results", "series")}),
           "results": shape(rep["results"]), "series": shape(rep["series"])}
    path = GOLDEN / f"{name}.json"
    if os.environ.get("DESKQC_UPDATE_GOLDEN"):
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(json.dumps(got, indent=1, sort_keys=True) + "\n")
    expected = json.loads(path.read_text())
    assert got == expected


@pytest.mark.parametrize("name", ["chsh", "mermin", "neutrino", "qutrit-fit", "maxcut"])
def test_deterministic_modulo_timestamps(tmp_path, name):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _run(tmp_path / "a", name, FAST_ARGS[name])
    b = _run(tmp_path / "b", name, FAST_ARGS[name])
    for r in (a, b):
        r.pop("created")
        r.pop("wall_clock_s")
    assert a == b


def test_different_seeds_differ(tmp_path):
    a = _run(tmp_path, "chsh", FAST_ARGS["chsh"], seed=1)
    b = _run(tmp_path, "chsh", FAST_ARGS["chsh"], seed=2)
    assert a["results"] != b["results"]


def test_chsh_full_point_count(tmp_path):
    rep = _run(tmp_path, "chsh", ["--shots", "100", "--points", "32", "--resamples", "100"])
    assert len(rep["results"]["points"]) == 32
    assert len(rep["series"]) == 32


def test_every_series_value_has_stderr_or_null(tmp_path):
    rep = _run(tmp_path, "chsh", FAST_ARGS["chsh"])
    for row in rep["series"]:
        assert "stderr" in row and (row["stderr"] is None or row["stderr"] >= 0)


def test_csv_columns(tmp_path):
    path = tmp_path / "c.csv"
    code = run_cli(["chsh", *FAST_ARGS["chsh"], "--seed", "1", "--out", str(tmp_path / "c.json"), "--csv", str(path)])
    assert code == 0
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta", "estimate", "stderr", "theory"]
    assert len(rows) == 1 + 4


def test_emit_plot_data_without_series_raises(tmp_path):
    rep = ExperimentReport("transpile", {}, {}, [])
    with pytest.raises(ValueError):
        emit_plot_data(rep, tmp_path / "x.csv")


def test_emit_plot_data_unwritable(tmp_path):
    rep = ExperimentReport("chsh", {}, {}, [{"theta": 0.0, "estimate": 1.0, "stderr": 0.1, "theory": 2.0}])
    with pytest.raises(OSError):
        emit_plot_data(rep, tmp_path / "missing_dir" / "x.csv")


def test_report_round_trip(tmp_path):
    rep = _run(tmp_path, "neutrino", FAST_ARGS["neutrino"])
    again = ExperimentReport.from_dict(json.loads(ExperimentReport.from_dict(rep).to_json()))
    assert again.to_dict() == rep


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("DESKQC_OUT", str(tmp_path / "reports"))
    assert run_cli(["qutrit-fit", "--delays", "10", "--seed", "3"]) == 0
    data = json.loads((tmp_path / "reports" / "qutrit-fit.json").read_text())
    assert data["experiment"] == "qutrit-fit"


def test_stdout_when_no_out(capsys, monkeypatch):
    monkeypatch.delenv("DESKQC_OUT", raising=False)
    assert run_cli(["qutrit-fit", "--delays", "10"]) == 0
    assert json.loads(capsys.readouterr().out)["experiment"] == "qutrit-fit"


# --- exit codes -------------------------------------------------------------

def test_unknown_flag_exits_2_with_usage(capsys):
    assert run_cli(["chsh", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    assert run_cli(["teleport"]) == 2


def test_no_subcommand_exits_2():
    assert run_cli([]) == 2


def test_help_exits_0(capsys):
    assert run_cli(["--help"]) == 0
    assert "qutrit-fit" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["chsh", "--mitigation", "magic"],
    ["chsh", "--shots", "-5"],
    ["chsh", "--backend", "/nonexistent/profile.yaml"],
    ["maxcut"],
    ["maxcut", "--nodes", "9"],
    ["jones", "--knot", "word=1,x"],
    ["qscore", "--sizes", "a..b"],
    ["transpile", "/nonexistent.qasm"],
    ["qutrit-fit", "--data", "/nonexistent.csv"],
])
def test_config_errors_exit_2(argv, capsys):
    assert run_cli(argv) == 2
    assert "deskqc" in capsys.readouterr().err


def test_execution_error_exits_1(tmp_path, capsys):
    # an unwritable output path fails after the experiment ran
    assert run_cli(["qutrit-fit", "--delays", "10", "--out", str(tmp_path / "no" / "dir" / "r.json")]) == 1
    assert capsys.readouterr().err


def test_runtime_failure_exits_1(capsys):
    # zero shots on a sampled experiment cannot produce estimates
    assert run_cli(["chsh", "--shots", "0", "--points", "2", "--resamples", "100"]) == 1
    assert "failed" in capsys.readouterr().err


# --- config files -----------------------------------------------------------

def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("experiment: chsh\nshots: 150\nseed: 4\nparams:\n  points: 3\n  resamples: 100\n")
    out = tmp_path / "r.json"
    assert run_cli(["chsh", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["shots"] == 150 and rep["seed"] == 4 and len(rep["series"]) == 3
    assert run_cli(["chsh", "--config", str(cfg), "--points", "5", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["series"]) == 5


def test_config_json_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "qutrit-fit", "seed": 2, "params": {"delays": 12}}))
    out = tmp_path / "r.json"
    assert run_cli(["qutrit-fit", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["series"]) == 12


@pytest.mark.parametrize("body", [
    "experiment: chsh\nfoo: 1\n",
    "shots: 10\n",
    "experiment: chsh\nmitigation: [teleport]\n",
    "experiment: chsh\nparams:\n  wibble: 2\n",
    "experiment: mermin\n",
    "experiment: chsh\nshots: -1\n",
    "experiment: chsh\nparams: [1, 2]\n",
    "experiment: [unclosed\n",
])
def test_bad_config_exits_2(tmp_path, body):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(body)
    assert run_cli(["chsh", "--config", str(cfg)]) == 2


def test_experiment_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "chsh", "extra": 1})
    c = ExperimentConfig.from_dict({"experiment": "jones", "mitigation": "rem,RC,zne"})
    assert c.mitigation == ["rem", "rc", "zne"]


def test_noise_profile_backend(tmp_path):
    prof = tmp_path / "p.yaml"
    prof.write_text("label: test\nreadout:\n  default: 0.05\n")
    out = tmp_path / "r.json"
    assert run_cli(["mermin", "--shots", "500", "--resamples", "100", "--backend", str(prof), "--seed", "1",
                    "--out", str(out)]) == 0
    assert json.loads(out.read_text())["results"]
