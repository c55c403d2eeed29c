import json

import pandas as pd
import pytest

from workflow.pipeline.tdd_schedule import Violation
from workflow.populate import process, runner
from workflow.populate.process import (
    EXIT_CONFIG,
    EXIT_ESSA_INFEASIBLE,
    EXIT_INTERFERENCE,
    EXIT_OK,
    main,
    parse_args,
)

SMALL_TOML = """
n_ue = 20
n_s = 4
runs = 2

[grid]
horizon_slots = 512
"""


def _write_config(tmp_path, text=SMALL_TOML, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _stderr_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_parse_args_defaults():
    args = parse_args([])
    assert args.out == "results"
    assert args.jobs == 1
    assert not args.emit_traces
    assert parse_args(["--policy", "ESSA"]).policy == "essa"


def test_point_run(tmp_path):
    out = tmp_path / "out"
    code = main(["--config", _write_config(tmp_path), "--out", str(out)])
    assert code == EXIT_OK
    table = pd.read_csv(out / "point.csv")
    assert set(table["policy"]) == {"ta"}
    assert (table["n_runs"] == 2).all()
    assert (out / "point.json").exists()


def test_sweep_with_traces_and_figures(tmp_path):
    out = tmp_path / "out"
    argv = [
        "--config", _write_config(tmp_path),
        "--out", str(out),
        "--policy", "essa",
        "--scheduler", "ms",
        "--sweep", "pattern",
        "--values", "dsu", "4dsu",
        "--emit-traces",
        "--figures",
    ]  # fmt: skip
    assert main(argv) == EXIT_OK

    table = pd.read_csv(out / "sweep_pattern.csv")
    assert set(table["sweep_value"]) == {"dsu", "4dsu"}
    assert set(table["scheduler"]) == {"ms"}
    assert sorted(p.name for p in (out / "traces" / "pattern_4dsu").iterdir()) == [
        "run_0000.txt",
        "run_0001.txt",
    ]
    figures = {p.name for p in (out / "figures").iterdir()}
    assert "sweep_pattern_channel_usage_pct.png" in figures
    assert "sweep_pattern_snr_ecdf.png" in figures
    assert "sweep_pattern_slots_pattern_dsu.png" in figures


def test_cli_overrides_reach_the_table(tmp_path):
    out = tmp_path / "out"
    argv = ["--config", _write_config(tmp_path), "--out", str(out), "--runs", "3"]
    assert main(argv) == EXIT_OK
    assert (pd.read_csv(out / "point.csv")["n_runs"] == 3).all()


def test_invalid_config_exit_code(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_TOML + "\n[link]\nbogus = 1\n")
    assert main(["--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG
    error = _stderr_json(capsys)
    assert error["error"] == "ConfigValidationError"
    assert "link.bogus" in error["fields"]


def test_missing_config_exit_code(tmp_path, capsys):
    missing = str(tmp_path / "nope.toml")
    assert main(["--config", missing, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert _stderr_json(capsys)["error"] == "FileNotFoundError"


def test_sweep_requires_values(tmp_path, capsys):
    argv = ["--sweep", "altitude", "--out", str(tmp_path)]
    assert main(argv) == EXIT_CONFIG
    assert _stderr_json(capsys)["fields"] == ["values"]


@pytest.mark.parametrize(
    "argv, field",
    [
        (["--policy", "tdma"], "policy"),
        (["--seed", "abc"], "seed"),
        (["--sweep", "elevation", "--values", "40"], "sweep"),
        (["--emit-traces", "yes"], None),
    ],
)
def test_bad_flags_report_json(tmp_path, capsys, argv, field):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "usage:" not in err
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "ConfigValidationError"
    assert error["fields"] == ([field] if field else [])


def test_short_horizon_exit_code(tmp_path, capsys):
    # one TA period fits, so nothing is left after the first uplink
    path = _write_config(tmp_path, SMALL_TOML.replace("512", "60"))
    assert main(["--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG
    error = _stderr_json(capsys)
    assert error["error"] == "TimelineError"
    assert error["fields"] == ["grid.horizon_slots"]


def test_essa_infeasible_exit_code(tmp_path, capsys):
    path = _write_config(tmp_path, SMALL_TOML + "ul_slots = 40\n")
    argv = ["--config", path, "--policy", "essa", "--out", str(tmp_path)]
    assert main(argv) == EXIT_ESSA_INFEASIBLE
    error = _stderr_json(capsys)
    assert error["error"] == "EssaInfeasibleError"
    assert "TA" in error["message"]


def test_interference_exit_code(tmp_path, capsys, monkeypatch):
    def fake_verifier(timeline, ues, assignment):
        return [Violation("satellite", None, 1, 0, 0.125)]

    monkeypatch.setattr(runner, "verify_no_interference", fake_verifier)
    argv = ["--config", _write_config(tmp_path), "--out", str(tmp_path)]
    assert main(argv) == EXIT_INTERFERENCE
    assert _stderr_json(capsys)["violations"] == 1


def test_calibrate_prints_gain(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(process, "calibrate_gain", lambda config: 60.25)
    argv = ["--calibrate", "--config", _write_config(tmp_path)]
    assert main(argv) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"calibration_gain_db": 60.25}
