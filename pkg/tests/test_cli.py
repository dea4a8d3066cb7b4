"""Command-line interface: flags, exit codes, outputs."""

import json

from etgrid.cli import EXIT_CONFIG, EXIT_OK, main


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "--scenario", "custom", "--duration", "0.05",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "events per DG" in out
    for name in ("trace.csv", "events.csv", "metrics.json"):
        assert (tmp_path / name).exists()
    payload = json.loads((tmp_path / "metrics.json").read_text())
    assert payload["duration"] == 0.05


def test_config_file_and_flag_overrides(tmp_path):
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text("scenario = custom\nduration = 0.04\nepsilon = 0.3\n")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--decimate", "50",
                 "--out-dir", str(out), "--quiet"])
    assert code == EXIT_OK
    rows = (out / "trace.csv").read_text().splitlines()
    assert len(rows) == 1 + round(0.04 / 1e-5) // 50 + 1


def test_bad_config_exit_code(tmp_path, capsys):
    code = main(["run", "--scenario", "custom", "--duration", "-2",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_engine_flag(tmp_path):
    code = main(["run", "--scenario", "custom", "--duration", "0.02",
                 "--engine", "python", "--out-dir", str(tmp_path), "--quiet"])
    assert code == EXIT_OK
    payload = json.loads((tmp_path / "metrics.json").read_text())
    assert payload["engine"] == "python"


def test_unknown_config_key_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("warp_drive = on\n")
    code = main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_scenario_flag_overrides_config_schedule(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("scenario = estimation\nduration = 0.05\nepsilon = 0.4\n")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--scenario", "custom",
                 "--out-dir", str(out), "--quiet"])
    assert code == EXIT_OK
    payload = json.loads((out / "metrics.json").read_text())
    # custom preset: no switching, so only the three initial packets remain
    assert payload["per_dg_event_count"] == [1, 1, 1]
