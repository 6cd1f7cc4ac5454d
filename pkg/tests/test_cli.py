import json

from irncota.cli import main


def test_cli_run_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("N: 10\nn_features: 4\nper_node: 2\nmetrics_stride: 5\ndelta: 0.0008\n")
    out = tmp_path / "res"
    code = main(["run", str(cfg), "--out", str(out), "--estimator", "ncota",
                 "--interference", "gaussian-jammer", "--iterations", "10", "--realizations", "2",
                 "--seed", "3"])
    assert code == 0
    rows = (out / "runs.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 3 and summary["config"]["estimator"] == "ncota"
    assert summary["config"]["interference"] == "gaussian-jammer"
    assert "final:" in capsys.readouterr().out


def test_cli_quiet(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("N: 10\nobjective: quadratic-toy\n")
    assert main(["run", str(cfg), "--out", str(tmp_path), "--iterations", "3",
                 "--realizations", "1", "--quiet"]) == 0
    assert capsys.readouterr().out == ""


def test_cli_error_line(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("p_tx: 1.5\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    payload = json.loads(err)
    assert payload["status"] == "error" and payload["type"] == "ConfigError"
    assert "p_tx" in payload["message"]
    assert not (tmp_path / "x").exists()


def test_cli_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == 1
    assert json.loads(capsys.readouterr().err.strip())["type"] == "FileNotFoundError"
