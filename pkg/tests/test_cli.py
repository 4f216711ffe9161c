import json

import pandas as pd
import pytest

from adaroute.cli import EXIT_CONFIG, EXIT_OK, main
from adaroute.config import SEED_ENV, RunConfig


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


@pytest.fixture
def config_file(tiny, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(tiny().to_json())
    return path


@pytest.fixture
def run_dir(config_file, tmp_path):
    out = tmp_path / "run"
    assert main(["train", str(config_file), "--output", str(out), "--steps", "2"]) == EXIT_OK
    return out


def test_print_defaults_round_trips(capsys):
    assert main(["config", "--print-defaults"]) == EXIT_OK
    config = RunConfig.from_dict(json.loads(capsys.readouterr().out))
    assert config == RunConfig()


def test_config_without_flag_fails(capsys):
    assert main(["config"]) == EXIT_CONFIG
    assert "adaroute: error:" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    assert "nope.json" in capsys.readouterr().err


def test_invalid_config_value(tiny, tmp_path):
    data = tiny().to_dict()
    data["adapter"]["layout"] = "cascade"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["train", str(path)]) == EXIT_CONFIG


def test_unknown_arguments_exit_with_usage_code():
    assert main(["diag", "somewhere", "--kind", "saliency"]) == 2
    assert main([]) == 2


def test_train_writes_artifacts(run_dir):
    report = pd.read_csv(str(run_dir / "report.csv"))
    assert list(report["step"]) == [0, 1, 2]
    saved = RunConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    assert saved.train.steps == 2
    assert (run_dir / "checkpoint" / "manifest.json").exists()


def test_seed_from_environment(config_file, tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "41")
    out = tmp_path / "seeded"
    assert main(["train", str(config_file), "--output", str(out), "--steps", "0"]) == EXIT_OK
    assert json.loads((out / "config.json").read_text())["seed"] == 41
    monkeypatch.setenv(SEED_ENV, "-1")
    assert main(["train", str(config_file), "--output", str(out), "--steps", "0"]) == EXIT_CONFIG


def test_diagnostics_of_a_checkpoint(run_dir, tmp_path, capsys):
    ckpt = str(run_dir / "checkpoint")
    out = tmp_path / "diag"
    assert main(["diag", ckpt, "--kind", "cka", "--probes", "3", "--output", str(out)]) == EXIT_OK
    cka = pd.read_csv(str(out / "cka.csv"), index_col=0)
    assert list(cka.index) == ["s0.b0", "s1.b0"]

    assert main(["diag", ckpt, "--kind", "erf", "--probes", "2", "--output", str(out)]) == EXIT_OK
    assert (out / "erf.pgm").read_bytes().startswith(b"P5\n8 8\n255\n")
    assert "erf support" in capsys.readouterr().out

    assert main(["diag", ckpt, "--kind", "expert-map", "--head", "GA", "--stage", "1",
                 "--probes", "2", "--output", str(out)]) == EXIT_OK
    assert (out / "expert_map_GA_s1.csv").exists()

    assert main(["diag", ckpt, "--kind", "audit"]) == EXIT_OK
    assert "Parameter audit" in capsys.readouterr().out
    assert (run_dir / "checkpoint" / "diagnostics" / "audit.txt").exists()


def test_diag_rejects_bad_probe_count(run_dir):
    assert main(["diag", str(run_dir / "checkpoint"), "--kind", "cka", "--probes", "0"]) == EXIT_CONFIG


def test_audit_command(tmp_path, capsys):
    assert main(["audit", "--arch", "swin-b", "--output", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "4,016,432" in text and "GAP:" in text
    ledger = pd.read_csv(str(tmp_path / "audit_swin-b.csv"))
    assert ledger["count"].sum() == 4016432


def test_toy_audit_with_run_config(config_file, capsys):
    assert main(["audit", "--arch", "toy", "--adapter", str(config_file)]) == EXIT_OK
    assert "Parameter audit: toy" in capsys.readouterr().out


def test_mistyped_values_exit_with_config_code(tiny, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"base": tiny().to_dict(), "axes": {"top_k": ["2"]}, "steps": 1}))
    assert main(["ablate", str(grid), "--output", str(tmp_path / "out.csv")]) == EXIT_CONFIG
    assert "adapter.top_k" in capsys.readouterr().err
    assert not (tmp_path / "out.csv").exists()

    data = tiny().to_dict()
    data["train"]["lr"] = "0.01"
    path = tmp_path / "typed.json"
    path.write_text(json.dumps(data))
    assert main(["train", str(path), "--output", str(tmp_path / "run")]) == EXIT_CONFIG
    assert "train.lr" in capsys.readouterr().err
