import json
import logging

import pytest

from app.main import _overrides, main
from app.tasks.catalog import load_catalog

QUICK = ["--set", "image_size=16", "--set", "epochs=1", "--set", "freeze_epochs=0",
         "--set", "mic_samples=100", "--set", "z_dim=8"]


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def test_overrides_parse_json_values():
    assert _overrides(["weights.delta=0.9", "task=Top Hearts", "clip_enabled=false"]) == {
        "weights.delta": 0.9,
        "task": "Top Hearts",
        "clip_enabled": False,
    }


def test_list_tasks(capsys, tmp_path):
    assert main(["list-tasks", "--dataset", "dsprites_like", "--out", str(tmp_path / "tasks.json")]) == 0
    out = capsys.readouterr().out
    assert "Left-sided Hearts" in out and "posX<=0.5" in out
    assert len(load_catalog(tmp_path / "tasks.json")) == 9


def test_help_and_usage_errors():
    assert main(["--help"]) == 0
    assert main([]) == 2
    assert main(["train", "--task", "Top Hearts"]) == 2
    assert main(["list-tasks", "--dataset", "mnist"]) == 2


def test_configuration_errors_exit_with_two(tmp_path):
    assert main(["train", "--seed", "0", "--set", "dataset=nope"]) == 2
    assert main(["train", "--seed", "0", "--set", "epochs"]) == 2
    assert main(["train", "--seed", "0", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["infer-edges", "--run", str(tmp_path)]) == 2
    assert main(["run-plan", "--plan", str(tmp_path / "missing.toml")]) == 2


def test_report_of_an_empty_root(capsys, tmp_path):
    assert main(["report", "--root", str(tmp_path)]) == 0
    assert "_no runs_" in capsys.readouterr().out
    assert (tmp_path / "report" / "report.md").exists()


def test_train_then_inspect_a_run(capsys, tmp_path, saved_dsprites):
    run = tmp_path / "run"
    data = str(saved_dsprites.parent)
    assert main(["train", "--seed", "0", "--data", data, "--out", str(run), *QUICK]) == 0
    assert json.loads((run / "metrics.json").read_text())["task"] == "Left-sided Hearts"
    capsys.readouterr()

    assert main(["infer-edges", "--run", str(run), "--k", "2", "--fp-margin", "0"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["true_factors"] == ["posX", "shape"]
    assert report["margin_flagged"] == []
    assert len(report["inferred_factors"]) >= 2

    assert main(["evaluate", "--run", str(run), "--data", data]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["seed"] == 0 and 0.0 <= summary["accuracy"] <= 1.0


def test_config_file_and_flags(tmp_path, saved_dsprites):
    config = tmp_path / "hearts.toml"
    config.write_text('task = "Top Hearts"\nvariant = "beta_vae"\n\n[weights]\nbeta1 = 2.0\n')
    run = tmp_path / "run"
    argv = ["train", "--config", str(config), "--variant", "sup_beta_vae", "--seed", "3",
            "--data", str(saved_dsprites.parent), "--out", str(run), *QUICK]
    assert main(argv) == 0
    stored = json.loads((run / "config.json").read_text())
    assert stored["task"] == "Top Hearts"
    assert stored["variant"] == "sup_beta_vae"
    assert stored["seed"] == 3
    assert stored["weights"]["beta1"] == 2.0
