import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.config.loader import load_config_file, parse_model
from app.database import registry
from app.database.connection import session_scope
from app.database.models import MetricRecord, RunRecord
from app.datasets.factors import build_factor_space
from app.errors import ConfigurationError, RunFailure
from app.evaluation.edges import infer_task_edges
from app.experiment import runner
from app.experiment.plan import BASELINE, ExperimentPlan, RunSpec, load_plan, save_plan
from app.experiment.report import REPORT_FILES, collect_runs, delta_sweep, markdown_table, table2, table3, write_report
from app.experiment.runner import PARTIAL_SUFFIX, run_dir, run_plan
from app.tasks.catalog import find_task
from app.training.config import TrainConfig
from app.vae.config import Variant

QUICK_BASE = {
    "epochs": 1,
    "freeze_epochs": 0,
    "supervision_ramp_epochs": 0,
    "checkpoint_every": 1,
    "mic_samples": 100,
    "z_dim": 8,
}
HEARTS = "Left-sided Hearts"
TOP_BIG_HEARTS = "Top big Hearts"


def _plan(tmp_path, registry_url, **overrides):
    values = {
        "dataset": "dsprites_like",
        "image_size": 16,
        "tasks": [HEARTS],
        "conditions": ["ground_truth"],
        "seeds": [0],
        "output_root": tmp_path / "plan",
        "registry_url": registry_url,
        "base": QUICK_BASE,
    }
    values.update(overrides)
    return ExperimentPlan(**values)


def test_run_specs_cover_the_sweep():
    plan = ExperimentPlan(
        conditions=["unconstrained", "regularization"],
        variants=["ours", "beta_vae"],
        delta_sweep=[0.1, 0.5],
        seeds=[0, 1],
    )
    specs = plan.run_specs()
    ours = [s for s in specs if s.variant is Variant.OURS]
    baselines = [s for s in specs if s.condition == BASELINE]
    assert len(ours) == 9 * 2 * 2 * 2
    assert len(baselines) == 9 * 2
    assert len({s.key for s in specs}) == len(specs)


def test_run_keys():
    task = find_task("dsprites_like", HEARTS)
    assert (
        RunSpec("dsprites_like", task, "regularization", Variant.OURS, 0.5, 0).key
        == "left-sided-hearts/regularization__ours__d0.5/seed_0"
    )
    assert (
        RunSpec("dsprites_like", task, "thresholding", Variant.OURS, None, 2).key
        == "left-sided-hearts/thresholding__ours__ddefault/seed_2"
    )
    assert RunSpec("dsprites_like", task, BASELINE, Variant.BETA_VAE, None, 1).key == (
        "left-sided-hearts/baseline__beta_vae/seed_1"
    )


def test_conditions_map_onto_train_configs():
    plan = ExperimentPlan(
        tasks=[HEARTS],
        conditions=["unconstrained", "thresholding", "regularization", "ground_truth"],
        base={"weights.beta1": 2.0, "noise": {"zeta_std": 0.2}},
    )
    configs = {spec.condition: plan.train_config(spec) for spec in plan.run_specs()}
    assert not configs["unconstrained"].clip_enabled and configs["unconstrained"].weights.gamma == 0.0
    assert configs["thresholding"].clip_enabled and configs["thresholding"].weights.gamma == 0.0
    assert configs["regularization"].clip_enabled and configs["regularization"].weights.gamma == 0.5
    assert configs["ground_truth"].a_init == "ground_truth"
    assert all(c.weights.beta1 == 2.0 and c.noise.zeta_std == 0.2 for c in configs.values())


def test_swept_delta_reaches_the_config():
    plan = ExperimentPlan(tasks=[HEARTS], delta_sweep=[0.0, 1.0], variants=["ours", "sup_beta_vae"])
    deltas = sorted(plan.train_config(s).weights.delta for s in plan.run_specs() if s.variant is Variant.OURS)
    assert deltas == [0.0, 1.0]
    baseline = next(s for s in plan.run_specs() if s.condition == BASELINE)
    assert plan.train_config(baseline).variant is Variant.SUP_BETA_VAE
    assert plan.train_config(baseline).clip_enabled


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(batch=4)
    with pytest.raises(ValueError):
        ExperimentPlan(dataset="mnist")
    with pytest.raises(ValueError):
        ExperimentPlan(seeds=[])
    with pytest.raises(ValueError):
        ExperimentPlan(delta_sweep=[-0.1])
    with pytest.raises(ConfigurationError):
        ExperimentPlan(tasks=["Purple Triangles"]).run_specs()


def test_plan_file_round_trip(tmp_path):
    plan = ExperimentPlan(tasks=[HEARTS], conditions=["thresholding"], seeds=[3, 4], output_root=tmp_path / "out")
    path = save_plan(plan, tmp_path / "plan.json")
    assert load_plan(path) == plan


def test_plan_from_toml_with_overrides(tmp_path):
    path = tmp_path / "plan.toml"
    path.write_text(
        'dataset = "shapes3d_like"\n'
        'tasks = ["floor_hue<=0.5 & wall_hue<=0.5"]\n'
        'conditions = ["unconstrained", "ground_truth"]\n'
        "seeds = [0, 1, 2]\n"
        "\n[base]\nepochs = 3\n"
    )
    plan = load_plan(path, {"workers": 2, "base.freeze_epochs": 1})
    assert plan.workers == 2
    assert plan.base == {"epochs": 3, "freeze_epochs": 1}
    assert len(plan.run_specs()) == 6
    with pytest.raises(ConfigurationError):
        load_plan(path, {"unknown": 1})


def test_registry_tracks_run_status(registry_url):
    task = find_task("dsprites_like", HEARTS)
    first = RunSpec("dsprites_like", task, "regularization", Variant.OURS, None, 0)
    second = RunSpec("dsprites_like", task, "regularization", Variant.OURS, None, 1)

    registry.mark_started(registry_url, first)
    registry.mark_started(registry_url, second)
    assert registry.run_statuses(registry_url) == {first.key: "running", second.key: "running"}

    metrics = {"accuracy": 0.9, "mic_score": 0.4, "edges": {"tp": 2, "fp": 0, "fn": 0}}
    registry.mark_completed(registry_url, first, metrics)
    registry.mark_failed(registry_url, second, RuntimeError("diverged"))
    registry.mark_skipped(registry_url, first, metrics)
    assert registry.run_statuses(registry_url) == {first.key: "completed", second.key: "failed"}

    with session_scope(registry_url) as db:
        record = db.query(RunRecord).filter(RunRecord.run_key == first.key).one()
        names = {m.metric_name: m.metric_value for m in db.query(MetricRecord).filter(MetricRecord.run_id == record.id)}
        failed = db.query(RunRecord).filter(RunRecord.run_key == second.key).one()
        assert record.accuracy == 0.9
        assert names == {"accuracy": 0.9, "mic_score": 0.4, "edges_tp": 2.0, "edges_fp": 0.0, "edges_fn": 0.0}
        assert failed.error == "diverged"


def test_ground_truth_plan_recovers_edges_and_skips_on_rerun(tmp_path, registry_url, dsprites_corpus, monkeypatch):
    plan = _plan(tmp_path, registry_url)
    [spec] = plan.run_specs()

    summary = run_plan(plan, corpus=dsprites_corpus)

    assert summary.completed == [spec.key] and summary.skipped == []
    metrics = json.loads((run_dir(plan, spec) / "metrics.json").read_text())
    assert (metrics["edges"]["tp"], metrics["edges"]["fp"], metrics["edges"]["fn"]) == (2, 0, 0)
    assert registry.run_statuses(registry_url) == {spec.key: "completed"}
    for name in REPORT_FILES:
        assert (summary.report_dir / name).exists()
    assert not list((tmp_path / "plan").glob(f"runs/**/*{PARTIAL_SUFFIX}"))
    rows = pd.read_csv(summary.report_dir / "table3.csv")
    assert rows.loc[0, "condition"] == "ground_truth" and rows.loc[0, "gf2_rate_mean"] == 1.0

    def refuse(*args, **kwargs):
        raise AssertionError("a complete run was trained again")

    monkeypatch.setattr(runner, "fit", refuse)
    again = run_plan(plan, corpus=dsprites_corpus)
    assert again.skipped == [spec.key] and again.completed == []
    assert registry.run_statuses(registry_url) == {spec.key: "completed"}


def test_failing_run_is_recorded_and_the_report_still_written(tmp_path, registry_url, dsprites_corpus, monkeypatch):
    plan = _plan(tmp_path, registry_url, seeds=[0, 1])

    def explode(config, corpus, out_dir, task=None, resume=True):
        if config.seed == 1:
            raise RuntimeError("diverged")
        (out_dir / "metrics.json").write_text(json.dumps(_fake_metrics()))

    monkeypatch.setattr(runner, "fit", explode)
    with pytest.raises(RunFailure) as info:
        run_plan(plan, corpus=dsprites_corpus)

    failed_key = plan.run_specs()[1].key
    assert info.value.failed_keys == [failed_key]
    assert info.value.exit_code == 1
    assert registry.run_statuses(registry_url)[failed_key] == "failed"
    partial = run_dir(plan, plan.run_specs()[1])
    assert partial.with_name(partial.name + PARTIAL_SUFFIX).exists()
    assert (tmp_path / "plan" / "report" / "report.md").exists()


def test_partial_run_is_resumed(tmp_path, registry_url, dsprites_corpus, monkeypatch):
    plan = _plan(tmp_path, registry_url)
    [spec] = plan.run_specs()
    final = run_dir(plan, spec)
    partial = final.with_name(final.name + PARTIAL_SUFFIX)
    partial.mkdir(parents=True)
    (partial / "leftover.txt").write_text("checkpoint stand-in")
    seen = {}

    def record(config, corpus, out_dir, task=None, resume=True):
        seen["resume"] = resume
        seen["leftover"] = (out_dir / "leftover.txt").exists()
        (out_dir / "metrics.json").write_text(json.dumps(_fake_metrics()))

    monkeypatch.setattr(runner, "fit", record)
    run_plan(plan, corpus=dsprites_corpus)
    assert seen == {"resume": True, "leftover": True}
    assert (final / "leftover.txt").exists() and not partial.exists()


# hand-written run directories for the report


NAMES = build_factor_space("dsprites_like").names


def _edges(task_name, top):
    task = find_task("dsprites_like", task_name)
    column = np.zeros(len(NAMES))
    for rank, name in enumerate(top):
        column[NAMES.index(name)] = 1.0 - 0.1 * rank
    return infer_task_edges([1.0], column[:, None], task, NAMES).model_dump(mode="json")


def _fake_metrics():
    return {"accuracy": 1.0, "mic_score": 0.5, "m": len(NAMES), "edges": _edges(HEARTS, ["posX", "shape"])}


def _write_run(root, task_name, condition, seed, top=None, delta=None, variant="ours", accuracy=0.9, mic=0.5):
    task = find_task("dsprites_like", task_name)
    spec = RunSpec("dsprites_like", task, condition, Variant(variant), delta, seed)
    path = root / "runs" / spec.key
    path.mkdir(parents=True)
    (path / "run.json").write_text(json.dumps(spec.descriptor()))
    metrics = {
        "accuracy": accuracy,
        "mic_score": mic,
        "m": len(NAMES),
        "edges": _edges(task_name, top or sorted(task.relevant_factors)),
        "delta": 0.5,
    }
    (path / "metrics.json").write_text(json.dumps(metrics))
    return path


def test_collect_runs_ignores_unfinished_directories(tmp_path):
    _write_run(tmp_path, HEARTS, "regularization", 0)
    unfinished = tmp_path / "runs" / "left-sided-hearts" / "regularization__ours__ddefault" / "seed_1.partial"
    unfinished.mkdir(parents=True)
    (unfinished / "run.json").write_text("{}")
    (unfinished / "metrics.json").write_text("{}")
    started = tmp_path / "runs" / "left-sided-hearts" / "regularization__ours__ddefault" / "seed_2"
    started.mkdir(parents=True)
    (started / "run.json").write_text("{}")

    runs = collect_runs(tmp_path)
    assert len(runs) == 1
    assert runs[0]["delta"] is None and runs[0]["seed"] == 0


def test_table3_rates_and_coverage(tmp_path):
    _write_run(tmp_path, HEARTS, "regularization", 0)
    _write_run(tmp_path, TOP_BIG_HEARTS, "regularization", 0)
    _write_run(tmp_path, HEARTS, "regularization", 1)
    _write_run(tmp_path, HEARTS, "unconstrained", 0, top=["color", "scale"])
    _write_run(tmp_path, TOP_BIG_HEARTS, "unconstrained", 0)
    _write_run(tmp_path, HEARTS, BASELINE, 0, variant="beta_vae")

    table = table3(collect_runs(tmp_path)).set_index("condition")

    assert set(table.index) == {"regularization", "unconstrained"}
    regularization = table.loc["regularization"]
    assert regularization["gf2_rate_mean"] == 1.0 and regularization["gf2_rate_std"] == 0.0
    assert regularization["gf3_rate_mean"] == 1.0
    assert regularization["coverage"] == 0.5 and regularization["n_seeds"] == 2
    unconstrained = table.loc["unconstrained"]
    assert unconstrained["gf2_rate_mean"] == 0.0
    # two false positives out of four irrelevant factors on one of two tasks
    assert unconstrained["fp_rate_mean"] == pytest.approx(0.25)
    assert unconstrained["coverage"] == 1.0


def test_table2_reports_run_and_task_means(tmp_path):
    _write_run(tmp_path, HEARTS, "regularization", 0, mic=0.2, accuracy=0.8)
    _write_run(tmp_path, HEARTS, "regularization", 1, mic=0.4, accuracy=1.0)
    _write_run(tmp_path, TOP_BIG_HEARTS, "regularization", 0, mic=0.9, accuracy=0.9)
    _write_run(tmp_path, HEARTS, "unconstrained", 0, mic=0.0)
    _write_run(tmp_path, HEARTS, BASELINE, 0, variant="beta_vae", mic=0.3, accuracy=0.6)

    table, by_task = table2(collect_runs(tmp_path))
    ours = table.set_index("variant").loc["ours"]
    assert ours["n_runs"] == 3
    assert ours["mic_score_mean"] == pytest.approx(0.5)
    assert ours["mic_task_mean"] == pytest.approx(0.6)
    assert ours["accuracy_mean"] == pytest.approx(0.9)
    assert table.set_index("variant").loc["beta_vae", "accuracy_mean"] == pytest.approx(0.6)
    assert len(by_task) == 3


def test_delta_sweep_rows(tmp_path):
    for seed in (0, 1):
        _write_run(tmp_path, HEARTS, "regularization", seed, delta=0.0, accuracy=0.9, mic=0.2 + 0.1 * seed)
        _write_run(tmp_path, HEARTS, "regularization", seed, delta=1.0, accuracy=0.7, mic=0.6)
    runs = collect_runs(tmp_path)

    sweep = delta_sweep(runs)
    assert list(sweep["delta"]) == [0.0, 1.0]
    assert list(sweep["n_runs"]) == [2, 2]
    assert sweep.iloc[0]["mic_score_mean"] == pytest.approx(0.25)
    assert sweep.iloc[1]["accuracy_mean"] == pytest.approx(0.7)
    # with no default-delta runs the variant table falls back to the swept ones
    assert table2(runs)[0].loc[0, "n_runs"] == 4

    out = write_report(tmp_path)
    assert (out / "delta_sweep.html").exists()
    assert "## Delta sweep" in (out / "report.md").read_text()


def test_report_of_an_empty_root(tmp_path):
    out = write_report(tmp_path)
    for name in REPORT_FILES:
        assert (out / name).exists()
    assert not (out / "delta_sweep.html").exists()
    assert "_no runs_" in (out / "report.md").read_text()


REPO_ROOT = Path(__file__).resolve().parents[2]


@pytest.mark.parametrize("name", ["table2.toml", "table3.toml", "delta_sweep.toml"])
def test_shipped_plans_parse(name):
    plan = load_plan(REPO_ROOT / "plans" / name)
    specs = plan.run_specs()
    assert specs
    assert all(plan.train_config(spec).dataset == plan.dataset for spec in specs[:5])


def test_shipped_run_config_parses():
    config = parse_model(TrainConfig, load_config_file(REPO_ROOT / "configs" / "hearts.toml"))
    assert config.task == "Left-sided Hearts" and config.weights.beta2 == 0.6


def test_markdown_table_formats_floats_and_gaps():
    frame = pd.DataFrame({"variant": ["ours", "beta_vae"], "accuracy_mean": [0.5, float("nan")], "n_runs": [3, 1]})
    lines = markdown_table(frame).splitlines()
    assert lines[0].replace(" ", "") == "|variant|accuracy_mean|n_runs|"
    assert set(lines[1].replace("|", "").replace(" ", "")) <= {"-", ":"}
    assert "0.500" in lines[2] and "3" in lines[2]
    assert lines[3].replace(" ", "") == "|beta_vae|-|1|"
    assert markdown_table(pd.DataFrame()) == "_no runs_\n"
