"""Aggregate report of a plan's output root, computed from run directories alone."""

import json
import logging
from pathlib import Path

import pandas as pd

from app.evaluation.edges import EdgeReport, table3_metrics
from app.evaluation.figures import write_delta_chart
from app.evaluation.run_metrics import METRICS_FILE

logger = logging.getLogger(__name__)

RUN_FILE = "run.json"
REPORT_FILES = ("table2.csv", "table2_by_task.csv", "table3.csv", "delta_sweep.csv", "report.md")
RATE_COLUMNS = ("gf2_rate", "gf3_rate", "fp_rate", "fn_rate")


def collect_runs(root):
    """
    Load every completed run below ``<root>/runs``.

    A run counts as completed when its directory holds both ``run.json`` and
    ``metrics.json``. Unfinished ``.partial`` directories are ignored.

    Args:
        root (str | Path): Plan output root.

    Returns:
        list[dict]: One record per run, the run descriptor merged with its
        metrics bundle (descriptor keys win for ``delta``, which is ``None``
        for runs at the dataset's default weight).
    """
    runs = []
    for run_file in sorted(Path(root).glob(f"runs/**/{RUN_FILE}")):
        run_dir = run_file.parent
        if any(part.endswith(".partial") for part in run_dir.parts):
            continue
        metrics_file = run_dir / METRICS_FILE
        if not metrics_file.exists():
            continue
        descriptor = json.loads(run_file.read_text())
        metrics = json.loads(metrics_file.read_text())
        runs.append({**metrics, **descriptor, "run_dir": str(run_dir)})
    logger.info("collected %d completed runs under %s", len(runs), root)
    return runs


def _frame(runs):
    columns = ["key", "dataset", "task", "n_factors", "condition", "variant", "delta", "seed", "accuracy", "mic_score"]
    return pd.DataFrame([{c: run.get(c) for c in columns} for run in runs], columns=columns)


def _headline(runs):
    """Runs at the default delta, or every run when the plan only swept delta."""
    default = [run for run in runs if run.get("delta") is None]
    return default or runs


def table2(runs):
    """
    Accuracy and MIC score per dataset and variant, mean and std over runs.

    ``ours`` enters through its ``regularization`` runs, the full objective;
    the comparison variants through their ``baseline`` runs.

    Returns:
        tuple[pd.DataFrame, pd.DataFrame]: The variant table, with
        ``mic_task_mean`` holding the mean of per-task MIC means next to the
        plain mean over runs, and the per-task breakdown it is built from.
    """
    frame = _frame(_headline(runs))
    frame = frame[frame["condition"].isin(["baseline", "regularization"])]
    if frame.empty:
        empty = pd.DataFrame(columns=["dataset", "variant", "accuracy_mean", "accuracy_std", "mic_score_mean",
                                      "mic_score_std", "mic_task_mean", "n_runs"])
        return empty, pd.DataFrame(columns=["dataset", "variant", "task", "accuracy", "mic_score", "n_runs"])
    by_task = (
        frame.groupby(["dataset", "variant", "task"])
        .agg(accuracy=("accuracy", "mean"), mic_score=("mic_score", "mean"), n_runs=("key", "count"))
        .reset_index()
    )
    table = (
        frame.groupby(["dataset", "variant"])
        .agg(
            accuracy_mean=("accuracy", "mean"),
            accuracy_std=("accuracy", "std"),
            mic_score_mean=("mic_score", "mean"),
            mic_score_std=("mic_score", "std"),
            n_runs=("key", "count"),
        )
        .reset_index()
    )
    task_means = by_task.groupby(["dataset", "variant"])["mic_score"].mean().rename("mic_task_mean").reset_index()
    table = table.merge(task_means, on=["dataset", "variant"])
    for row in table.itertuples():
        logger.info(
            "%s %s: mic over runs %.3f, mean of per-task mic %.3f",
            row.dataset, row.variant, row.mic_score_mean, row.mic_task_mean,
        )
    return table, by_task


def table3(runs):
    """
    Edge-inference rates per dataset and condition, mean and std over seeds.

    Each (dataset, condition, seed) group is aggregated with ``table3_metrics``
    against the full set of tasks seen under that dataset, so a condition with
    missing runs shows ``coverage`` below 1.
    """
    selected = [run for run in _headline(runs) if run.get("condition") != "baseline"]
    rows = []
    datasets = sorted({run["dataset"] for run in selected})
    for dataset in datasets:
        in_dataset = [run for run in selected if run["dataset"] == dataset]
        expected = sorted({run["task"] for run in in_dataset})
        for condition in sorted({run["condition"] for run in in_dataset}):
            for seed in sorted({run["seed"] for run in in_dataset if run["condition"] == condition}):
                group = [r for r in in_dataset if r["condition"] == condition and r["seed"] == seed]
                reports = [EdgeReport.model_validate(r["edges"]) for r in group]
                row = table3_metrics(reports, condition, group[0]["m"], expected_tasks=expected)
                rows.append({"dataset": dataset, "seed": seed, **row.model_dump(exclude={"missing_tasks"})})
    if not rows:
        return pd.DataFrame(columns=["dataset", "condition", *[f"{c}_{s}" for c in RATE_COLUMNS for s in ("mean", "std")],
                                     "coverage", "n_seeds"])
    per_seed = pd.DataFrame(rows)
    numeric = [*RATE_COLUMNS, "coverage"]
    per_seed[numeric] = per_seed[numeric].astype(float)
    aggregations = {f"{c}_{s}": (c, s) for c in RATE_COLUMNS for s in ("mean", "std")}
    table = (
        per_seed.groupby(["dataset", "condition"], dropna=False)
        .agg(**aggregations, coverage=("coverage", "min"), n_seeds=("seed", "nunique"))
        .reset_index()
    )
    return table


def delta_sweep(runs):
    """Accuracy and MIC score per (dataset, condition, delta) over seeds, for runs with an explicit delta."""
    frame = _frame([run for run in runs if run.get("delta") is not None])
    if frame.empty:
        return pd.DataFrame(columns=["dataset", "condition", "delta", "accuracy_mean", "accuracy_std",
                                     "mic_score_mean", "mic_score_std", "n_runs"])
    return (
        frame.groupby(["dataset", "condition", "delta"])
        .agg(
            accuracy_mean=("accuracy", "mean"),
            accuracy_std=("accuracy", "std"),
            mic_score_mean=("mic_score", "mean"),
            mic_score_std=("mic_score", "std"),
            n_runs=("key", "count"),
        )
        .reset_index()
        .sort_values(["dataset", "condition", "delta"])
    )


def markdown_table(frame):
    """Render a DataFrame as a GitHub-style markdown table, floats at three decimals and gaps as ``-``."""
    if frame.empty:
        return "_no runs_\n"
    gaps_as_none = frame.astype(object).where(frame.notna(), None)
    return gaps_as_none.to_markdown(index=False, tablefmt="github", floatfmt=".3f", missingval="-") + "\n"


def write_report(root):
    """
    Write the plan report into ``<root>/report``.

    Files: ``table2.csv``, ``table2_by_task.csv``, ``table3.csv``,
    ``delta_sweep.csv``, ``delta_sweep.html`` (only when a delta sweep ran) and
    ``report.md`` with the same tables in markdown. The output depends only on
    the run directories, so regenerating it is always safe.

    Args:
        root (str | Path): Plan output root holding ``runs/``.

    Returns:
        Path: The report directory.

    Example:
        report_dir = write_report("runs/table3")
        print((report_dir / "report.md").read_text())
    """
    root = Path(root)
    out_dir = root / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = collect_runs(root)

    variants, by_task = table2(runs)
    conditions = table3(runs)
    sweep = delta_sweep(runs)
    variants.to_csv(out_dir / "table2.csv", index=False)
    by_task.to_csv(out_dir / "table2_by_task.csv", index=False)
    conditions.to_csv(out_dir / "table3.csv", index=False)
    sweep.to_csv(out_dir / "delta_sweep.csv", index=False)
    if not sweep.empty:
        write_delta_chart(sweep, out_dir / "delta_sweep.html")

    sections = [
        "# Experiment report\n",
        f"{len(runs)} completed runs under `{root}`.\n",
        "## Accuracy and MIC score per variant\n",
        markdown_table(variants),
        "## Edge inference per condition\n",
        markdown_table(conditions),
        "## Delta sweep\n",
        markdown_table(sweep),
    ]
    (out_dir / "report.md").write_text("\n".join(sections))
    logger.info("report written to %s", out_dir)
    return out_dir
