"""Plan execution: one run directory per RunSpec, committed atomically and skipped once complete."""

import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from app.config.settings import settings
from app.database import registry
from app.datasets.corpus import load_corpus, obtain_corpus
from app.errors import RunFailure
from app.evaluation.run_metrics import METRICS_FILE
from app.experiment.report import RUN_FILE, write_report
from app.training.trainer import fit

logger = logging.getLogger(__name__)

RUNS_SUBDIR = "runs"
PARTIAL_SUFFIX = ".partial"


@dataclass
class PlanSummary:
    completed: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    report_dir: Path | None = None


def run_dir(plan, spec):
    return Path(plan.output_root) / RUNS_SUBDIR / spec.key


def execute_run(plan, spec, corpus):
    """
    Train one run of a plan inside ``<run>.partial`` and rename it into place.

    A crashed run leaves its ``.partial`` directory, checkpoints included, so
    the next invocation resumes it. The rename happens only after
    ``metrics.json`` exists, which is what marks a run as complete.

    Returns:
        dict: The run's metrics bundle.
    """
    final = run_dir(plan, spec)
    partial = final.with_name(final.name + PARTIAL_SUFFIX)
    config = plan.train_config(spec)
    partial.mkdir(parents=True, exist_ok=True)
    (partial / RUN_FILE).write_text(json.dumps(spec.descriptor(), indent=2, sort_keys=True))
    fit(config, corpus, partial, task=spec.task, resume=True)
    if final.exists():
        shutil.rmtree(final)
    partial.rename(final)
    return json.loads((final / METRICS_FILE).read_text())


def _execute_in_worker(plan, spec, corpus_dir):
    return execute_run(plan, spec, load_corpus(corpus_dir))


def run_plan(plan, corpus=None):
    """
    Execute every run of a plan, then regenerate the plan report.

    Completed runs (those with ``metrics.json``) are skipped without training.
    A failing run is logged, recorded in the registry and skipped; the others
    still execute. With ``plan.workers > 1`` runs train in separate processes,
    each loading the corpus from disk.

    Args:
        plan (ExperimentPlan): The plan to execute.
        corpus (Corpus | None): Pre-loaded corpus; obtained from ``plan.data_dir``
            (generated there if missing) when omitted.

    Returns:
        PlanSummary: Run keys by outcome and the report directory.

    Raises:
        RunFailure: If any run failed; the report is still written first.

    Example:
        summary = run_plan(load_plan("plans/table3.toml"))
        print(len(summary.completed), len(summary.skipped))
    """
    url = plan.registry_url or settings.DATABASE_URL
    corpus_dir = None
    if corpus is None or plan.workers > 1:
        corpus, corpus_dir = obtain_corpus(
            plan.dataset, plan.resolution, plan.data_dir or settings.DATA_DIR, plan.image_size
        )

    summary = PlanSummary()
    pending = []
    for spec in plan.run_specs():
        metrics_path = run_dir(plan, spec) / METRICS_FILE
        if metrics_path.exists():
            logger.info("run %s already complete, skipping", spec.key)
            registry.mark_skipped(url, spec, json.loads(metrics_path.read_text()))
            summary.skipped.append(spec.key)
        else:
            pending.append(spec)
    logger.info("plan has %d runs to execute, %d already complete", len(pending), len(summary.skipped))

    def finished(spec, metrics=None, error=None):
        if error is None:
            registry.mark_completed(url, spec, metrics)
            summary.completed.append(spec.key)
        else:
            logger.error("run %s failed: %s", spec.key, error)
            registry.mark_failed(url, spec, error)
            summary.failed.append(spec.key)

    if plan.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = {}
            for spec in pending:
                registry.mark_started(url, spec)
                futures[pool.submit(_execute_in_worker, plan, spec, corpus_dir)] = spec
            for future in as_completed(futures):
                spec = futures[future]
                try:
                    finished(spec, metrics=future.result())
                except Exception as exc:
                    finished(spec, error=exc)
    else:
        for spec in pending:
            registry.mark_started(url, spec)
            try:
                metrics = execute_run(plan, spec, corpus)
            except Exception as exc:
                logger.exception("run %s raised", spec.key)
                finished(spec, error=exc)
            else:
                finished(spec, metrics=metrics)

    summary.report_dir = write_report(plan.output_root)
    if summary.failed:
        raise RunFailure(summary.failed)
    return summary
