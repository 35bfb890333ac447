"""Run registry: one row per run key with its status and headline metrics.

Run directories remain the source of truth for reports; the registry is a
queryable index of what ran and what failed. Only the process that executes
a plan writes to it.
"""

import logging
from datetime import datetime, timezone

from app.database.connection import session_scope
from app.database.models import MetricRecord, RunRecord

logger = logging.getLogger(__name__)

SCALAR_METRICS = ("accuracy", "train_accuracy", "mic_score", "recon_mse", "baseline_mse")


def _now():
    return datetime.now(timezone.utc)


def _record(db, spec):
    """Fetch the row of ``spec.key``, creating it (not yet flushed) when absent."""
    record = db.query(RunRecord).filter(RunRecord.run_key == spec.key).one_or_none()
    if record is None:
        record = RunRecord(
            run_key=spec.key,
            dataset=spec.dataset,
            task=spec.task.name,
            condition=spec.condition,
            variant=spec.variant.value,
            delta=spec.delta,
            seed=spec.seed,
        )
        db.add(record)
    return record


def mark_started(url, spec):
    """
    Mark a run as running and clear any earlier error.

    Args:
        url (str): SQLAlchemy URL of the registry.
        spec (RunSpec): The run about to train.
    """
    with session_scope(url) as db:
        record = _record(db, spec)
        record.status = "running"
        record.error = None
        record.started_at = _now()
        record.finished_at = None


def mark_skipped(url, spec, metrics):
    """
    Record a run whose directory already held ``metrics.json``.

    A row that is already ``completed`` keeps its status; otherwise the run is
    marked ``skipped`` with the headline numbers read from disk.

    Args:
        url (str): SQLAlchemy URL of the registry.
        spec (RunSpec): The skipped run.
        metrics (dict): Contents of its ``metrics.json``.
    """
    with session_scope(url) as db:
        record = _record(db, spec)
        if record.status != "completed":
            record.status = "skipped"
            record.accuracy = metrics.get("accuracy")
            record.mic_score = metrics.get("mic_score")


def mark_failed(url, spec, error):
    """
    Mark a run as failed.

    Args:
        url (str): SQLAlchemy URL of the registry.
        spec (RunSpec): The failed run.
        error (Exception | str): Stored as text in ``RunRecord.error``.
    """
    with session_scope(url) as db:
        record = _record(db, spec)
        record.status = "failed"
        record.error = str(error)
        record.finished_at = _now()


def mark_completed(url, spec, metrics):
    """
    Store the run's headline numbers and replace its metric rows.

    Scalar metrics listed in ``SCALAR_METRICS`` and the edge counts
    ``edges_tp``, ``edges_fp`` and ``edges_fn`` become ``MetricRecord`` rows;
    rows from an earlier completion of the same key are deleted first.

    Args:
        url (str): SQLAlchemy URL of the registry.
        spec (RunSpec): The completed run.
        metrics (dict): The run's ``metrics.json`` bundle.
    """
    with session_scope(url) as db:
        record = _record(db, spec)
        record.status = "completed"
        record.error = None
        record.finished_at = _now()
        record.accuracy = metrics.get("accuracy")
        record.mic_score = metrics.get("mic_score")
        db.flush()
        db.query(MetricRecord).filter(MetricRecord.run_id == record.id).delete()
        values = {name: metrics[name] for name in SCALAR_METRICS if name in metrics}
        for name in ("tp", "fp", "fn"):
            if "edges" in metrics:
                values[f"edges_{name}"] = metrics["edges"][name]
        for name, value in values.items():
            db.add(MetricRecord(run_id=record.id, metric_name=name, metric_value=float(value)))
    logger.debug("registry updated for %s", spec.key)


def run_statuses(url):
    """Map of ``run_key`` to status for every registered run."""
    with session_scope(url) as db:
        return {r.run_key: r.status for r in db.query(RunRecord).all()}
