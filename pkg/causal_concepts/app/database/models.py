from sqlalchemy import Column, DateTime, Float, Integer, String, Text

from app.database.connection import Base


class RunRecord(Base):
    """
    Database model indexing one training run of an experiment plan.

    A record is created when the plan runner starts a run and updated when it
    completes, fails or is found already complete. The record only indexes
    runs: results live in the run directory named by ``run_key`` and reports
    are always computed from those directories.

    Example:
        record = RunRecord(
            run_key="left-sided-hearts/regularization__ours__d0.5/seed_0",
            dataset="dsprites_like",
            task="Left-sided Hearts",
            condition="regularization",
            variant="ours",
            delta=0.5,
            seed=0,
            status="running",
        )

        failed = session.query(RunRecord).filter(RunRecord.status == "failed").all()
    """

    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)

    run_key = Column(String, unique=True, index=True, nullable=False)
    """
    Path of the run directory relative to the plan's ``runs/`` folder.

    Unique across the registry, so re-running a plan updates records instead
    of duplicating them.
    """

    dataset = Column(String)
    task = Column(String, index=True)
    condition = Column(String, index=True)
    """
    Edge-constraint condition (``unconstrained``, ``thresholding``,
    ``regularization``, ``ground_truth``) or ``baseline`` for the VAE-only
    comparison variants.
    """

    variant = Column(String)
    delta = Column(Float, nullable=True)
    seed = Column(Integer)

    status = Column(String, index=True)
    """
    ``running``, ``completed``, ``failed`` or ``skipped`` (complete before this
    invocation of the plan).
    """

    error = Column(Text, nullable=True)
    started_at = Column(DateTime(timezone=True), nullable=True)
    finished_at = Column(DateTime(timezone=True), nullable=True)
    accuracy = Column(Float, nullable=True)
    mic_score = Column(Float, nullable=True)


class MetricRecord(Base):
    """
    Database model holding one scalar metric of a run.

    Each row is a name/value pair linked to its ``RunRecord`` through
    ``run_id``; the plan runner stores accuracy, MIC, the edge counts and the
    reconstruction errors here so that runs can be queried without opening
    their directories.

    Example:
        session.query(MetricRecord).filter(MetricRecord.metric_name == "edges_fp").all()
    """

    __tablename__ = "run_metrics"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, index=True)
    metric_name = Column(String)
    metric_value = Column(Float)
