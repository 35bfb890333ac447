import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Settings:
    """
    Centralized configuration for process-wide settings loaded from environment variables.

    This class is the single source of truth for values that depend on where the
    package runs rather than on what an experiment does: output locations, the
    run-registry database, logging and the torch thread pool. Values are read
    from the environment (optionally populated from a ``.env`` file by
    python-dotenv) when the module is imported. Experiment hyperparameters do not
    live here; they belong to ``TrainConfig`` and ``ExperimentPlan``.

    Example:
        # Where runs are written
        root = Settings.RUNS_DIR

        # Registry database used by run_plan
        url = Settings.DATABASE_URL
    """

    RUNS_DIR = Path(os.getenv("CAUSAL_RUNS_DIR", "runs"))
    """
    Output root for run directories, plan outputs and the default registry file.

    Relative paths are resolved against the working directory of the process.
    """

    DATA_DIR = Path(os.getenv("CAUSAL_DATA_DIR", "data"))
    """
    Default location for generated corpora when a command is not given ``--data``.
    """

    DATABASE_URL = os.getenv("DATABASE_URL", f"sqlite:///{RUNS_DIR / 'registry.db'}")
    """
    SQLAlchemy URL of the run registry.

    Defaults to a SQLite file inside ``RUNS_DIR``. Any SQLAlchemy-supported URL
    works; the registry only indexes runs, so losing it never loses results.
    """

    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    """
    Root log level name (``DEBUG``, ``INFO``, ``WARNING``...).
    """

    LOG_FORMAT = os.getenv("LOG_FORMAT", "text")
    """
    ``text`` for human-readable lines, ``json`` for one JSON object per line.
    """

    TORCH_NUM_THREADS = int(os.getenv("TORCH_NUM_THREADS", "0")) or None
    """
    Intra-op thread count for torch. Unset keeps the torch default; fixing it
    makes checkpoint hashes comparable across machines with different core counts.
    """


settings = Settings()
"""
Global instance of the Settings class shared by every module of the package.
"""
