"""Reverse inference of task-relevant factors from the trained W and A."""

import logging

import numpy as np
from pydantic import BaseModel

from app.errors import ContractError
from app.tasks.criteria import TaskSpec

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12


class EdgeReport(BaseModel):
    """
    Outcome of edge inference for one task.

    Attributes:
        task (TaskSpec): The task whose relevant factors are being recovered.
        chosen_concept (int): Index of the concept with the largest ``|W_i|``.
        inferred_factors (list[str]): Top-k factors of the chosen column plus
            every factor flagged by the margin rule, sorted by name.
        true_factors (list[str]): Relevant factors of the task, sorted by name.
        margin_flagged (list[str]): Non-true factors added because their weight
            was within ``fp_margin`` of the k-th selected weight.
        edge_weights (dict[str, float]): Normalized ``|A|`` of the chosen column per factor.
        tie (bool): Whether entries tied at the k-th weight widened the selection.
    """

    task: TaskSpec
    chosen_concept: int
    inferred_factors: list[str]
    true_factors: list[str]
    margin_flagged: list[str]
    edge_weights: dict[str, float]
    tie: bool
    tp: int
    fp: int
    fn: int


def infer_task_edges(W, A, task, factor_names, k="auto", fp_margin=0.2):
    """
    Infer which generative factors a trained model relies on for a task.

    The concept with the largest absolute predictor weight is taken as the
    task concept. Its column of ``|A|`` is normalized by its maximum and the
    top-k factors are selected, ``k`` defaulting to the number of relevant
    factors. Entries tied with the k-th weight are all selected. Any other
    factor whose weight lies within ``fp_margin`` of the k-th selected weight is
    also counted as inferred, so it shows up as a false positive when it is
    not relevant.

    Args:
        W (array-like): Predictor weights, length ``n``.
        A (array-like): Causal matrix, ``m x n``.
        task (TaskSpec): Task whose relevant factors are the ground truth.
        factor_names (list[str]): Names of the ``m`` factors, in row order of A.
        k (int | str): Number of factors to select, or ``"auto"``.
        fp_margin (float): Closeness to the k-th weight that flags a factor.

    Returns:
        EdgeReport: Selected factors and their tp/fp/fn counts.

    Raises:
        ContractError: If the shapes of W, A and ``factor_names`` disagree.

    Example:
        # column [0.9, 0.85, 0.05, 0.02, 0.01, 0.01] over
        # (shape, posX, color, scale, orientation, posY)
        report = infer_task_edges([1.0], column[:, None], task, names)
        report.inferred_factors   # ["posX", "shape"]
    """
    W = np.asarray(W, dtype=np.float64).reshape(-1)
    A = np.asarray(A, dtype=np.float64)
    names = list(factor_names)
    if A.ndim != 2 or A.shape != (len(names), W.size):
        raise ContractError(f"A must be {len(names)} x {W.size}, got {A.shape}")
    true = set(task.relevant_factors)
    unknown = true - set(names)
    if unknown:
        raise ContractError(f"task factors {sorted(unknown)} are not among {names}")
    k = len(true) if k == "auto" else int(k)
    if not 1 <= k <= len(names):
        raise ContractError(f"k must lie in [1, {len(names)}], got {k}")

    chosen = int(np.argmax(np.abs(W)))
    column = np.abs(A[:, chosen])
    peak = column.max()
    weights = column / peak if peak > 0 else np.zeros_like(column)

    kth = np.sort(weights)[::-1][k - 1]
    selected = {names[i] for i in range(len(names)) if weights[i] >= kth - TIE_TOLERANCE}
    tie = len(selected) > k
    if tie:
        logger.info("tie at the k-th edge weight for '%s': %d factors selected", task.name, len(selected))
    flagged = {
        names[i]
        for i in range(len(names))
        if names[i] not in selected and names[i] not in true and kth - weights[i] < fp_margin
    }
    inferred = selected | flagged

    return EdgeReport(
        task=task,
        chosen_concept=chosen,
        inferred_factors=sorted(inferred),
        true_factors=sorted(true),
        margin_flagged=sorted(flagged),
        edge_weights={name: float(w) for name, w in zip(names, weights)},
        tie=tie,
        tp=len(inferred & true),
        fp=len(inferred - true),
        fn=len(true - inferred),
    )


class TableThreeRow(BaseModel):
    """Edge-inference rates of one condition; a rate is ``None`` when no task of that kind ran."""

    condition: str
    gf2_rate: float | None
    gf3_rate: float | None
    fp_rate: float | None
    fn_rate: float | None
    n_runs: int
    coverage: float | None = None
    missing_tasks: list[str] = []


def _mean(values):
    return float(np.mean(values)) if values else None


def table3_metrics(reports, condition, m, expected_tasks=None):
    """
    Aggregate EdgeReports of one condition into a table row.

    ``gf2_rate``/``gf3_rate`` average the recovered fraction ``tp / |true|`` over
    two-factor and three-factor tasks. ``fp_rate`` averages ``fp / (m - |true|)``
    and ``fn_rate`` averages ``fn / |true|`` over all reports.

    Args:
        reports (list[EdgeReport]): One report per trained task.
        condition (str): Condition label of the row.
        m (int): Number of generative factors.
        expected_tasks (list[str] | None): Task names that should be present;
            missing ones are listed and reflected in ``coverage``.
    """
    recovered = {2: [], 3: []}
    fp_rates, fn_rates = [], []
    for report in reports:
        n_true = len(report.true_factors)
        recovered.setdefault(n_true, []).append(report.tp / n_true)
        irrelevant = m - n_true
        fp_rates.append(report.fp / irrelevant if irrelevant else 0.0)
        fn_rates.append(report.fn / n_true)

    row = TableThreeRow(
        condition=condition,
        gf2_rate=_mean(recovered[2]),
        gf3_rate=_mean(recovered[3]),
        fp_rate=_mean(fp_rates),
        fn_rate=_mean(fn_rates),
        n_runs=len(reports),
    )
    if expected_tasks is not None:
        present = {r.task.name for r in reports}
        row.missing_tasks = sorted(set(expected_tasks) - present)
        row.coverage = len(present & set(expected_tasks)) / len(expected_tasks) if expected_tasks else None
        if row.missing_tasks:
            logger.warning("condition '%s' is missing runs for %s", condition, row.missing_tasks)
    return row
