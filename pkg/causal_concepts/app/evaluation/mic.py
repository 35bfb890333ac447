"""Maximal information coefficient.

Grid search follows the usual approximation: one axis is equipartitioned into
``rows`` bins, the other axis is grouped into clumps (runs of consecutive
points that fall in the same row) and a dynamic program picks the best
``cols``-column partition on the clump boundaries. Every admissible grid with
``rows * cols <= n ** max_grid_exponent`` is scored as
``I(X; Y) / log2(min(rows, cols))`` and the maximum is returned.

Inputs are reduced to dense ranks first, so the score depends only on the
ordering of each variable. Both axis orientations and both directions of
each axis are searched, which makes the result exactly symmetric and exactly
invariant under strictly monotone transforms of either variable.
"""

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from app.errors import ContractError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 20
_INVALID = -1.0


class MicConfig(BaseModel):
    max_grid_exponent: float = Field(default=0.6, gt=0.0, lt=1.0)
    min_bins: int = Field(default=2, ge=2)
    clumps_factor: int = Field(default=5, ge=1)


@numba.njit(cache=True)
def _equipartition(keys, target):
    # keys are sorted; equal keys always share a bin
    n = keys.shape[0]
    bins = np.empty(n, dtype=np.int64)
    current = 0
    size = 0
    desired = n / target
    i = 0
    while i < n:
        j = i + 1
        while j < n and keys[j] == keys[i]:
            j += 1
        group = j - i
        if size != 0 and current < target - 1 and abs(size + group - desired) >= abs(size - desired):
            current += 1
            size = 0
            desired = (n - i) / (target - current)
        for t in range(i, j):
            bins[t] = current
        size += group
        i = j
    return bins, current + 1


@numba.njit(cache=True)
def _column_cost(cum, s, t, n_rows, n):
    column = 0
    for r in range(n_rows):
        column += cum[t, r] - cum[s, r]
    cost = 0.0
    if column == 0:
        return cost
    for r in range(n_rows):
        count = cum[t, r] - cum[s, r]
        if count > 0:
            cost -= count * math.log2(count / column)
    return cost / n


@numba.njit(cache=True)
def _optimize_columns(x_rank, y_rank, rows_target, max_cols, clumps_factor):
    n = x_rank.shape[0]
    order_y = np.argsort(y_rank, kind="mergesort")
    sorted_rows, n_rows = _equipartition(y_rank[order_y], rows_target)
    row = np.empty(n, dtype=np.int64)
    for i in range(n):
        row[order_y[i]] = sorted_rows[i]

    counts = np.zeros(n_rows)
    for i in range(n):
        counts[row[i]] += 1.0
    h_rows = 0.0
    for r in range(n_rows):
        p = counts[r] / n
        if p > 0.0:
            h_rows -= p * math.log2(p)

    # clumps along x; a tie group spanning several rows is a clump of its own
    order_x = np.argsort(x_rank, kind="mergesort")
    clump = np.empty(n, dtype=np.int64)
    clump_id = -1
    previous = -2
    i = 0
    while i < n:
        first_row = row[order_x[i]]
        mixed = False
        j = i + 1
        while j < n and x_rank[order_x[j]] == x_rank[order_x[i]]:
            if row[order_x[j]] != first_row:
                mixed = True
            j += 1
        group_row = -1 if mixed else first_row
        if group_row == -1 or group_row != previous:
            clump_id += 1
        for t in range(i, j):
            clump[t] = clump_id
        previous = group_row
        i = j
    n_clumps = clump_id + 1
    limit = clumps_factor * max_cols
    if n_clumps > limit:
        clump, n_clumps = _equipartition(clump, limit)

    cum = np.zeros((n_clumps + 1, n_rows), dtype=np.int64)
    for i in range(n):
        cum[clump[i] + 1, row[order_x[i]]] += 1
    for c in range(n_clumps):
        for r in range(n_rows):
            cum[c + 1, r] += cum[c, r]

    cost = np.zeros((n_clumps + 1, n_clumps + 1))
    for s in range(n_clumps):
        for t in range(s + 1, n_clumps + 1):
            cost[s, t] = _column_cost(cum, s, t, n_rows, n)

    best = np.full((n_clumps + 1, max_cols + 1), np.inf)
    best[0, 0] = 0.0
    for cols in range(1, max_cols + 1):
        for t in range(cols, n_clumps + 1):
            value = np.inf
            for s in range(cols - 1, t):
                candidate = best[s, cols - 1] + cost[s, t]
                if candidate < value:
                    value = candidate
            best[t, cols] = value

    mi = np.full(max_cols + 1, _INVALID)
    for cols in range(2, min(max_cols, n_clumps) + 1):
        mi[cols] = h_rows - best[n_clumps, cols]
    return mi


@numba.njit(cache=True)
def _best_normalized(x_rank, y_rank, budget, clumps_factor, min_bins):
    best = 0.0
    rows = min_bins
    while rows * min_bins <= budget:
        max_cols = budget // rows
        mi = _optimize_columns(x_rank, y_rank, rows, max_cols, clumps_factor)
        for cols in range(min_bins, max_cols + 1):
            if mi[cols] > _INVALID / 2:
                score = mi[cols] / math.log2(min(cols, rows))
                if score > best:
                    best = score
        rows += 1
    return best


def _as_samples(values, name):
    array = np.asarray(values, dtype=np.float64).ravel()
    if not np.isfinite(array).all():
        raise ContractError(f"{name} contains non-finite values")
    return array


def mic(x, y, config=None):
    """
    Maximal information coefficient of two equally long samples.

    Args:
        x (array-like): First variable, at least 20 samples.
        y (array-like): Second variable, same length as ``x``.
        config (MicConfig | None): Grid budget settings.

    Returns:
        float: Score in [0, 1]; 0 by convention when either input is constant.

    Raises:
        ContractError: On unequal lengths, fewer than 20 samples or non-finite values.

    Example:
        x = np.random.default_rng(0).uniform(size=1000)
        mic(x, x)                       # 1.0
        mic(x, np.sin(4 * np.pi * x))   # close to 1.0
    """
    config = config or MicConfig()
    x = _as_samples(x, "x")
    y = _as_samples(y, "y")
    if x.shape != y.shape:
        raise ContractError(f"mic needs equally long samples, got {x.size} and {y.size}")
    n = x.size
    if n < MIN_SAMPLES:
        raise ContractError(f"mic needs at least {MIN_SAMPLES} samples, got {n}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        logger.info("mic of a constant input is 0")
        return 0.0

    rank_x = rankdata(x, method="dense").astype(np.int64)
    rank_y = rankdata(y, method="dense").astype(np.int64)
    budget = max(int(n ** config.max_grid_exponent), config.min_bins * config.min_bins)
    best = 0.0
    for sign_x in (1, -1):
        for sign_y in (1, -1):
            a, b = sign_x * rank_x, sign_y * rank_y
            best = max(
                best,
                _best_normalized(a, b, budget, config.clumps_factor, config.min_bins),
                _best_normalized(b, a, budget, config.clumps_factor, config.min_bins),
            )
    return float(min(1.0, max(0.0, best)))


def mic_matrix(latents, labels, config=None):
    """``m x d`` matrix of ``mic(labels[:, i], latents[:, j])``."""
    config = config or MicConfig()
    matrix = np.zeros((labels.shape[1], latents.shape[1]))
    for i in range(labels.shape[1]):
        for j in range(latents.shape[1]):
            matrix[i, j] = mic(labels[:, i], latents[:, j], config)
    return matrix


@dataclass
class MicAssignment:
    """Factor-to-latent matching behind a MIC score."""

    matrix: np.ndarray
    factors: list
    pairs: list
    score: float

    def as_dict(self):
        return {
            "score": self.score,
            "pairs": [{"factor": f, "latent": int(j), "mic": float(v)} for f, j, v in self.pairs],
        }


def mic_assignment(latents, labels, factor_names=None, config=None):
    """
    Match factors to latent dimensions by optimal bipartite assignment on MIC.

    Factors that are constant over the samples carry no information and are
    excluded before matching.

    Raises:
        ContractError: On mismatched or empty inputs, or when every factor is constant.
    """
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if latents.ndim != 2 or labels.ndim != 2:
        raise ContractError("mic_score expects two 2-D arrays")
    if latents.shape[0] != labels.shape[0]:
        raise ContractError(f"sample counts differ: {latents.shape[0]} latents vs {labels.shape[0]} labels")
    if latents.shape[1] == 0 or labels.shape[1] == 0:
        raise ContractError("mic_score needs at least one latent and one factor")
    names = list(factor_names) if factor_names is not None else [f"factor_{i}" for i in range(labels.shape[1])]

    varying = np.ptp(labels, axis=0) > 0
    if not varying.all():
        logger.info("excluding constant factors from mic_score: %s", [n for n, v in zip(names, varying) if not v])
    if not varying.any():
        raise ContractError("every factor is constant over the evaluated samples")
    kept = [n for n, v in zip(names, varying) if v]

    matrix = mic_matrix(latents, labels[:, varying], config)
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    pairs = [(kept[i], int(j), float(matrix[i, j])) for i, j in zip(rows, cols)]
    return MicAssignment(matrix=matrix, factors=kept, pairs=pairs, score=float(matrix[rows, cols].mean()))


def mic_score(latents, labels, config=None):
    """Mean matched MIC between factors and latent dimensions; see ``mic_assignment``."""
    return mic_assignment(latents, labels, config=config).score
