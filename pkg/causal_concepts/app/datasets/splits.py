from dataclasses import dataclass

import numpy as np

from app.errors import ConfigurationError


@dataclass(frozen=True)
class DatasetSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    stratify_on: tuple[str, ...]
    ratio: float


def stratified_split(space, stratify_on, ratio=0.7, seed=0):
    """
    Split a corpus into train and test indices, balanced per stratification factor.

    Samples are grouped into cells by the joint value of the ``stratify_on``
    factors. Cells are visited in a seeded random order and each one receives
    the number of train samples that keeps the running total at
    ``round(ratio * samples_seen)``, so every cell is within one sample of its
    exact share and the per-value shares of every listed factor stay within a
    fraction of a percentage point of ``ratio``.

    Args:
        space (FactorSpace): Space whose full corpus is being split.
        stratify_on (list[str]): Factor names to balance.
        ratio (float): Train fraction, strictly between 0 and 1.
        seed (int): Seed of the shuffles.

    Returns:
        DatasetSplit: Sorted, disjoint train and test indices covering the corpus.

    Raises:
        ConfigurationError: If ``ratio`` is outside (0, 1) or a factor name is unknown.

    Example:
        split = stratified_split(space, ["shape", "posX", "posY"], 0.7, seed=3)
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"split ratio must lie in (0, 1), got {ratio}")
    columns = [space.index_of(name) for name in stratify_on]

    indices = space.all_indices()
    rng = np.random.default_rng(seed)
    if columns:
        _, cell_of = np.unique(indices[:, columns], axis=0, return_inverse=True)
        cell_of = cell_of.reshape(-1)
    else:
        cell_of = np.zeros(len(indices), dtype=np.int64)

    cells = [np.flatnonzero(cell_of == c) for c in range(cell_of.max() + 1)]
    train, seen, taken = [], 0, 0
    for c in rng.permutation(len(cells)):
        members = rng.permutation(cells[c])
        seen += len(members)
        quota = int(round(ratio * seen)) - taken
        train.append(members[:quota])
        taken += quota

    train_indices = np.sort(np.concatenate(train))
    test_indices = np.setdiff1d(np.arange(len(indices)), train_indices)
    return DatasetSplit(train_indices, test_indices, tuple(stratify_on), ratio)


def train_share_by_value(space, split, factor_name):
    """Fraction of each value of ``factor_name`` that landed in the train split."""
    column = space.all_indices()[:, space.index_of(factor_name)]
    in_train = np.zeros(len(column), dtype=bool)
    in_train[split.train_indices] = True
    return {int(v): float(in_train[column == v].mean()) for v in np.unique(column)}
