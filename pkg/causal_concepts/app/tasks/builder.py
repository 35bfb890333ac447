import logging
from dataclasses import dataclass

import numpy as np

from app.errors import TaskTooSmall
from app.tasks.criteria import TaskSpec, label_array

logger = logging.getLogger(__name__)

MIN_TRAIN_POSITIVES = 64


@dataclass(frozen=True)
class TaskDataset:
    """Indices into a corpus together with their binary task labels."""

    task: TaskSpec
    indices: np.ndarray
    labels: np.ndarray

    @property
    def positive_fraction(self):
        return float(self.labels.mean()) if len(self.labels) else 0.0

    def __len__(self):
        return len(self.indices)


def _balance(indices, labels, rng):
    """
    Subsample the majority class down to the size of the minority class.

    Args:
        indices (np.ndarray): Corpus indices of one split.
        labels (np.ndarray): Binary labels aligned with ``indices``.
        rng (np.random.Generator): Source of the subsampling draws.

    Returns:
        np.ndarray: Sorted indices holding equally many positives and negatives.
    """
    positives = indices[labels == 1]
    negatives = indices[labels == 0]
    keep = min(len(positives), len(negatives))
    if len(positives) > keep:
        positives = rng.choice(positives, size=keep, replace=False)
    if len(negatives) > keep:
        negatives = rng.choice(negatives, size=keep, replace=False)
    return np.sort(np.concatenate([positives, negatives]))


def build_task_dataset(task, corpus, split, seed=0, min_positives=MIN_TRAIN_POSITIVES):
    """
    Build the balanced train and test sets of a binary task.

    Labels are computed for every sample of the corpus; inside each split the
    majority class is then subsampled uniformly at random (seeded) down to the
    size of the minority class. Subsampling never changes a label.

    Args:
        task (TaskSpec): The task to build.
        corpus (Corpus): Rendered corpus the split indexes into.
        split (DatasetSplit): Corpus train/test split.
        seed (int): Seed of the balancing draws.
        min_positives (int): Minimum number of train positives.

    Returns:
        tuple[TaskDataset, TaskDataset]: Train and test task datasets.

    Raises:
        TaskTooSmall: If the train split holds fewer than ``min_positives`` positives.
    """
    labels = label_array(task, corpus.space, corpus.u, corpus.factor_indices)
    train_positives = int(labels[split.train_indices].sum())
    if train_positives < min_positives:
        raise TaskTooSmall(task.name, train_positives, min_positives)

    rng = np.random.default_rng(seed)
    built = []
    for indices in (split.train_indices, split.test_indices):
        chosen = _balance(indices, labels[indices], rng)
        built.append(TaskDataset(task=task, indices=chosen, labels=labels[chosen].astype(np.float32)))
    train, test = built
    logger.info(
        "task '%s': %d train / %d test samples, positive fraction %.3f",
        task.name, len(train), len(test), train.positive_fraction,
    )
    return train, test
