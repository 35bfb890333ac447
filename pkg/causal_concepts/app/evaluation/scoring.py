import numpy as np
import torch
from sklearn import metrics

from app.errors import ContractError

EVAL_BATCH = 512


def accuracy_score(probabilities, labels, threshold=0.5):
    """
    Fraction of samples whose thresholded probability equals the binary label.

    Args:
        probabilities (array-like): Predicted probabilities of the positive class.
        labels (array-like): Binary labels, one per probability.
        threshold (float): Probabilities at or above it count as positive.

    Returns:
        float: Accuracy in [0, 1].

    Raises:
        ContractError: When the shapes differ or the set is empty.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if probabilities.shape != labels.shape:
        raise ContractError(f"{probabilities.size} probabilities for {labels.size} labels")
    if labels.size == 0:
        raise ContractError("accuracy of an empty set is undefined")
    predicted = (probabilities >= threshold).astype(labels.dtype)
    return float(metrics.accuracy_score(labels, predicted))


def batched(images, u, batch_size=EVAL_BATCH):
    """Yield ``(images, u)`` float32 tensor pairs in order, ``batch_size`` rows at a time."""
    for start in range(0, len(images), batch_size):
        stop = start + batch_size
        yield (
            torch.from_numpy(np.asarray(images[start:stop], dtype=np.float32)),
            torch.from_numpy(np.asarray(u[start:stop], dtype=np.float32)),
        )


def encode_latents(model, images, u, batch_size=EVAL_BATCH):
    """Posterior-mean latents of a set of images as an ``N x z_dim`` numpy array."""
    model.eval()
    parts = [model.encode_mean(x, v).numpy() for x, v in batched(images, u, batch_size)]
    return np.concatenate(parts)


def task_accuracy(model, images, u, labels, batch_size=EVAL_BATCH):
    """
    Accuracy of a trained model on a task test set at threshold 0.5.

    Args:
        model (CausalConceptModel): Trained model; evaluated in eval mode with
            posterior-mean latents and the concept noise switched off.
        images (np.ndarray): ``N x H x W x C`` test images.
        u (np.ndarray): ``N x m`` normalized labels of the same samples.
        labels (np.ndarray): Binary task labels.
    """
    model.eval()
    probabilities = np.concatenate(
        [model.predict_proba(x, v).numpy() for x, v in batched(images, u, batch_size)]
    )
    return accuracy_score(probabilities, labels)
