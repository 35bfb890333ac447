"""Metrics bundle and figures written at the end of every run."""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from app.evaluation.edges import infer_task_edges
from app.evaluation.figures import write_gallery, write_heatmaps
from app.evaluation.mic import mic_assignment
from app.evaluation.scoring import batched, encode_latents, task_accuracy

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"
LOSS_FIELDS = ("recon", "kl_eps", "kl_zc", "l_u", "l_clf", "l_diversity", "total")
RECON_SAMPLES = 256
GALLERY_SAMPLES = 8


def spread_subset(indices, size, seed):
    """Seeded sorted subset of at most ``size`` indices, spread over the whole corpus order."""
    if len(indices) <= size:
        return indices
    chosen = np.random.default_rng(seed).choice(len(indices), size=size, replace=False)
    return indices[np.sort(chosen)]


def loss_curves(log_path):
    """Per-epoch means of every LossBreakdown field from a ``train_log.jsonl`` file."""
    log_path = Path(log_path)
    if not log_path.exists() or not log_path.read_text().strip():
        return {}
    frame = pd.read_json(log_path, lines=True)
    if "aborted" in frame.columns:
        frame = frame[frame["aborted"].isna()]
    means = frame.groupby("epoch")[list(LOSS_FIELDS)].mean()
    return {name: [float(v) for v in means[name]] for name in LOSS_FIELDS}


@torch.no_grad()
def reconstruction_errors(model, images, u, baseline_images):
    """
    Mean squared reconstruction error per pixel, and that of the mean-image baseline.

    Reconstructions decode the posterior-mean latents without decoder noise;
    the baseline predicts the mean of ``baseline_images`` for every sample.
    """
    model.eval()
    errors = []
    for x, v in batched(images, u):
        x_hat = model.vae.decode(model.encode_mean(x, v), sample=False)
        errors.append(((x_hat - x) ** 2).flatten(1).mean(dim=1).numpy())
    recon_mse = float(np.concatenate(errors).mean())
    mean_image = np.asarray(baseline_images, dtype=np.float64).mean(axis=0)
    baseline_mse = float(((np.asarray(images, dtype=np.float64) - mean_image) ** 2).mean())
    return recon_mse, baseline_mse


@torch.no_grad()
def _gallery(model, images, u, path):
    model.eval()
    x = torch.from_numpy(np.asarray(images, dtype=np.float32))
    v = torch.from_numpy(np.asarray(u, dtype=np.float32))
    x_hat = model.vae.decode(model.encode_mean(x, v), sample=False)
    write_gallery(x.numpy(), x_hat.numpy(), path)


def compute_run_metrics(model, config, corpus, data, log_path=None):
    """
    Evaluate a trained model on its task's test set.

    Returns:
        dict: ``accuracy``, ``train_accuracy``, ``mic_score`` with the matched
        factor-latent pairs, the ``edges`` report, ``recon_mse``,
        ``baseline_mse``, per-epoch ``loss_curves`` and run descriptors. No
        timestamps, so identical runs give identical bundles.
    """
    space = corpus.space
    test_idx, train_idx = data.test.indices, data.train.indices
    test_images, test_u = corpus.images[test_idx], corpus.u[test_idx]

    accuracy = task_accuracy(model, test_images, test_u, data.test.labels)
    train_accuracy = task_accuracy(model, corpus.images[train_idx], corpus.u[train_idx], data.train.labels)

    mic_idx = spread_subset(test_idx, config.mic_samples, config.seed)
    latents = encode_latents(model, corpus.images[mic_idx], corpus.u[mic_idx])
    assignment = mic_assignment(latents, corpus.u[mic_idx], factor_names=space.names)

    W = model.predictor.W.detach().numpy()
    A = model.scm.A.detach().numpy()
    edges = infer_task_edges(W, A, data.task, space.names, fp_margin=config.fp_margin)

    recon_idx = spread_subset(test_idx, RECON_SAMPLES, config.seed)
    recon_mse, baseline_mse = reconstruction_errors(
        model, corpus.images[recon_idx], corpus.u[recon_idx], corpus.images[spread_subset(train_idx, 1024, config.seed)]
    )
    metrics = {
        "dataset": config.dataset,
        "task": data.task.name,
        "n_factors": data.task.n_factors,
        "variant": config.variant.value,
        "seed": config.seed,
        "delta": config.weights.delta,
        "gamma": config.weights.gamma,
        "clip_enabled": config.clip_enabled,
        "a_init": config.a_init,
        "m": space.m,
        "n_train": len(data.train),
        "n_test": len(data.test),
        "accuracy": accuracy,
        "train_accuracy": train_accuracy,
        "mic_score": assignment.score,
        "mic_pairs": assignment.as_dict()["pairs"],
        "edges": edges.model_dump(mode="json"),
        "recon_mse": recon_mse,
        "baseline_mse": baseline_mse,
        "loss_curves": loss_curves(log_path) if log_path else {},
    }
    return metrics


def write_run_artifacts(model, config, corpus, data, out_dir):
    """Write ``metrics.json``, ``heatmaps/`` and ``gallery.png`` into a run directory."""
    out_dir = Path(out_dir)
    metrics = compute_run_metrics(model, config, corpus, data, out_dir / "train_log.jsonl")
    write_heatmaps(
        model.predictor.W.detach().numpy(), model.scm.A.detach().numpy(), corpus.space.names, out_dir / "heatmaps"
    )
    shown = spread_subset(data.test.indices, GALLERY_SAMPLES, config.seed)
    _gallery(model, corpus.images[shown], corpus.u[shown], out_dir / "gallery.png")
    (out_dir / METRICS_FILE).write_text(json.dumps(metrics, indent=2, sort_keys=True))
    logger.info(
        "run metrics: accuracy %.3f, mic %.3f, edges tp=%d fp=%d fn=%d",
        metrics["accuracy"], metrics["mic_score"], metrics["edges"]["tp"],
        metrics["edges"]["fp"], metrics["edges"]["fn"],
    )
    return metrics
