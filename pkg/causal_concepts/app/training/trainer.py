"""End-to-end optimisation: schedule, freeze window, clipping, checkpoints and the run directory."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR

from app.config.settings import settings
from app.datasets.splits import stratified_split
from app.errors import ConfigurationError, NumericalError, TrainingFailure
from app.evaluation.run_metrics import write_run_artifacts
from app.losses.objectives import (
    alignment_loss,
    classification_loss,
    diversity_loss,
    elbo_terms,
    supervision_loss,
    total_loss,
)
from app.tasks.builder import build_task_dataset
from app.tasks.catalog import find_task
from app.training.checkpoint import latest_checkpoint, load_checkpoint, save_checkpoint
from app.training.config import TrainConfig, effective_weights, scm_trainable
from app.training.model import build_model

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_ABORTS = 3
CONFIG_FILE = "config.json"
LOG_FILE = "train_log.jsonl"


@dataclass
class Batch:
    images: torch.Tensor
    u: torch.Tensor
    labels: torch.Tensor


@dataclass
class TaskData:
    """Split and balanced task datasets of one run."""

    task: object
    split: object
    train: object
    test: object


@dataclass
class RunState:
    """
    Mutable training state of one run.

    Attributes:
        config (TrainConfig): Run configuration.
        model (CausalConceptModel): VAE, causal layer and predictor.
        optimizer (torch.optim.Adam): Optimizer over every model parameter.
        scheduler (LambdaLR): Linear learning-rate warmup.
        generator (torch.Generator): Source of every training-time noise draw.
        epoch (int): Completed epochs, or the running epoch inside ``fit``.
        step (int): Completed optimizer steps.
        aborted (int): Consecutive aborted steps.
        history (list[dict]): Log rows of the running epoch.
    """

    config: TrainConfig
    model: torch.nn.Module
    optimizer: torch.optim.Optimizer
    scheduler: LambdaLR
    generator: torch.Generator
    epoch: int = 0
    step: int = 0
    aborted: int = 0
    history: list = field(default_factory=list)


def steps_per_epoch(n_train, batch_size):
    return math.ceil(n_train / batch_size)


def prepare_task_data(config, corpus, task=None):
    """Resolve the task, split the corpus and build the balanced train/test sets."""
    task = task or find_task(config.dataset, config.task)
    if corpus.space.dataset_name != config.dataset:
        raise ConfigurationError(
            f"corpus holds '{corpus.space.dataset_name}' samples but the run is configured for '{config.dataset}'"
        )
    stratify_on = config.stratify_on or sorted(task.relevant_factors)
    split = stratified_split(corpus.space, stratify_on, config.split_ratio, seed=config.seed)
    train, test = build_task_dataset(task, corpus, split, seed=config.seed, min_positives=config.min_positives)
    return TaskData(task=task, split=split, train=train, test=test)


def build_run_state(config, space, task, n_train):
    """Fresh RunState: model, Adam, warmup schedule over ``warmup_fraction`` of all steps, seeded generator."""
    model = build_model(config, space, task)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    total_steps = config.epochs * steps_per_epoch(n_train, config.batch_size)
    warmup = max(1, round(config.warmup_fraction * total_steps)) if config.warmup_fraction > 0 else 0

    def warmup_factor(step):
        return min(1.0, (step + 1) / warmup) if warmup else 1.0

    scheduler = LambdaLR(optimizer, warmup_factor)
    generator = torch.Generator().manual_seed(config.seed)
    return RunState(config=config, model=model, optimizer=optimizer, scheduler=scheduler, generator=generator)


def make_batch(corpus, indices, labels):
    return Batch(
        images=torch.from_numpy(np.asarray(corpus.images[indices], dtype=np.float32)),
        u=torch.from_numpy(np.asarray(corpus.u[indices], dtype=np.float32)),
        labels=torch.from_numpy(np.asarray(labels, dtype=np.float32)),
    )


def epoch_batches(corpus, train_set, config, epoch):
    """Shuffled batches of one epoch; the order depends only on ``(seed, epoch)``."""
    order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
    for start in range(0, len(order), config.batch_size):
        chosen = order[start : start + config.batch_size]
        yield make_batch(corpus, train_set.indices[chosen], train_set.labels[chosen])


def compute_objective(model, batch, config, weights, generator=None):
    """
    Loss breakdown of one batch under the run's variant.

    ``ours`` evaluates every term; ``sup_*`` put the latent-to-label alignment
    in the ``l_u`` slot; the unsupervised variants report zeros for the three
    causal-layer terms.
    """
    vae = model.vae
    variant = config.variant
    z, stats = vae.encode(batch.images, batch.u, generator=generator, sample=True)
    x_hat = vae.decode(z, generator=generator, sample=True)
    prior_mu, prior_logvar = vae.prior(batch.u, z.shape[0])
    terms = elbo_terms(stats, prior_mu, prior_logvar, batch.images, x_hat)

    zero = z.new_zeros(())
    l_u, l_clf, l_diversity = zero, zero, zero
    if variant.trains_concepts:
        eps = vae.sample_eps(stats, generator)
        c, logits = model.concept_logits(z, eps)
        l_u = supervision_loss(model.scm.A, c, z[:, : model.m], batch.u, mode=config.inverse_mode)
        l_clf = classification_loss(torch.sigmoid(logits), batch.labels)
        l_diversity = diversity_loss(model.scm.A)
    elif variant.supervised_alignment:
        l_u = alignment_loss(stats.mu[:, : model.m], batch.u)
    return total_loss(terms, l_u, l_clf, l_diversity, weights)


def _check_gradients(model):
    for name, parameter in model.named_parameters():
        if parameter.grad is not None and not torch.isfinite(parameter.grad).all():
            raise NumericalError("gradient", name)


def train_step(state, batch, config):
    """
    One optimizer step on all parameters that may change this epoch.

    Inside the freeze window (and for variants without a causal objective)
    A, eta and W keep their gradients cleared, so Adam leaves them untouched.
    After a step that updated A, ``clip_A`` is applied when clipping is
    enabled. A non-finite loss or gradient aborts the step: parameters,
    optimizer and generator stay as they were and an event row is recorded.

    Raises:
        TrainingFailure: On the third consecutive aborted step.
    """
    model = state.model
    weights = effective_weights(config, state.epoch)
    snapshot = state.generator.get_state()
    model.train()
    state.optimizer.zero_grad(set_to_none=True)
    try:
        breakdown = compute_objective(model, batch, config, weights, state.generator)
        breakdown.total.backward()
        _check_gradients(model)
    except NumericalError as exc:
        state.generator.set_state(snapshot)
        state.optimizer.zero_grad(set_to_none=True)
        state.aborted += 1
        logger.warning(
            "training step aborted",
            extra={"epoch": state.epoch, "step": state.step, "term": exc.term, "consecutive": state.aborted},
        )
        state.history.append({"epoch": state.epoch, "step": state.step, "aborted": exc.term})
        if state.aborted >= MAX_CONSECUTIVE_ABORTS:
            raise TrainingFailure(f"{state.aborted} consecutive aborted steps, last: {exc}") from exc
        return state

    if not scm_trainable(config, state.epoch):
        for parameter in model.causal_parameters():
            parameter.grad = None
    if model.scm.a_frozen:
        model.scm.A.grad = None
    a_updated = model.scm.A.grad is not None

    state.optimizer.step()
    state.scheduler.step()
    if a_updated and config.clip_enabled:
        model.scm.project_()
    state.step += 1
    state.aborted = 0
    state.history.append(
        {
            "epoch": state.epoch,
            "step": state.step,
            **breakdown.as_dict(),
            "weights": weights.model_dump(),
        }
    )
    logger.debug("step %d loss %.4f", state.step, float(breakdown.total))
    return state


def _append_log(path, rows):
    with open(path, "a") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")


def _truncate_log(path, epoch):
    if not path.exists():
        return
    kept = [line for line in path.read_text().splitlines() if line and json.loads(line)["epoch"] < epoch]
    path.write_text("".join(line + "\n" for line in kept))


def _log_epoch(state):
    rows = [r for r in state.history if "aborted" not in r]
    if rows:
        mean_total = sum(r["total"] for r in rows) / len(rows)
        mean_clf = sum(r["l_clf"] for r in rows) / len(rows)
        logger.info("epoch %d: %d steps, loss %.4f, l_clf %.4f", state.epoch, len(rows), mean_total, mean_clf)


def fit(config, corpus, out_dir, task=None, resume=True):
    """
    Train one run and write its run directory.

    Layout of ``out_dir``:
        ``config.json``          the TrainConfig.
        ``checkpoints/epoch_K``  every ``checkpoint_every`` epochs and after the last one.
        ``train_log.jsonl``      one row per step (all LossBreakdown fields and the weights in force).
        ``metrics.json``         accuracy, MIC, edge report, reconstruction errors, loss curves.
        ``heatmaps/``            W and A as CSV, HTML and PNG.
        ``gallery.png``          test images above their reconstructions.

    With ``resume`` the latest checkpoint in ``out_dir`` is restored and log
    rows from epochs it does not cover are dropped before training continues.

    Args:
        config (TrainConfig): Run configuration.
        corpus (Corpus): Rendered corpus of ``config.dataset``.
        out_dir (str | Path): Run directory.
        task (TaskSpec | None): Task to train; looked up from ``config.task`` when omitted.
        resume (bool): Continue from the latest checkpoint if there is one.

    Returns:
        RunState: The trained state.

    Raises:
        TaskTooSmall: If the task has too few training positives.
        TrainingFailure: After three consecutive aborted steps.
    """
    torch.use_deterministic_algorithms(True, warn_only=True)
    if settings.TORCH_NUM_THREADS:
        torch.set_num_threads(settings.TORCH_NUM_THREADS)

    data = prepare_task_data(config, corpus, task)
    state = build_run_state(config, corpus.space, data.task, len(data.train))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_FILE).write_text(config.model_dump_json(indent=2))
    log_path = out_dir / LOG_FILE

    checkpoint = latest_checkpoint(out_dir) if resume else None
    if checkpoint is not None:
        load_checkpoint(checkpoint, state)
        _truncate_log(log_path, state.epoch)
    else:
        log_path.write_text("")

    logger.info(
        "training %s on '%s' (%s) for %d epochs from epoch %d",
        config.variant.value, data.task.name, config.dataset, config.epochs, state.epoch,
    )
    for epoch in range(state.epoch, config.epochs):
        state.epoch = epoch
        state.history = []
        for batch in epoch_batches(corpus, data.train, config, epoch):
            train_step(state, batch, config)
        _append_log(log_path, state.history)
        _log_epoch(state)
        state.epoch = epoch + 1
        if state.epoch % config.checkpoint_every == 0 or state.epoch == config.epochs:
            save_checkpoint(out_dir, state)

    write_run_artifacts(state.model, config, corpus, data, out_dir)
    return state


def restore_run(run_dir, corpus):
    """
    Rebuild a run's state from its ``config.json`` and latest checkpoint.

    Returns:
        tuple[RunState, TaskData]

    Raises:
        ConfigurationError: If the directory holds no config or no checkpoint.
    """
    run_dir = Path(run_dir)
    config_path = run_dir / CONFIG_FILE
    if not config_path.exists():
        raise ConfigurationError(f"{run_dir} is not a run directory (no {CONFIG_FILE})")
    config = TrainConfig.model_validate_json(config_path.read_text())
    data = prepare_task_data(config, corpus)
    state = build_run_state(config, corpus.space, data.task, len(data.train))
    checkpoint = latest_checkpoint(run_dir)
    if checkpoint is None:
        raise ConfigurationError(f"{run_dir} has no checkpoint")
    load_checkpoint(checkpoint, state)
    return state, data
