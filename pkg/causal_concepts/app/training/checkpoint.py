"""Run checkpoints: ``checkpoints/epoch_K/state.pt`` plus a JSON manifest."""

import hashlib
import json
import logging
import re
from pathlib import Path

import torch

from app.errors import ConfigurationError

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoints"
STATE_FILE = "state.pt"
MANIFEST_FILE = "manifest.json"
_EPOCH_DIR = re.compile(r"^epoch_(\d+)$")


def parameter_hash(model):
    """SHA-256 over every state-dict tensor, in key order, as raw bytes."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(run_dir, state):
    """
    Write the full RunState after ``state.epoch`` completed epochs.

    Model, optimizer, scheduler and generator states are stored together so
    that a resumed run draws the same noise and takes the same steps as one
    that never stopped.
    """
    target = Path(run_dir) / CHECKPOINT_DIR / f"epoch_{state.epoch}"
    target.mkdir(parents=True, exist_ok=True)
    payload = {
        "epoch": state.epoch,
        "step": state.step,
        "aborted": state.aborted,
        "model": state.model.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "scheduler": state.scheduler.state_dict(),
        "generator": state.generator.get_state(),
    }
    torch.save(payload, target / STATE_FILE)
    manifest = {"epoch": state.epoch, "step": state.step, "parameter_sha256": parameter_hash(state.model)}
    (target / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.info("checkpoint saved: %s", target)
    return target


def latest_checkpoint(run_dir):
    """Directory of the highest-epoch complete checkpoint, or ``None``."""
    root = Path(run_dir) / CHECKPOINT_DIR
    if not root.is_dir():
        return None
    found = []
    for child in root.iterdir():
        match = _EPOCH_DIR.match(child.name)
        if match and (child / MANIFEST_FILE).exists() and (child / STATE_FILE).exists():
            found.append((int(match.group(1)), child))
    return max(found)[1] if found else None


def load_checkpoint(path, state):
    """Restore ``state`` in place from a checkpoint directory and return it."""
    path = Path(path)
    if not (path / STATE_FILE).exists():
        raise ConfigurationError(f"no checkpoint at {path}")
    payload = torch.load(path / STATE_FILE, map_location="cpu", weights_only=True)
    state.model.load_state_dict(payload["model"])
    state.optimizer.load_state_dict(payload["optimizer"])
    state.scheduler.load_state_dict(payload["scheduler"])
    state.generator.set_state(payload["generator"])
    state.epoch = payload["epoch"]
    state.step = payload["step"]
    state.aborted = payload["aborted"]
    logger.info("resumed from %s (epoch %d, step %d)", path, state.epoch, state.step)
    return state
