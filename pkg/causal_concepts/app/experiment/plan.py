from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config.loader import apply_overrides, load_config_file, parse_model
from app.config.settings import settings
from app.datasets.factors import DATASET_NAMES
from app.tasks.catalog import catalog, find_task
from app.tasks.criteria import TaskSpec
from app.training.config import TrainConfig
from app.vae.config import Variant

BASELINE = "baseline"


class Condition(str, Enum):
    """Constraint regime on the causal matrix, from none to a fixed ground truth."""

    UNCONSTRAINED = "unconstrained"
    THRESHOLDING = "thresholding"
    REGULARIZATION = "regularization"
    GROUND_TRUTH = "ground_truth"


CONDITION_OVERRIDES = {
    Condition.UNCONSTRAINED: {"clip_enabled": False, "weights.gamma": 0.0},
    Condition.THRESHOLDING: {"clip_enabled": True, "weights.gamma": 0.0},
    Condition.REGULARIZATION: {"clip_enabled": True},
    Condition.GROUND_TRUTH: {"clip_enabled": True, "a_init": "ground_truth"},
}


@dataclass
class RunSpec:
    """One run of a plan; ``key`` is its directory below ``<output_root>/runs``."""

    dataset: str
    task: TaskSpec
    condition: str
    variant: Variant
    delta: float | None
    seed: int

    @property
    def key(self):
        if self.condition == BASELINE:
            group = f"{BASELINE}__{self.variant.value}"
        else:
            delta = "default" if self.delta is None else f"{self.delta:g}"
            group = f"{self.condition}__{self.variant.value}__d{delta}"
        return f"{self.task.slug()}/{group}/seed_{self.seed}"

    def descriptor(self):
        return {
            "key": self.key,
            "dataset": self.dataset,
            "task": self.task.name,
            "task_slug": self.task.slug(),
            "n_factors": self.task.n_factors,
            "condition": self.condition,
            "variant": self.variant.value,
            "delta": self.delta,
            "seed": self.seed,
        }


class ExperimentPlan(BaseModel):
    """
    A sweep over tasks, constraint conditions, variants, delta values and seeds.

    The ``ours`` variant runs once per (task, condition, delta, seed), with
    ``delta`` taken from ``delta_sweep`` or left at the dataset default when
    the sweep is empty. The VAE-only comparison variants ignore the causal
    layer, so they run once per (task, seed) under the ``baseline`` label.
    ``base`` holds TrainConfig overrides (dotted keys or nested tables) shared
    by every run.

    Example:
        plan = ExperimentPlan(
            dataset="dsprites_like",
            tasks=["Left-sided Hearts"],
            conditions=["unconstrained", "regularization"],
            seeds=[0, 1],
            output_root="runs/table3",
        )
    """

    model_config = ConfigDict(extra="forbid")

    dataset: str = "dsprites_like"
    resolution: str = "mini"
    image_size: int = 64
    tasks: list[str] | Literal["ALL"] = "ALL"
    conditions: list[Condition] = [Condition.REGULARIZATION]
    variants: list[Variant] = [Variant.OURS]
    delta_sweep: list[float] = []
    seeds: list[int] = [0]
    output_root: Path = Field(default_factory=lambda: settings.RUNS_DIR)
    data_dir: Path | None = None
    base: dict = {}
    workers: int = Field(default=1, ge=1)
    registry_url: str | None = None

    @field_validator("dataset")
    @classmethod
    def _known_dataset(cls, dataset):
        if dataset not in DATASET_NAMES:
            raise ValueError(f"unknown dataset '{dataset}'")
        return dataset

    @field_validator("conditions", "variants", "seeds")
    @classmethod
    def _non_empty(cls, values):
        if not values:
            raise ValueError("must list at least one entry")
        return values

    @field_validator("delta_sweep")
    @classmethod
    def _non_negative(cls, deltas):
        if any(d < 0 for d in deltas):
            raise ValueError("delta values must be non-negative")
        return deltas

    def resolved_tasks(self):
        """TaskSpecs named by the plan, the whole catalog for ``"ALL"``."""
        if self.tasks == "ALL":
            return catalog(self.dataset)
        return [find_task(self.dataset, name) for name in self.tasks]

    def run_specs(self):
        """
        Expand the plan into its runs.

        ``ours`` gets one run per task, condition, delta and seed; every other
        variant gets one run per task and seed under the ``baseline``
        condition. Without a delta sweep the single delta is ``None``, which
        keeps the dataset default.

        Returns:
            list[RunSpec]: Runs in task, variant, seed order.
        """
        specs = []
        deltas = self.delta_sweep or [None]
        for task in self.resolved_tasks():
            for variant in self.variants:
                for seed in self.seeds:
                    if variant is not Variant.OURS:
                        specs.append(RunSpec(self.dataset, task, BASELINE, variant, None, seed))
                        continue
                    for condition in self.conditions:
                        for delta in deltas:
                            specs.append(RunSpec(self.dataset, task, condition.value, variant, delta, seed))
        return specs

    def train_config(self, spec):
        """TrainConfig of one run: plan base, then run identity, condition and delta."""
        data = apply_overrides(
            apply_overrides({}, self.base),
            {
                "dataset": self.dataset,
                "resolution": self.resolution,
                "image_size": self.image_size,
                "task": spec.task.name,
                "variant": spec.variant.value,
                "seed": spec.seed,
            },
        )
        if spec.condition != BASELINE:
            data = apply_overrides(data, CONDITION_OVERRIDES[Condition(spec.condition)])
        if spec.delta is not None:
            data = apply_overrides(data, {"weights.delta": spec.delta})
        return parse_model(TrainConfig, data)


def save_plan(plan, path):
    """Write the fully resolved plan as JSON next to its runs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(plan.model_dump_json(indent=2))
    return path


def load_plan(path, overrides=None):
    """Read a plan from a TOML or JSON file, with optional dotted-key overrides."""
    return parse_model(ExperimentPlan, apply_overrides(load_config_file(path), overrides or {}))
