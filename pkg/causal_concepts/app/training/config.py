from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.datasets.factors import DATASET_NAMES, RESOLUTIONS
from app.losses.objectives import SUPERVISION_MODES, LossWeights, default_weights
from app.vae.config import NoiseConfig, Variant

DEFAULT_ARCHITECTURE = {"dsprites_like": "mlp", "shapes3d_like": "conv"}


class TrainConfig(BaseModel):
    """
    Everything that determines one training run.

    Weights that are not given explicitly are filled from the dataset's
    defaults, so a config file that only sets ``[weights] delta = 0.9`` keeps
    the other four weights at their per-dataset values. The noise block always
    follows ``variant``: the model validator copies the variant into
    ``noise.variant`` so the noiseless variants lose their ζ/ξ noise.

    Example:
        config = TrainConfig(dataset="dsprites_like", task="Left-sided Hearts", seed=3)
        config.weights.beta2   # 0.6
    """

    model_config = ConfigDict(extra="forbid")

    dataset: str = "dsprites_like"
    resolution: str = "mini"
    image_size: int = Field(default=64, ge=8)
    task: str = "Left-sided Hearts"
    variant: Variant = Variant.OURS
    seed: int = 0

    epochs: int = Field(default=50, ge=1)
    freeze_epochs: int = Field(default=10, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    warmup_fraction: float = Field(default=0.05, ge=0.0, lt=1.0)
    batch_size: int = Field(default=128, ge=1)
    supervision_ramp_epochs: int = Field(default=5, ge=0)

    weights: LossWeights = None
    noise: NoiseConfig = NoiseConfig()

    z_dim: int = Field(default=16, ge=1)
    n_concepts: int | None = None
    architecture: str | None = None
    scm_nonlinearity: str = "tanh"
    clip_enabled: bool = True
    a_init: str = "random"
    inverse_mode: str = "elementwise"

    split_ratio: float = 0.7
    stratify_on: list[str] | None = None
    min_positives: int = Field(default=64, ge=1)
    checkpoint_every: int = Field(default=5, ge=1)
    mic_samples: int = Field(default=1000, ge=20)
    fp_margin: float = Field(default=0.2, ge=0.0)

    @model_validator(mode="before")
    @classmethod
    def _dataset_weights(cls, data):
        if not isinstance(data, dict):
            return data
        dataset = data.get("dataset", "dsprites_like")
        if dataset not in DATASET_NAMES:
            raise ValueError(f"unknown dataset '{dataset}'")
        given = data.get("weights")
        if isinstance(given, LossWeights):
            return data
        merged = default_weights(dataset).model_dump()
        merged.update(given or {})
        return {**data, "weights": merged}

    @field_validator("resolution")
    @classmethod
    def _known_resolution(cls, resolution):
        if resolution not in RESOLUTIONS:
            raise ValueError(f"resolution must be one of {RESOLUTIONS}")
        return resolution

    @field_validator("a_init")
    @classmethod
    def _known_init(cls, a_init):
        if a_init not in ("random", "ground_truth"):
            raise ValueError("a_init must be 'random' or 'ground_truth'")
        return a_init

    @field_validator("inverse_mode")
    @classmethod
    def _known_mode(cls, mode):
        if mode not in SUPERVISION_MODES:
            raise ValueError(f"inverse_mode must be one of {SUPERVISION_MODES}")
        return mode

    @model_validator(mode="after")
    def _check_schedule(self):
        if self.freeze_epochs > self.epochs:
            raise ValueError(f"freeze_epochs ({self.freeze_epochs}) exceeds epochs ({self.epochs})")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.noise.variant is not self.variant:
            self.noise = NoiseConfig(**{**self.noise.model_dump(), "variant": self.variant})
        if self.architecture is None:
            self.architecture = DEFAULT_ARCHITECTURE[self.dataset]
        return self


def effective_weights(config, epoch):
    """
    Loss weights in force during ``epoch``.

    - ``beta_vae`` / ``noisy_beta_vae``: VAE terms only (alpha = delta = gamma = 0).
    - ``sup_*``: alpha weighs the direct latent-to-label alignment, delta = gamma = 0.
    - ``ours``: no causal-layer terms inside the freeze window; afterwards delta
      and gamma apply in full and alpha ramps linearly from 0 at
      ``freeze_epochs`` to its configured value ``supervision_ramp_epochs`` later.
    """
    weights = config.weights
    variant = config.variant
    if not variant.uses_labels:
        return weights.model_copy(update={"alpha": 0.0, "delta": 0.0, "gamma": 0.0})
    if variant.supervised_alignment:
        return weights.model_copy(update={"delta": 0.0, "gamma": 0.0})
    if epoch < config.freeze_epochs:
        return weights.model_copy(update={"alpha": 0.0, "delta": 0.0, "gamma": 0.0})
    if config.supervision_ramp_epochs == 0:
        return weights.model_copy()
    ramp = min(1.0, (epoch - config.freeze_epochs) / config.supervision_ramp_epochs)
    return weights.model_copy(update={"alpha": weights.alpha * ramp})


def scm_trainable(config, epoch):
    """Whether A, eta and W may change during ``epoch``."""
    return config.variant.trains_concepts and epoch >= config.freeze_epochs
