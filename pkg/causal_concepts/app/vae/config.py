from dataclasses import dataclass
from enum import Enum

from pydantic import BaseModel, Field, model_validator

from app.errors import ConfigurationError


class Variant(str, Enum):
    BETA_VAE = "beta_vae"
    NOISY_BETA_VAE = "noisy_beta_vae"
    OURS = "ours"
    SUP_BETA_VAE = "sup_beta_vae"
    SUP_NOISY_BETA_VAE = "sup_noisy_beta_vae"

    @property
    def uses_labels(self):
        """The encoder consumes u as well as x."""
        return self in (Variant.OURS, Variant.SUP_BETA_VAE, Variant.SUP_NOISY_BETA_VAE)

    @property
    def supervised_alignment(self):
        """The first m latents are regressed directly onto u."""
        return self in (Variant.SUP_BETA_VAE, Variant.SUP_NOISY_BETA_VAE)

    @property
    def trains_concepts(self):
        """The SCM layer and the task predictor take part in the objective."""
        return self is Variant.OURS

    @property
    def noiseless(self):
        return self in (Variant.BETA_VAE, Variant.SUP_BETA_VAE)


class NoiseConfig(BaseModel):
    """
    Noise scales of the noisy-prior VAE.

    ``zeta_std`` perturbs the encoder output, ``xi_std`` the decoder output and
    ``eps_std`` is the fixed width of the concept-noise posterior. The noiseless
    variants (``beta_vae``, ``sup_beta_vae``) force ``zeta_std`` and ``xi_std``
    to zero whatever was configured.
    """

    variant: Variant = Variant.OURS
    zeta_std: float = Field(default=0.05, ge=0.0)
    xi_std: float = Field(default=0.01, ge=0.0)
    eps_std: float = Field(default=0.05, ge=0.0)

    @model_validator(mode="after")
    def _silence_noiseless_variants(self):
        if self.variant.noiseless:
            self.zeta_std = 0.0
            self.xi_std = 0.0
        return self


@dataclass(frozen=True)
class LatentLayout:
    """
    Split of the latent vector: the first ``m`` coordinates are the supervised
    generative-factor slots feeding the causal layer, the remaining
    ``z_dim - m`` are free nuisance coordinates.
    """

    z_dim: int
    m: int

    def __post_init__(self):
        if not self.z_dim >= self.m >= 1:
            raise ConfigurationError(f"latent layout needs z_dim >= m >= 1, got z_dim={self.z_dim}, m={self.m}")

    @property
    def free_dims(self):
        return self.z_dim - self.m
