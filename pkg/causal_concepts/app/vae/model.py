from dataclasses import dataclass

import torch
from torch import nn

from app.errors import ContractError
from app.vae.config import LatentLayout, NoiseConfig
from app.vae.networks import build_networks


@dataclass
class PosteriorStats:
    """
    Diagonal-Gaussian posterior statistics returned by ``encode``.

    Attributes:
        mu (Tensor): ``N x z_dim`` posterior means.
        logvar (Tensor): ``N x z_dim`` posterior log-variances.
        eps_mu (Tensor): ``N x n`` posterior means of the concept noise ε.
        eps_std (float): Fixed posterior std of ε.
    """

    mu: torch.Tensor
    logvar: torch.Tensor
    eps_mu: torch.Tensor
    eps_std: float


def _noise(shape, generator, like):
    return torch.randn(shape, generator=generator, dtype=like.dtype, device=like.device)


class NoisyVAE(nn.Module):
    """
    Variational autoencoder with additive encoder noise ζ and decoder noise ξ.

    ``z = f(x, u) + ζ`` and ``x = g(z) + ξ``. Label-conditioned variants feed
    ``u`` to the encoder; the ``ours`` variant also carries a conditional prior
    whose mean on the first ``m`` latents is a learned affine map of ``u``.
    Unconditioned variants ignore ``u`` entirely, so passing it or not gives
    identical outputs.

    Args:
        image_shape (tuple[int, int, int]): ``(H, W, C)``.
        layout (LatentLayout): Latent size and number of supervised slots.
        noise (NoiseConfig): Variant and noise scales.
        n_concepts (int): Width of the concept-noise head.
        architecture (str): ``"mlp"`` or ``"conv"``.
    """

    def __init__(self, image_shape, layout, noise, n_concepts, architecture="mlp"):
        super().__init__()
        if not isinstance(noise, NoiseConfig) or not isinstance(layout, LatentLayout):
            raise ContractError("NoisyVAE needs a NoiseConfig and a LatentLayout")
        self.layout = layout
        self.noise = noise
        self.variant = noise.variant
        label_dim = layout.m if self.variant.uses_labels else 0
        self.encoder, self.decoder = build_networks(architecture, image_shape, layout.z_dim, n_concepts, label_dim)
        self.prior_map = nn.Linear(layout.m, layout.m) if self.variant.trains_concepts else None

    def _labels(self, u):
        return u if self.variant.uses_labels else None

    def encode(self, x, u=None, generator=None, sample=True):
        """
        Encode images (and labels) into latent vectors.

        With ``sample=True`` the result is the reparameterized draw
        ``mu + exp(logvar / 2) * n1 + zeta_std * n2``; with ``sample=False``
        it is the posterior mean, which is what evaluation uses.

        Returns:
            tuple[Tensor, PosteriorStats]: ``z`` of shape ``N x z_dim`` and the
            posterior statistics needed by the KL terms.
        """
        mu, logvar, eps_mu = self.encoder(x, self._labels(u))
        stats = PosteriorStats(mu=mu, logvar=logvar, eps_mu=eps_mu, eps_std=self.noise.eps_std)
        if not sample:
            return mu, stats
        z = mu + torch.exp(0.5 * logvar) * _noise(mu.shape, generator, mu)
        if self.noise.zeta_std > 0:
            z = z + self.noise.zeta_std * _noise(mu.shape, generator, mu)
        return z, stats

    def decode(self, z, generator=None, sample=True):
        """Reconstruct images from latents; ξ-noise is added when sampling, output clamped to [0, 1]."""
        if z.dim() != 2 or z.shape[1] != self.layout.z_dim:
            raise ContractError(f"decode expects latents of shape (N, {self.layout.z_dim}), got {tuple(z.shape)}")
        x_hat = torch.sigmoid(self.decoder(z))
        if sample and self.noise.xi_std > 0:
            x_hat = x_hat + self.noise.xi_std * _noise(x_hat.shape, generator, x_hat)
        return x_hat.clamp(0.0, 1.0)

    def sample_eps(self, stats, generator=None):
        """Draw ε from its posterior N(eps_mu, eps_std²)."""
        return stats.eps_mu + stats.eps_std * _noise(stats.eps_mu.shape, generator, stats.eps_mu)

    def prior(self, u, batch_size):
        """
        Mean and log-variance of the latent prior for a batch.

        Free coordinates, and every coordinate of variants without a conditional
        prior, follow N(0, 1); under ``ours`` the first ``m`` follow
        N(prior_map(u), 1).
        """
        reference = self.encoder.head.weight
        mu = torch.zeros(batch_size, self.layout.z_dim, dtype=reference.dtype, device=reference.device)
        if self.prior_map is not None:
            if u is None:
                raise ContractError("the conditional prior needs labels u")
            mu = torch.cat([self.prior_map(u), mu[:, self.layout.m:]], dim=1)
        return mu, torch.zeros_like(mu)
