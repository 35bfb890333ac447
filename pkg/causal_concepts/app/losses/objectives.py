"""Training objectives.

Every function takes and returns torch tensors so that autograd provides the
gradients; the total objective follows the negated-ELBO convention

    total = recon + beta1 * kl_eps + beta2 * kl_zc + alpha * l_u + delta * l_clf + gamma * l_diversity
"""

import logging
import math
from dataclasses import dataclass, fields

import torch
from pydantic import BaseModel, Field, field_validator

from app.errors import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-7
CONDITION_WARNING = 1e6
SUPERVISION_MODES = ("elementwise", "inner")


class LossWeights(BaseModel):
    alpha: float = Field(default=0.5, ge=0.0)
    beta1: float = Field(default=1.0, ge=0.0)
    beta2: float = Field(default=0.6, ge=0.0)
    delta: float = Field(default=0.5, ge=0.0)
    gamma: float = Field(default=0.5, ge=0.0)

    @field_validator("*")
    @classmethod
    def _finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("loss weights must be finite")
        return value


_DATASET_WEIGHTS = {
    "dsprites_like": LossWeights(alpha=0.5, beta1=1.0, beta2=0.6, delta=0.5, gamma=0.5),
    "shapes3d_like": LossWeights(alpha=0.5, beta1=0.8, beta2=0.8, delta=0.8, gamma=0.5),
}


def default_weights(dataset_name):
    """Per-dataset default weights (alpha, beta1, beta2, delta, gamma)."""
    if dataset_name not in _DATASET_WEIGHTS:
        raise ConfigurationError(f"no default loss weights for dataset '{dataset_name}'")
    return _DATASET_WEIGHTS[dataset_name].model_copy()


@dataclass
class ElboTerms:
    recon: torch.Tensor
    kl_eps: torch.Tensor
    kl_zc: torch.Tensor


@dataclass
class LossBreakdown:
    recon: torch.Tensor
    kl_eps: torch.Tensor
    kl_zc: torch.Tensor
    l_u: torch.Tensor
    l_clf: torch.Tensor
    l_diversity: torch.Tensor
    total: torch.Tensor

    def as_dict(self):
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def _require_finite(term, value):
    if not torch.isfinite(value).all():
        raise NumericalError(term)
    return value


def gaussian_kl(mu_q, logvar_q, mu_p, logvar_p):
    """Closed-form KL(N(mu_q, var_q) || N(mu_p, var_p)) for diagonal Gaussians, summed over the last axis."""
    return 0.5 * torch.sum(
        logvar_p - logvar_q + (torch.exp(logvar_q) + (mu_q - mu_p) ** 2) / torch.exp(logvar_p) - 1.0,
        dim=-1,
    )


def elbo_terms(stats, prior_mu, prior_logvar, x, x_hat):
    """
    Reconstruction and KL terms of the negated ELBO, averaged over the batch.

    ``recon`` is the squared error summed over pixels (Gaussian likelihood with
    unit observation std). ``kl_eps`` compares the concept-noise posterior
    N(eps_mu, eps_std²) with the standard normal prior; with ``eps_std == 0``
    only its mean part ``0.5 * eps_mu²`` remains. ``kl_zc`` compares the
    latent posterior with the (possibly label-conditioned) prior.

    Args:
        stats (PosteriorStats): Encoder output.
        prior_mu (Tensor): ``N x z_dim`` prior means.
        prior_logvar (Tensor): ``N x z_dim`` prior log-variances.
        x (Tensor): Input images.
        x_hat (Tensor): Reconstructions, same shape as ``x``.

    Raises:
        NumericalError: Naming the first non-finite statistic or term.
    """
    for name, value in (("mu", stats.mu), ("logvar", stats.logvar), ("eps_mu", stats.eps_mu)):
        _require_finite(name, value)
    if x.shape != x_hat.shape:
        raise NumericalError("recon", f"shape {tuple(x.shape)} vs {tuple(x_hat.shape)}")

    recon = ((x_hat - x) ** 2).flatten(1).sum(dim=1).mean()
    if stats.eps_std > 0:
        eps_logvar = torch.full_like(stats.eps_mu, 2.0 * math.log(stats.eps_std))
        zeros = torch.zeros_like(stats.eps_mu)
        kl_eps = gaussian_kl(stats.eps_mu, eps_logvar, zeros, zeros).mean()
    else:
        kl_eps = 0.5 * (stats.eps_mu ** 2).sum(dim=1).mean()
    kl_zc = gaussian_kl(stats.mu, stats.logvar, prior_mu, prior_logvar).mean()
    return ElboTerms(
        recon=_require_finite("recon", recon),
        kl_eps=_require_finite("kl_eps", kl_eps),
        kl_zc=_require_finite("kl_zc", kl_zc),
    )


def _back_map(A, c):
    m, n = A.shape
    condition = float(torch.linalg.cond(A.detach()))
    if m == n and math.isfinite(condition) and condition < 1e12:
        back = torch.linalg.solve(A, c, left=False)
    else:
        logger.info("supervision loss uses the pseudo-inverse of A (condition number %.3g)", condition)
        back = c @ torch.linalg.pinv(A)
    if condition > CONDITION_WARNING:
        logger.warning("causal matrix is ill-conditioned", extra={"condition_number": condition})
    return back


def supervision_loss(A, c, z, u, mode="elementwise"):
    """
    Label-consistency loss between the concept back-map and the latents.

    Concepts are mapped back to factor space with ``A^-1`` (Moore-Penrose
    pseudo-inverse when A is not square or is singular): since ``c = z A`` for
    the linear part of the causal layer, ``c A^-1`` recovers ``z``. Then

        l_u = mean_batch || sigmoid(u * (c A^-1)) - sigmoid(u * z) ||²

    with ``*`` the elementwise product. ``mode="inner"`` uses the inner product
    ``u . (c A^-1)`` and ``u . z`` inside the sigmoid instead.

    Args:
        A (Tensor): ``m x n`` causal matrix.
        c (Tensor): ``N x n`` concepts.
        z (Tensor): ``N x m`` supervised latent slice.
        u (Tensor): ``N x m`` normalized factor labels.
        mode (str): ``"elementwise"`` or ``"inner"``.
    """
    if mode not in SUPERVISION_MODES:
        raise ConfigurationError(f"unknown supervision mode '{mode}'")
    back = _back_map(A, c)
    if mode == "elementwise":
        gap = torch.sigmoid(u * back) - torch.sigmoid(u * z)
        return (gap ** 2).sum(dim=1).mean()
    gap = torch.sigmoid((u * back).sum(dim=1)) - torch.sigmoid((u * z).sum(dim=1))
    return (gap ** 2).mean()


def alignment_loss(z, u):
    """Direct regression of the supervised latent slice onto the labels (squared error)."""
    return ((z - u) ** 2).sum(dim=1).mean()


def classification_loss(probabilities, labels):
    """Mean binary cross-entropy; probabilities are clamped to [1e-7, 1 - 1e-7]."""
    p = probabilities.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    return -(labels * torch.log(p) + (1.0 - labels) * torch.log(1.0 - p)).mean()


def diversity_loss(A):
    """Frobenius norm of the causal matrix."""
    return torch.linalg.matrix_norm(A, ord="fro")


def total_loss(terms, l_u, l_clf, l_diversity, weights):
    """
    Combine the batch's loss terms into a ``LossBreakdown``.

    Raises:
        NumericalError: If the combined objective is not finite.
    """
    total = (
        terms.recon
        + weights.beta1 * terms.kl_eps
        + weights.beta2 * terms.kl_zc
        + weights.alpha * l_u
        + weights.delta * l_clf
        + weights.gamma * l_diversity
    )
    breakdown = LossBreakdown(
        recon=terms.recon,
        kl_eps=terms.kl_eps,
        kl_zc=terms.kl_zc,
        l_u=l_u,
        l_clf=l_clf,
        l_diversity=l_diversity,
        total=total,
    )
    if not torch.isfinite(total):
        raise NumericalError("total", str({k: v for k, v in breakdown.as_dict().items()}))
    return breakdown
