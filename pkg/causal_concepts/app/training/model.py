import logging

import torch
from torch import nn

from app.errors import ConfigurationError
from app.scm.layer import Predictor, StructuralCausalLayer, concepts
from app.vae.config import LatentLayout
from app.vae.model import NoisyVAE

logger = logging.getLogger(__name__)


class CausalConceptModel(nn.Module):
    """
    Noisy VAE, structural causal layer and task predictor trained end to end.

    The first ``m`` latent coordinates feed the causal layer, whose concepts
    feed the logistic predictor.
    """

    def __init__(self, vae, scm, predictor):
        super().__init__()
        self.vae = vae
        self.scm = scm
        self.predictor = predictor

    @property
    def m(self):
        return self.vae.layout.m

    def causal_parameters(self):
        """Parameters of the causal layer and the predictor (A, eta, W, w0)."""
        return list(self.scm.parameters()) + list(self.predictor.parameters())

    def concept_logits(self, z, eps=None):
        c = self.scm(z[:, : self.m], eps)
        return c, self.predictor(c)

    @torch.no_grad()
    def encode_mean(self, images, u):
        """Posterior means of the latents, the representation every metric is computed on."""
        z, _ = self.vae.encode(images, u, sample=False)
        return z

    @torch.no_grad()
    def predict_proba(self, images, u):
        """Task probabilities with the posterior-mean latents and concept noise off."""
        z = self.encode_mean(images, u)
        c = concepts(self.scm, z[:, : self.m], train_mode=False)
        return torch.sigmoid(self.predictor(c))


def build_model(config, space, task):
    """
    Assemble a freshly initialised model for a run.

    Initialisation is driven by ``config.seed`` alone: the global torch seed
    covers the network layers and a dedicated generator covers A.

    Raises:
        ConfigurationError: If the latent or concept sizes do not fit the factor space.
    """
    m = space.m
    n = config.n_concepts or m
    if not 1 <= n <= m:
        raise ConfigurationError(f"n_concepts must lie in [1, {m}], got {n}")
    torch.manual_seed(config.seed)
    layout = LatentLayout(z_dim=config.z_dim, m=m)
    vae = NoisyVAE(space.image_shape, layout, config.noise, n, config.architecture)
    init = torch.Generator().manual_seed(config.seed + 1)
    scm = StructuralCausalLayer(
        m, n, nonlinearity=config.scm_nonlinearity, eps_std=config.noise.eps_std, generator=init
    )
    if config.a_init == "ground_truth":
        rows = sorted(space.index_of(name) for name in task.relevant_factors)
        scm.set_ground_truth(rows)
        logger.info("causal matrix initialised to ground truth on rows %s and frozen", rows)
    return CausalConceptModel(vae, scm, Predictor(n))
