"""Structural causal layer from generative factors Z to concepts C, and the task predictor.

The only coupling parameter is the causal matrix A (rows: factors, columns:
concepts). There is no parameter linking two factors or two concepts, so the
graph over Z and C is bipartite by construction.
"""

import logging

import torch
from torch import nn

from app.errors import ContractError

logger = logging.getLogger(__name__)

NONLINEARITIES = ("tanh", "linear")


def clip_A(A):
    """
    Normalize A by its largest absolute entry, then clamp to [-1, 1].

    An all-zero matrix is returned unchanged (with a warning) since it has no
    scale to normalize by.

    Example:
        clip_A(torch.tensor([[2.0, -4.0], [1.0, 0.0]]))
        # tensor([[ 0.5000, -1.0000], [ 0.2500,  0.0000]])
    """
    peak = A.detach().abs().max()
    if peak == 0:
        logger.warning("clip_A skipped: causal matrix is all zeros")
        return A.clone()
    return torch.clamp(A / peak, -1.0, 1.0)


class StructuralCausalLayer(nn.Module):
    """
    Concepts ``c_i = h_i(sum_j A_ji z_j; eta_i) + eps_i``.

    ``h_i`` is ``tanh(a_i * s + b_i)`` by default or the affine map
    ``a_i * s + b_i`` when ``nonlinearity="linear"``; ``eta_i = (a_i, b_i)``
    starts at ``(1, 0)``.

    Args:
        m (int): Number of generative factors (rows of A).
        n (int): Number of concepts (columns of A), at most ``m``.
        nonlinearity (str): ``"tanh"`` or ``"linear"``.
        eps_std (float): Std of the concept noise drawn by ``concepts`` in train mode.
        generator (torch.Generator | None): Seeds the uniform(-0.1, 0.1) init of A.
    """

    def __init__(self, m, n, nonlinearity="tanh", eps_std=0.05, generator=None, init_scale=0.1):
        super().__init__()
        if not 1 <= n <= m:
            raise ContractError(f"concept count must satisfy 1 <= n <= m, got n={n}, m={m}")
        if nonlinearity not in NONLINEARITIES:
            raise ContractError(f"unknown nonlinearity '{nonlinearity}'")
        self.m, self.n = m, n
        self.nonlinearity = nonlinearity
        self.eps_std = eps_std
        self.a_frozen = False
        init = (torch.rand(m, n, generator=generator) * 2 - 1) * init_scale
        self.A = nn.Parameter(init)
        self.eta_scale = nn.Parameter(torch.ones(n))
        self.eta_bias = nn.Parameter(torch.zeros(n))

    def forward(self, z, eps=None):
        if z.dim() != 2 or z.shape[1] != self.m:
            raise ContractError(f"causal layer expects z of shape (N, {self.m}), got {tuple(z.shape)}")
        pre = self.eta_scale * (z @ self.A) + self.eta_bias
        c = torch.tanh(pre) if self.nonlinearity == "tanh" else pre
        if eps is not None:
            c = c + eps
        return c

    def set_ground_truth(self, relevant_rows):
        """Set A to 1 on the rows of the relevant factors (every column), 0 elsewhere, and freeze it."""
        with torch.no_grad():
            self.A.zero_()
            self.A[list(relevant_rows), :] = 1.0
        self.a_frozen = True

    def project_(self):
        """Apply ``clip_A`` to the stored matrix in place, outside autograd."""
        with torch.no_grad():
            self.A.copy_(clip_A(self.A))


def concepts(layer, z, generator=None, train_mode=False):
    """
    Evaluate the concept vector for a batch of supervised latent slices.

    ε ~ N(0, eps_std²) is drawn only when ``train_mode`` is set.
    """
    eps = None
    if train_mode and layer.eps_std > 0:
        eps = layer.eps_std * torch.randn(z.shape[0], layer.n, generator=generator, dtype=z.dtype)
    return layer(z, eps)


class Predictor(nn.Module):
    """Logistic task head ``y = sigmoid(w0 + W . c)`` with W initialised to the all-ones vector."""

    def __init__(self, n):
        super().__init__()
        self.W = nn.Parameter(torch.ones(n))
        self.w0 = nn.Parameter(torch.zeros(()))

    def forward(self, c):
        if c.shape[-1] != self.W.shape[0]:
            raise ContractError(f"predictor expects {self.W.shape[0]} concepts, got {c.shape[-1]}")
        return self.w0 + c @ self.W

    def predict(self, c):
        """Return ``(probability, label)`` with label 1 iff probability >= 0.5."""
        probability = torch.sigmoid(self(c))
        return probability, (probability >= 0.5).to(torch.int64)


_ROLES = {
    "A": "factor->concept",
    "eta_scale": "concept head",
    "eta_bias": "concept head",
    "W": "predictor",
    "w0": "predictor",
}


def parameter_census(module):
    """
    List every trainable parameter of a module with its shape and structural role.

    Returns:
        list[dict]: ``{"name", "shape", "role"}`` per parameter; names outside
        the causal layer and predictor get the role ``"other"``.
    """
    census = []
    for name, parameter in module.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        census.append({"name": name, "shape": tuple(parameter.shape), "role": _ROLES.get(leaf, "other")})
    return census
