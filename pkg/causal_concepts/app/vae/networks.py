"""Encoder and decoder networks.

Images travel as ``N x H x W x C`` tensors; each network converts to the layout
it needs. Encoders return ``(mu, logvar, eps_mu)``: the diagonal-Gaussian
posterior over z and the posterior mean of the concept noise.
"""

import math

import torch
from torch import nn

from app.errors import ContractError

MLP_ENCODER_WIDTHS = (900, 600, 300)
MLP_DECODER_WIDTHS = (300, 300, 1024)
CONV_ENCODER_CHANNELS = (3, 32, 64, 64, 64, 16)
CONV_DECODER_CHANNELS = (64, 64, 3)


def _check_images(x, image_shape):
    if tuple(x.shape[1:]) != tuple(image_shape):
        raise ContractError(f"expected images of shape (N, {', '.join(map(str, image_shape))}), got {tuple(x.shape)}")


def _with_labels(h, u, label_dim):
    if not label_dim:
        return h
    if u is None or u.shape != (h.shape[0], label_dim):
        raise ContractError(f"encoder expects labels of shape (N, {label_dim})")
    return torch.cat([h, u], dim=1)


class MLPEncoder(nn.Module):
    """Fully connected encoder, widths [900, 600, 300] with ELU, for one-channel sprites."""

    def __init__(self, image_shape, z_dim, n_concepts, label_dim=0, widths=MLP_ENCODER_WIDTHS):
        super().__init__()
        self.image_shape = tuple(image_shape)
        self.label_dim = label_dim
        layers, previous = [], math.prod(self.image_shape) + label_dim
        for width in widths:
            layers += [nn.Linear(previous, width), nn.ELU()]
            previous = width
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(previous, 2 * z_dim)
        self.eps_head = nn.Linear(previous, n_concepts)

    def forward(self, x, u=None):
        _check_images(x, self.image_shape)
        h = self.body(_with_labels(x.flatten(1), u, self.label_dim))
        mu, logvar = self.head(h).chunk(2, dim=1)
        return mu, logvar, self.eps_head(h)


class MLPDecoder(nn.Module):
    """Fully connected decoder, widths [300, 300, 1024, H*W*C]; returns logits."""

    def __init__(self, z_dim, image_shape, widths=MLP_DECODER_WIDTHS):
        super().__init__()
        self.image_shape = tuple(image_shape)
        layers, previous = [], z_dim
        for width in widths:
            layers += [nn.Linear(previous, width), nn.ELU()]
            previous = width
        layers.append(nn.Linear(previous, math.prod(self.image_shape)))
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        return self.net(z).view(-1, *self.image_shape)


class ConvEncoder(nn.Module):
    """
    Convolutional encoder following the channel plan [3, 32, 64, 64, 64, 16].

    Each transition of the plan is a 4x4 stride-2 convolution with ReLU, so a
    64x64 input leaves the stack as a 16-channel 2x2 map. Labels, when used,
    are concatenated to the flattened feature map before the heads.
    """

    def __init__(self, image_shape, z_dim, n_concepts, label_dim=0, channels=CONV_ENCODER_CHANNELS):
        super().__init__()
        self.image_shape = tuple(image_shape)
        self.label_dim = label_dim
        size, depth = image_shape[0], image_shape[2]
        if depth != channels[0]:
            raise ContractError(f"conv encoder plan starts at {channels[0]} channels, images have {depth}")
        layers = []
        for c_in, c_out in zip(channels, channels[1:]):
            layers += [nn.Conv2d(c_in, c_out, kernel_size=4, stride=2, padding=1), nn.ReLU()]
            size //= 2
        self.body = nn.Sequential(*layers)
        features = channels[-1] * size * size + label_dim
        self.head = nn.Linear(features, 2 * z_dim)
        self.eps_head = nn.Linear(features, n_concepts)

    def forward(self, x, u=None):
        _check_images(x, self.image_shape)
        h = self.body(x.permute(0, 3, 1, 2)).flatten(1)
        h = _with_labels(h, u, self.label_dim)
        mu, logvar = self.head(h).chunk(2, dim=1)
        return mu, logvar, self.eps_head(h)


class ConvDecoder(nn.Module):
    """Linear projection to a 64-channel map followed by transpose convolutions [64, 64, 3]."""

    def __init__(self, z_dim, image_shape, channels=CONV_DECODER_CHANNELS):
        super().__init__()
        self.image_shape = tuple(image_shape)
        self.start = image_shape[0] // 2 ** len(channels)
        self.first_channels = channels[0]
        self.project = nn.Linear(z_dim, channels[0] * self.start * self.start)
        layers, previous = [], channels[0]
        for i, c_out in enumerate(channels):
            layers.append(nn.ConvTranspose2d(previous, c_out, kernel_size=4, stride=2, padding=1))
            if i < len(channels) - 1:
                layers.append(nn.ReLU())
            previous = c_out
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        h = torch.relu(self.project(z)).view(-1, self.first_channels, self.start, self.start)
        return self.net(h).permute(0, 2, 3, 1)


def build_networks(architecture, image_shape, z_dim, n_concepts, label_dim):
    """Return ``(encoder, decoder)`` for ``"mlp"`` (sprites) or ``"conv"`` (scenes)."""
    if architecture == "mlp":
        return MLPEncoder(image_shape, z_dim, n_concepts, label_dim), MLPDecoder(z_dim, image_shape)
    if architecture == "conv":
        return ConvEncoder(image_shape, z_dim, n_concepts, label_dim), ConvDecoder(z_dim, image_shape)
    raise ContractError(f"unknown architecture '{architecture}'")
