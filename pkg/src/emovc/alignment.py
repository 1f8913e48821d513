"""Latent-space alignment machinery: the invertible flow between posterior
and prior spaces, prior log-density, monotonic alignment search, and the
prosody alignment loss tying the audio and text paths together."""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .distributions import (GaussianSequence, gaussian_log_density,
                            kl_diag_gaussian)
from .errors import BadInputError

__all__ = [
    "AffineCoupling", "FlowStack", "prior_log_density", "mas",
    "durations_from_alignment", "kl_diag_gaussian", "prosody_alignment_loss",
]


class AffineCoupling(nn.Module):
    """Half-split affine coupling with conv shift/log-scale nets.

    The log-scale is squashed to (-1, 1) to keep long adversarial training
    runs stable; the layer stays exactly invertible and its log-determinant
    is the sum of the squashed log-scales.
    """

    def __init__(self, channels, hidden=32, kernel_size=5):
        super().__init__()
        if channels % 2 != 0:
            raise BadInputError("coupling needs an even channel count")
        half = channels // 2
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(half, hidden, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.out = nn.Conv1d(hidden, channels, 1)
        # Start at the identity map.
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def _shift_scale(self, za):
        h = F.relu(self.conv1(za[None]))
        h = F.relu(self.conv2(h))
        shift, raw_scale = torch.chunk(self.out(h)[0], 2, dim=0)
        return shift, torch.tanh(raw_scale)

    def forward(self, z):
        za, zb = torch.chunk(z, 2, dim=0)
        shift, log_scale = self._shift_scale(za)
        ub = zb * torch.exp(log_scale) + shift
        return torch.cat([za, ub], dim=0), log_scale.sum()

    def inverse(self, u):
        ua, ub = torch.chunk(u, 2, dim=0)
        shift, log_scale = self._shift_scale(ua)
        zb = (ub - shift) * torch.exp(-log_scale)
        return torch.cat([ua, zb], dim=0)


class FlowStack(nn.Module):
    """K affine couplings with a channel flip after each layer.

    With zero-initialized coupling heads (an even K) the whole stack is the
    identity with zero log-determinant.
    """

    def __init__(self, channels, n_layers=4, hidden=32, kernel_size=5):
        super().__init__()
        self.channels = channels
        self.layers = nn.ModuleList(
            AffineCoupling(channels, hidden, kernel_size) for _ in range(n_layers))

    def forward(self, z):
        if z.shape[0] != self.channels:
            raise BadInputError(f"expected {self.channels} channels, got {z.shape[0]}")
        logdet = z.new_zeros(())
        for layer in self.layers:
            z, ld = layer(z)
            z = torch.flip(z, dims=[0])
            logdet = logdet + ld
        return z, logdet

    def inverse(self, u):
        if u.shape[0] != self.channels:
            raise BadInputError(f"expected {self.channels} channels, got {u.shape[0]}")
        for layer in reversed(self.layers):
            u = torch.flip(u, dims=[0])
            u = layer.inverse(u)
        return u


def prior_log_density(z: torch.Tensor, prior: GaussianSequence,
                      flow: FlowStack) -> torch.Tensor:
    """log p(z) for the flow-enriched prior: log N(f(z); mu, sigma) + logdet."""
    if prior.length != z.shape[1]:
        raise BadInputError("prior length must match the latent frame count")
    u, logdet = flow(z)
    return gaussian_log_density(u, prior) + logdet


def mas(u: torch.Tensor, prior: GaussianSequence) -> np.ndarray:
    """Monotonic alignment search.

    Finds the binary [N, T] assignment maximizing the summed per-frame
    Gaussian log-likelihood, subject to monotone, contiguous, surjective
    alignment. Ties are broken toward staying on the current phoneme.
    """
    x = u.detach().cpu().numpy()
    mu = prior.mu.detach().cpu().numpy()
    sigma = prior.sigma.detach().cpu().numpy()
    n = mu.shape[1]
    t = x.shape[1]
    if t < n:
        raise BadInputError(f"need at least as many frames ({t}) as phonemes ({n})")

    # loglik[i, frame] = sum over channels of log N(x[:, frame]; mu_i, sigma_i)
    diff = x[:, None, :] - mu[:, :, None]
    loglik = np.sum(-0.5 * np.log(2.0 * np.pi) - np.log(sigma)[:, :, None]
                    - diff**2 / (2.0 * sigma[:, :, None] ** 2), axis=0)

    q = np.full((n, t), -np.inf)
    q[0, 0] = loglik[0, 0]
    for frame in range(1, t):
        hi = min(frame, n - 1)
        for i in range(hi + 1):
            stay = q[i, frame - 1]
            step = q[i - 1, frame - 1] if i > 0 else -np.inf
            best = stay if stay >= step else step
            if np.isfinite(best):
                q[i, frame] = loglik[i, frame] + best

    a = np.zeros((n, t), dtype=np.int8)
    i = n - 1
    for frame in range(t - 1, 0, -1):
        a[i, frame] = 1
        if i > 0 and q[i, frame - 1] < q[i - 1, frame - 1]:
            i -= 1
    a[0, 0] = 1
    return a


def durations_from_alignment(alignment: np.ndarray) -> np.ndarray:
    """Per-phoneme frame counts: the row sums of the alignment matrix."""
    return np.asarray(alignment, dtype=np.int64).sum(axis=1)


def prosody_alignment_loss(sample, prior: GaussianSequence,
                           flow: FlowStack) -> torch.Tensor:
    """Single-sample Monte-Carlo KL between the audio posterior and the
    flow-enriched text prior, normalized per element."""
    if prior.length != sample.z2.shape[1]:
        raise BadInputError("expanded prior must match the posterior frame count")
    log_q = gaussian_log_density(sample.z2, sample.stats)
    log_p = prior_log_density(sample.z2, prior, flow)
    return (log_q - log_p) / sample.z2.numel()
