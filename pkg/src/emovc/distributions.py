"""Per-position diagonal Gaussian sequences and their core identities."""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import BadInputError

LOG_TWO_PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianSequence:
    """Diagonal Gaussian stats per sequence position.

    `level` records whether positions are phonemes (pre-expansion) or frames.
    """

    mu: torch.Tensor     # [d, L]
    sigma: torch.Tensor  # [d, L], strictly positive
    level: str           # "phoneme" | "frame"

    @classmethod
    def from_projection(cls, stats: torch.Tensor, level: str) -> "GaussianSequence":
        """Split a [2d, L] projection into mean and exp(log-sigma)."""
        mu, log_sigma = torch.chunk(stats, 2, dim=0)
        return cls(mu, torch.exp(log_sigma), level)

    @property
    def length(self) -> int:
        return self.mu.shape[1]

    @property
    def numel(self) -> int:
        return self.mu.numel()


def gaussian_log_density(x: torch.Tensor, g: GaussianSequence) -> torch.Tensor:
    """Sum over all elements of the diagonal Gaussian log-pdf."""
    if x.shape != g.mu.shape:
        raise BadInputError(f"shape mismatch: {tuple(x.shape)} vs {tuple(g.mu.shape)}")
    return torch.sum(-0.5 * LOG_TWO_PI - torch.log(g.sigma)
                     - (x - g.mu) ** 2 / (2.0 * g.sigma**2))


def kl_diag_gaussian(q: GaussianSequence, p: GaussianSequence) -> torch.Tensor:
    """Closed-form KL(q || p) between diagonal Gaussians, averaged per element."""
    if q.mu.shape != p.mu.shape:
        raise BadInputError("KL requires identically shaped Gaussian sequences")
    kl = (torch.log(p.sigma / q.sigma)
          + (q.sigma**2 + (q.mu - p.mu) ** 2) / (2.0 * p.sigma**2) - 0.5)
    return kl.mean()


def expand_gaussian(g: GaussianSequence, durations) -> GaussianSequence:
    """Repeat each position's stats for its duration (phoneme -> frame)."""
    durs = torch.as_tensor(np.asarray(durations), dtype=torch.long, device=g.mu.device)
    if durs.ndim != 1 or durs.shape[0] != g.length:
        raise BadInputError("need one duration per position")
    if int(durs.sum()) < 1:
        raise BadInputError("cannot expand to zero frames")
    return GaussianSequence(torch.repeat_interleave(g.mu, durs, dim=1),
                            torch.repeat_interleave(g.sigma, durs, dim=1),
                            "frame")


def expand_gaussian_by_alignment(g: GaussianSequence, alignment: np.ndarray) -> GaussianSequence:
    """Frame-level stats as (phoneme stats) @ A for a binary alignment A [N, T]."""
    a = torch.as_tensor(alignment, dtype=g.mu.dtype, device=g.mu.device)
    if a.ndim != 2 or a.shape[0] != g.length:
        raise BadInputError("alignment rows must match the number of positions")
    return GaussianSequence(g.mu @ a, g.sigma @ a, "frame")
