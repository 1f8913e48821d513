"""Text-side prosody modeling: phoneme encoder, emotion-conditioned prosody
and duration predictors, and the phoneme-level prior projection."""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .distributions import GaussianSequence, expand_gaussian, expand_gaussian_by_alignment
from .errors import BadInputError
from .labels import EMOTIONS


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel axis of a [C, T] sequence."""

    def __init__(self, channels):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        return F.layer_norm(x.transpose(0, 1), self.gamma.shape,
                            self.gamma, self.beta).transpose(0, 1)


def sinusoidal_positions(length, dim, dtype, device):
    pos = torch.arange(length, dtype=dtype, device=device)[:, None]
    div = torch.exp(torch.arange(0, dim, 2, dtype=dtype, device=device)
                    * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype, device=device)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


class FFTBlock(nn.Module):
    """Self-attention plus a 1-d convolutional feed-forward, both residual."""

    def __init__(self, d_model, n_heads, ff_hidden, kernel_size=3):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, n_heads, batch_first=True)
        self.norm1 = nn.LayerNorm(d_model)
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(d_model, ff_hidden, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(ff_hidden, d_model, kernel_size, padding=pad)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x):  # [N, d]
        attn, _ = self.attn(x[None], x[None], x[None], need_weights=False)
        x = self.norm1(x + attn[0])
        ff = self.conv2(F.relu(self.conv1(x.t()[None])))[0].t()
        return self.norm2(x + ff)


class TextEncoder(nn.Module):
    """Phoneme embedding + sinusoidal positions + stacked FFT blocks."""

    def __init__(self, vocab_size, d_model=32, n_blocks=2, n_heads=2, ff_hidden=64):
        super().__init__()
        self.vocab_size = vocab_size
        self.embed = nn.Embedding(vocab_size, d_model)
        self.blocks = nn.ModuleList(
            FFTBlock(d_model, n_heads, ff_hidden) for _ in range(n_blocks))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.ndim != 1 or ids.numel() < 1:
            raise BadInputError("phoneme id sequence must be 1-D and nonempty")
        if int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size:
            raise BadInputError("phoneme id out of vocabulary")
        x = self.embed(ids)
        x = x + sinusoidal_positions(x.shape[0], x.shape[1], x.dtype, x.device)
        for block in self.blocks:
            x = block(x)
        return x.t()  # [d_model, N]


class ProsodyPredictor(nn.Module):
    """Predicts per-phoneme prosody features from text hidden states and a
    discrete emotion label (added as a learned embedding)."""

    def __init__(self, d_model=32, hidden=64, kernel_size=5):
        super().__init__()
        pad = kernel_size // 2
        self.emotion_embed = nn.Embedding(len(EMOTIONS), d_model)
        self.conv1 = nn.Conv1d(d_model, hidden, kernel_size, padding=pad)
        self.norm1 = ChannelLayerNorm(hidden)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.norm2 = ChannelLayerNorm(hidden)
        self.proj = nn.Conv1d(hidden, d_model, 1)

    def forward(self, h: torch.Tensor, emotion_idx: int) -> torch.Tensor:
        if not 0 <= emotion_idx < len(EMOTIONS):
            raise BadInputError(f"emotion index out of range: {emotion_idx}")
        idx = torch.tensor(emotion_idx, device=h.device)
        x = h + self.emotion_embed(idx)[:, None]
        x = self.norm1(F.relu(self.conv1(x[None])[0]))
        x = self.norm2(F.relu(self.conv2(x[None])[0]))
        return self.proj(x[None])[0]  # [d_model, N]


class PriorProjector(nn.Module):
    """Projects concat(text hidden, prosody) to phoneme-level (mu, log-sigma)."""

    def __init__(self, d_model=32, d_latent=32):
        super().__init__()
        self.proj = nn.Conv1d(2 * d_model, 2 * d_latent, 1)

    def forward(self, h, prosody) -> GaussianSequence:
        stats = self.proj(torch.cat([h, prosody], dim=0)[None])[0]
        return GaussianSequence.from_projection(stats, "phoneme")


class DurationPredictor(nn.Module):
    """Log-domain frame counts per phoneme from text hidden + prosody."""

    def __init__(self, d_model=32, hidden=64, kernel_size=3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(2 * d_model, hidden, kernel_size, padding=pad)
        self.norm1 = ChannelLayerNorm(hidden)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.norm2 = ChannelLayerNorm(hidden)
        self.proj = nn.Conv1d(hidden, 1, 1)

    def forward(self, h, prosody) -> torch.Tensor:
        x = torch.cat([h, prosody], dim=0)[None]
        x = self.norm1(F.relu(self.conv1(x)[0]))
        x = self.norm2(F.relu(self.conv2(x[None])[0]))
        return self.proj(x[None])[0, 0]  # [N] log-durations


def decode_durations(log_durations: torch.Tensor) -> np.ndarray:
    """Inference-time decode: at least one frame per phoneme."""
    frames = np.round(np.exp(log_durations.detach().cpu().numpy()))
    return np.maximum(1, frames).astype(np.int64)


def expand_prior(g: GaussianSequence, durations=None, alignment=None) -> GaussianSequence:
    """Phoneme-level prior to frame level, by durations or by alignment matrix."""
    if g.level != "phoneme":
        raise BadInputError("expand_prior expects phoneme-level stats")
    if (durations is None) == (alignment is None):
        raise BadInputError("pass exactly one of durations or alignment")
    if alignment is not None:
        return expand_gaussian_by_alignment(g, alignment)
    return expand_gaussian(g, durations)
