"""Audio-side prosody modeling: emotion descriptor (VAD conditioning),
speaker encoder with F0 prediction, and the posterior over latent frames."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .distributions import GaussianSequence
from .dsp import MEL_LOG_FLOOR, Waveform
from .errors import BadInputError
from .labels import EMOTIONS, emotion_index

# Fixed affine input scaling: log magnitudes span roughly [-11.5, 5.5];
# this maps them near unit range so random init behaves.
SPEC_LOG_SHIFT = 5.0
SPEC_LOG_SCALE = 4.0


def normalize_log_spec(spec: torch.Tensor) -> torch.Tensor:
    x = torch.log(torch.clamp(spec, min=MEL_LOG_FLOOR))
    return (x + SPEC_LOG_SHIFT) / SPEC_LOG_SCALE


# Placeholder valence/arousal/dominance lookup, oriented by the circumplex
# layout; pairwise distinct by construction. Callers must rely only on
# determinism and distinctness, never on the specific values.
VAD_TABLE = {
    "neutral": (0.50, 0.30, 0.50),
    "angry": (0.20, 0.90, 0.80),
    "happy": (0.90, 0.80, 0.60),
    "sad": (0.20, 0.20, 0.30),
    "surprise": (0.70, 0.90, 0.40),
}


@dataclass(frozen=True)
class VadTriple:
    valence: float
    arousal: float
    dominance: float

    def __post_init__(self):
        for v in (self.valence, self.arousal, self.dominance):
            if not 0.0 <= v <= 1.0:
                raise BadInputError(f"VAD component outside [0, 1]: {v}")

    def as_tuple(self):
        return (self.valence, self.arousal, self.dominance)


class StubVadBackend:
    """Deterministic label -> VAD lookup; stands in for an external SER."""

    def vad(self, label: str | None, waveform: Waveform | None) -> VadTriple:
        if label is None:
            raise BadInputError("stub emotion backend requires a label, not audio")
        emotion_index(label)
        return VadTriple(*VAD_TABLE[label])


class EmotionDescriptor(nn.Module):
    """VAD triple (from a pluggable backend) + label one-hot, projected to an
    utterance-level emotion embedding."""

    def __init__(self, d_model=32, backend=None):
        super().__init__()
        self.backend = backend if backend is not None else StubVadBackend()
        self.proj = nn.Linear(3 + len(EMOTIONS), d_model)

    def describe(self, label=None, waveform=None):
        if label is None and waveform is None:
            raise BadInputError("emotion descriptor needs a label or a waveform")
        vad = self.backend.vad(label, waveform)
        ref = self.proj.weight
        onehot = torch.zeros(len(EMOTIONS), dtype=ref.dtype, device=ref.device)
        if label is not None:
            onehot[emotion_index(label)] = 1.0
        feats = torch.cat([torch.tensor(vad.as_tuple(), dtype=ref.dtype,
                                        device=ref.device), onehot])
        return vad, self.proj(feats)

    def forward(self, label=None, waveform=None):
        return self.describe(label, waveform)


@dataclass
class SpeakerEmbedding:
    vector: torch.Tensor        # [d_model]
    predicted_f0: torch.Tensor  # [T] Hz, positive


class SpeakerEncoder(nn.Module):
    """Utterance-level speaker vector plus a per-frame F0 prediction head.

    All convolutions use kernel size 1 so the pooled identity vector is a
    mean over frames of a per-frame map (hence invariant to repeating the
    utterance).
    """

    def __init__(self, spec_bins, d_model=32, hidden=64):
        super().__init__()
        self.conv1 = nn.Conv1d(spec_bins, hidden, 1)
        self.conv2 = nn.Conv1d(hidden, hidden, 1)
        self.spk_proj = nn.Linear(hidden, d_model)
        self.f0_head = nn.Conv1d(hidden, 1, 1)
        # Start F0 predictions inside the speech range (exp(5) ~ 148 Hz).
        nn.init.constant_(self.f0_head.bias, 5.0)

    def forward(self, spec: torch.Tensor) -> SpeakerEmbedding:
        if spec.ndim != 2 or spec.shape[1] < 1:
            raise BadInputError("speaker encoder needs a nonempty [bins, T] spectrogram")
        x = normalize_log_spec(spec)[None]
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        vector = self.spk_proj(x[0].mean(dim=1))
        log_f0 = self.f0_head(x)[0, 0]
        return SpeakerEmbedding(vector, torch.exp(log_f0))


@dataclass
class PosteriorSample:
    z2: torch.Tensor          # [d_latent, T]
    stats: GaussianSequence   # frame-level
    noise: torch.Tensor       # the epsilon actually used


class GatedResidualBlock(nn.Module):
    """Dilated conv with gated tanh unit and global conditioning, residual."""

    def __init__(self, hidden, cond_dim, kernel_size=5, dilation=1):
        super().__init__()
        pad = (kernel_size - 1) * dilation // 2
        self.conv = nn.Conv1d(hidden, 2 * hidden, kernel_size,
                              padding=pad, dilation=dilation)
        self.cond = nn.Linear(cond_dim, 2 * hidden)
        self.res = nn.Conv1d(hidden, hidden, 1)

    def forward(self, x, g):
        y = self.conv(x) + self.cond(g)[None, :, None]
        a, b = torch.chunk(y, 2, dim=1)
        z = torch.tanh(a) * torch.sigmoid(b)
        return x + self.res(z)


class ProsodyIntegrator(nn.Module):
    """Posterior encoder: spectrogram content fused with emotion and speaker
    conditioning through gated residual blocks, projected to frame stats."""

    def __init__(self, spec_bins, d_model=32, d_latent=32, hidden=32,
                 n_blocks=2, kernel_size=5):
        super().__init__()
        self.pre = nn.Conv1d(spec_bins, hidden, 1)
        self.blocks = nn.ModuleList(
            GatedResidualBlock(hidden, 2 * d_model, kernel_size)
            for _ in range(n_blocks))
        self.proj = nn.Conv1d(hidden, 2 * d_latent, 1)
        # Zero-init stats: the posterior starts at N(0, I).
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, spec, emo, spk) -> GaussianSequence:
        x = self.pre(normalize_log_spec(spec)[None])
        g = torch.cat([emo, spk])
        for block in self.blocks:
            x = block(x, g)
        return GaussianSequence.from_projection(self.proj(x)[0], "frame")


class ConcatFusionEncoder(nn.Module):
    """Ablation variant of the integrator: conditioning is concatenated to the
    content channels and projected, with no gated fusion."""

    def __init__(self, spec_bins, d_model=32, d_latent=32, hidden=32,
                 n_blocks=2, kernel_size=5):
        super().__init__()
        pad = kernel_size // 2
        self.pre = nn.Conv1d(spec_bins, hidden, 1)
        self.fuse = nn.Conv1d(hidden + 2 * d_model, hidden, 1)
        self.conv = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.proj = nn.Conv1d(hidden, 2 * d_latent, 1)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, spec, emo, spk) -> GaussianSequence:
        x = self.pre(normalize_log_spec(spec)[None])
        g = torch.cat([emo, spk])[None, :, None].expand(1, -1, x.shape[2])
        x = F.relu(self.fuse(torch.cat([x, g], dim=1)))
        x = F.relu(self.conv(x))
        return GaussianSequence.from_projection(self.proj(x)[0], "frame")


def sample_posterior(stats: GaussianSequence, noise=None, generator=None) -> PosteriorSample:
    """Reparameterized draw z = mu + sigma * eps with the eps recorded."""
    if noise is None:
        noise = torch.randn(stats.mu.shape, generator=generator,
                            dtype=stats.mu.dtype, device=stats.mu.device)
    if noise.shape != stats.mu.shape:
        raise BadInputError("noise shape must match the posterior stats")
    return PosteriorSample(stats.mu + stats.sigma * noise, stats, noise)
