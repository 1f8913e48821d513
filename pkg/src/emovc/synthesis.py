"""Waveform synthesis and its adversarial companions: upsampling decoder,
waveform discriminators, emotion classifier, and the loss terms they feed."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import dsp
from .errors import BadInputError
from .labels import EMOTIONS

LRELU_SLOPE = 0.1


class MelExtractor(nn.Module):
    """Differentiable log-mel path mirroring the numpy front-end exactly:
    same reflect padding, periodic Hann window, filterbank and log floor."""

    def __init__(self, cfg: dsp.FrameConfig, sample_rate: int = dsp.SAMPLE_RATE):
        super().__init__()
        self.cfg = cfg
        self.sample_rate = sample_rate
        window = torch.from_numpy(dsp.hann_window(cfg.win_size))
        if cfg.win_size < cfg.fft_size:
            left = (cfg.fft_size - cfg.win_size) // 2
            window = F.pad(window, (left, cfg.fft_size - cfg.win_size - left))
        self.register_buffer("window", window.to(torch.get_default_dtype()))
        fb = torch.from_numpy(dsp.mel_filterbank(sample_rate, cfg.fft_size))
        self.register_buffer("filterbank", fb.to(torch.get_default_dtype()))

    def forward(self, samples: torch.Tensor) -> torch.Tensor:
        if samples.ndim != 1 or samples.numel() < 1:
            raise BadInputError("mel extractor needs a nonempty 1-D sample tensor")
        cfg = self.cfg
        pad = cfg.fft_size // 2 if cfg.center_pad else 0
        idx = torch.from_numpy(dsp.reflect_pad_indices(samples.numel(), pad)).to(samples.device)
        padded = samples.index_select(0, idx)
        frames = padded.unfold(0, cfg.fft_size, cfg.hop)
        mag = torch.abs(torch.fft.rfft(frames * self.window, n=cfg.fft_size, dim=1))
        mel = self.filterbank @ mag.t()
        return torch.log(torch.clamp(mel, min=dsp.MEL_LOG_FLOOR))


@dataclass
class GeneratorOutput:
    waveform: torch.Tensor       # [T_frames * hop]
    speaker: torch.Tensor        # conditioning actually used
    emotion: torch.Tensor


class Decoder(nn.Module):
    """Transposed-convolution upsampler from latent frames to samples.

    The stride product equals the hop, so T frames decode to exactly
    T * hop samples; the output is tanh-bounded.
    """

    def __init__(self, d_latent=32, d_model=32, channels=(64, 32, 16, 8),
                 strides=(8, 8, 2, 2), hop=256):
        super().__init__()
        prod = 1
        for s in strides:
            prod *= s
        if prod != hop:
            raise BadInputError(f"stride product {prod} must equal hop {hop}")
        if len(channels) != len(strides):
            raise BadInputError("need one channel width per upsampling stage")
        self.hop = hop
        self.spk_proj = nn.Linear(d_model, d_latent)
        self.emo_proj = nn.Linear(d_model, d_latent)
        self.pre = nn.Conv1d(d_latent, channels[0], 7, padding=3)
        ups, convs = [], []
        for k, stride in enumerate(strides):
            cin = channels[k]
            cout = channels[k + 1] if k + 1 < len(channels) else channels[-1]
            ups.append(nn.ConvTranspose1d(cin, cout, 2 * stride, stride,
                                          padding=stride // 2))
            convs.append(nn.Conv1d(cout, cout, 5, padding=2))
        self.ups = nn.ModuleList(ups)
        self.convs = nn.ModuleList(convs)
        self.post = nn.Conv1d(channels[-1], 1, 7, padding=3)

    def forward(self, z, spk, emo) -> GeneratorOutput:
        if z.ndim != 2:
            raise BadInputError("decoder expects a [d_latent, T] latent sequence")
        x = z + self.spk_proj(spk)[:, None] + self.emo_proj(emo)[:, None]
        x = self.pre(x[None])
        for up, conv in zip(self.ups, self.convs):
            x = F.leaky_relu(x, LRELU_SLOPE)
            x = up(x)
            x = x + conv(F.leaky_relu(x, LRELU_SLOPE))
        wave = torch.tanh(self.post(x))[0, 0]
        return GeneratorOutput(wave, spk, emo)


@dataclass
class DiscriminatorReadout:
    logits: list          # one logit tensor per sub-discriminator
    feature_maps: list    # one list of intermediate activations per sub-discriminator


class ScaleDiscriminator(nn.Module):
    """Raw-waveform conv stack."""

    def __init__(self, channels=16):
        super().__init__()
        c = channels
        self.convs = nn.ModuleList([
            nn.Conv1d(1, c, 15, stride=2, padding=7),
            nn.Conv1d(c, 2 * c, 41, stride=4, padding=20, groups=4),
            nn.Conv1d(2 * c, 2 * c, 21, stride=4, padding=10, groups=4),
        ])
        self.post = nn.Conv1d(2 * c, 1, 3, padding=1)

    def forward(self, x):
        fmap = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmap.append(x)
        return self.post(x).flatten(), fmap


class PeriodDiscriminator(nn.Module):
    """Conv stack over the waveform folded at a fixed period."""

    def __init__(self, period=2, channels=16):
        super().__init__()
        self.period = period
        c = channels
        self.convs = nn.ModuleList([
            nn.Conv2d(1, c, (5, 1), (3, 1), padding=(2, 0)),
            nn.Conv2d(c, 2 * c, (5, 1), (3, 1), padding=(2, 0)),
            nn.Conv2d(2 * c, 2 * c, (5, 1), (3, 1), padding=(2, 0)),
        ])
        self.post = nn.Conv2d(2 * c, 1, (3, 1), padding=(1, 0))

    def forward(self, x):
        t = x.shape[-1]
        if t % self.period:
            x = F.pad(x, (0, self.period - t % self.period), mode="reflect")
        x = x.view(1, 1, -1, self.period)
        fmap = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LRELU_SLOPE)
            fmap.append(x)
        return self.post(x).flatten(), fmap


class DiscriminatorEnsemble(nn.Module):
    """One raw-scale and one period-2 sub-discriminator at desk scale."""

    def __init__(self, channels=16):
        super().__init__()
        self.subs = nn.ModuleList([ScaleDiscriminator(channels),
                                   PeriodDiscriminator(2, channels)])

    def forward(self, waveform: torch.Tensor) -> DiscriminatorReadout:
        if waveform.ndim != 1 or waveform.numel() < 1:
            raise BadInputError("discriminator needs a nonempty 1-D waveform")
        logits, fmaps = [], []
        for sub in self.subs:
            score, fmap = sub(waveform[None, None])
            logits.append(score)
            fmaps.append(fmap)
        return DiscriminatorReadout(logits, fmaps)


@dataclass
class EmotionReadout:
    logits: torch.Tensor  # [5]
    feature_maps: list


class EmotionClassifier(nn.Module):
    """5-way emotion classifier over an internal log-mel front-end."""

    def __init__(self, mel: MelExtractor, hidden=32):
        super().__init__()
        self.mel = mel
        self.conv1 = nn.Conv1d(dsp.N_MELS, hidden, 5, padding=2)
        self.conv2 = nn.Conv1d(hidden, hidden, 5, stride=2, padding=2)
        self.head = nn.Linear(hidden, len(EMOTIONS))

    def forward(self, waveform: torch.Tensor) -> EmotionReadout:
        if waveform.ndim != 1 or waveform.numel() < 1:
            raise BadInputError("emotion classifier needs a nonempty 1-D waveform")
        x = self.mel(waveform)[None]
        fmap = []
        x = F.leaky_relu(self.conv1(x), LRELU_SLOPE)
        fmap.append(x)
        x = F.leaky_relu(self.conv2(x), LRELU_SLOPE)
        fmap.append(x)
        logits = self.head(x[0].mean(dim=1))
        return EmotionReadout(logits, fmap)


def adversarial_losses(real: DiscriminatorReadout, fake: DiscriminatorReadout):
    """Least-squares GAN objectives, summed over sub-discriminators.

    Returns (generator loss, discriminator loss).
    """
    if len(real.logits) != len(fake.logits):
        raise BadInputError("real/fake readouts come from different ensembles")
    loss_g = sum(torch.mean((lf - 1.0) ** 2) for lf in fake.logits)
    loss_d = sum(torch.mean((lr - 1.0) ** 2) + torch.mean(lf**2)
                 for lr, lf in zip(real.logits, fake.logits))
    return loss_g, loss_d


def feature_matching_loss(real_fm, fake_fm):
    """Per-layer mean L1 between activation stacks, summed over layers."""
    if len(real_fm) != len(fake_fm):
        raise BadInputError("feature-map structure mismatch")
    total = 0.0
    for r_layers, f_layers in zip(real_fm, fake_fm):
        if len(r_layers) != len(f_layers):
            raise BadInputError("feature-map structure mismatch")
        for r, f in zip(r_layers, f_layers):
            total = total + torch.mean(torch.abs(r - f))
    return total


def reconstruction_losses(real_mel, fake_mel, real_fm, fake_fm):
    """Mean-L1 spectrogram loss and discriminator feature-matching loss."""
    if real_mel.shape != fake_mel.shape:
        raise BadInputError("mel shape mismatch")
    recon_cls = torch.mean(torch.abs(real_mel - fake_mel))
    recon_fm = feature_matching_loss(real_fm, fake_fm)
    return recon_cls, recon_fm


def emotion_losses(read_fake: EmotionReadout, read_real: EmotionReadout,
                   target_idx: int):
    """Cross-entropy toward the target label plus classifier feature matching."""
    if not 0 <= target_idx < len(EMOTIONS):
        raise BadInputError(f"emotion index out of range: {target_idx}")
    target = torch.tensor([target_idx], device=read_fake.logits.device)
    emo_cls = F.cross_entropy(read_fake.logits[None], target)
    emo_fm = feature_matching_loss([read_real.feature_maps],
                                   [read_fake.feature_maps])
    return emo_cls, emo_fm
