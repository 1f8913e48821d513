"""The full conversion model: every learned component under one module so
training, checkpointing and the two run-time paths share parameters."""

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .audio_prosody import (ConcatFusionEncoder, EmotionDescriptor,
                            ProsodyIntegrator, SpeakerEncoder, sample_posterior)
from .alignment import FlowStack
from .dsp import FrameConfig, SAMPLE_RATE
from .errors import BadInputError
from .labels import emotion_index
from .synthesis import Decoder, DiscriminatorEnsemble, EmotionClassifier, MelExtractor
from .text_prosody import (DurationPredictor, PriorProjector, ProsodyPredictor,
                           TextEncoder)


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    d_latent: int = 32
    spec_bins: int = 513
    fft_blocks: int = 2
    attn_heads: int = 2
    text_ff_hidden: int = 64
    prosody_hidden: int = 64
    duration_hidden: int = 64
    flow_layers: int = 4
    flow_hidden: int = 32
    wn_blocks: int = 2
    wn_hidden: int = 32
    wn_kernel: int = 5
    decoder_channels: tuple = (32, 16, 8, 8)
    upsample_strides: tuple = (8, 8, 2, 2)
    disc_channels: int = 16
    classifier_hidden: int = 32
    hop: int = 256
    sample_rate: int = SAMPLE_RATE
    simple_fusion: bool = False  # ablation: concat instead of gated fusion

    def __post_init__(self):
        if self.d_latent % 2:
            raise BadInputError("d_latent must be even (the flow splits channels)")


@dataclass
class TextPrior:
    hidden: torch.Tensor       # [d_model, N]
    prosody: torch.Tensor      # [d_model, N]
    prior: "object"            # phoneme-level GaussianSequence
    log_durations: torch.Tensor  # [N]


class ConversionModel(nn.Module):
    def __init__(self, cfg: ModelConfig, frame_cfg: FrameConfig | None = None):
        super().__init__()
        self.cfg = cfg
        frame_cfg = frame_cfg or FrameConfig(hop=cfg.hop)
        if frame_cfg.n_bins != cfg.spec_bins:
            raise BadInputError("spec_bins must match the frame config fft size")
        self.text_encoder = TextEncoder(cfg.vocab_size, cfg.d_model,
                                        cfg.fft_blocks, cfg.attn_heads,
                                        cfg.text_ff_hidden)
        self.prosody_predictor = ProsodyPredictor(cfg.d_model, cfg.prosody_hidden)
        self.duration_predictor = DurationPredictor(cfg.d_model, cfg.duration_hidden)
        self.prior_proj = PriorProjector(cfg.d_model, cfg.d_latent)
        self.emotion_descriptor = EmotionDescriptor(cfg.d_model)
        self.speaker_encoder = SpeakerEncoder(cfg.spec_bins, cfg.d_model)
        integrator_cls = ConcatFusionEncoder if cfg.simple_fusion else ProsodyIntegrator
        self.integrator = integrator_cls(cfg.spec_bins, cfg.d_model, cfg.d_latent,
                                         cfg.wn_hidden, cfg.wn_blocks, cfg.wn_kernel)
        self.flow = FlowStack(cfg.d_latent, cfg.flow_layers, cfg.flow_hidden)
        self.decoder = Decoder(cfg.d_latent, cfg.d_model, cfg.decoder_channels,
                               cfg.upsample_strides, cfg.hop)
        self.mel = MelExtractor(frame_cfg, cfg.sample_rate)
        self.discriminators = DiscriminatorEnsemble(cfg.disc_channels)
        self.emotion_classifier = EmotionClassifier(self.mel, cfg.classifier_hidden)
        # Runtime switches set by apply_ablation.
        self.prosody_enabled = True
        self.psd_weight = 1.0

    def generator_parameters(self):
        skip = {id(p) for p in self.discriminator_parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def discriminator_parameters(self):
        return list(self.discriminators.parameters()) + \
            list(self.emotion_classifier.parameters())

    def text_prior(self, ids: torch.Tensor, emotion: str) -> TextPrior:
        h = self.text_encoder(ids)
        if self.prosody_enabled:
            prosody = self.prosody_predictor(h, emotion_index(emotion))
        else:
            emotion_index(emotion)
            prosody = torch.zeros_like(h)
        prior = self.prior_proj(h, prosody)
        log_dur = self.duration_predictor(h, prosody)
        return TextPrior(h, prosody, prior, log_dur)

    def analyze_audio(self, spec: torch.Tensor, emotion: str | None = None,
                      waveform=None):
        vad, emo = self.emotion_descriptor.describe(emotion, waveform)
        spk = self.speaker_encoder(spec)
        return vad, emo, spk

    def posterior(self, spec, emo, spk_vector, noise=None, generator=None):
        stats = self.integrator(spec, emo, spk_vector)
        return sample_posterior(stats, noise, generator)
