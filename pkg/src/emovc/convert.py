"""Run-time conversion: the fixed-length audio path, the variable-length
text path, and the MCD evaluation over parallel test pairs."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .alignment import durations_from_alignment  # noqa: F401  (re-export for callers)
from .corpus import UtteranceRecord
from .errors import BadInputError
from .labels import PAIR_NAMES, TARGET_EMOTIONS, emotion_index
from .text_prosody import decode_durations, expand_prior
from .training import TrainState

DEFAULT_NOISE_SCALE = 0.667


@dataclass
class ConversionRequest:
    mode: str                      # "fl" | "vl"
    source: UtteranceRecord
    target_emotion: str
    noise_scale: float = DEFAULT_NOISE_SCALE

    def __post_init__(self):
        if self.mode not in ("fl", "vl"):
            raise BadInputError(f"conversion mode must be 'fl' or 'vl', got {self.mode!r}")
        emotion_index(self.target_emotion)
        if self.mode == "fl" and self.source.audio_path is None:
            raise BadInputError("fixed-length conversion requires source audio")
        if self.mode == "vl" and not self.source.phonemes:
            raise BadInputError("variable-length conversion requires phonemes")


def _spec_tensor(wav: dsp.Waveform, frame_cfg) -> torch.Tensor:
    mag = dsp.linear_spectrogram(wav, frame_cfg).mag
    return torch.from_numpy(mag).to(torch.get_default_dtype())


def convert_fl(state: TrainState, source_wav: dsp.Waveform,
               target_emotion: str) -> dsp.Waveform:
    """Audio -> posterior latent -> audio, frame count preserved exactly.

    Inference is deterministic: the posterior is taken at its mean.
    """
    model = state.model
    spec = _spec_tensor(source_wav, state.frame_cfg)
    with torch.no_grad():
        _, emo, spk = model.analyze_audio(spec, target_emotion)
        post = model.posterior(spec, emo, spk.vector,
                               noise=torch.zeros(model.cfg.d_latent, spec.shape[1]))
        out = model.decoder(post.z2, spk.vector, emo)
    return dsp.Waveform(out.waveform.numpy().astype(np.float64),
                        source_wav.sample_rate)


def convert_vl(state: TrainState, phonemes, target_emotion: str,
               source_wav: dsp.Waveform | None = None, speaker: str | None = None,
               noise_scale: float = DEFAULT_NOISE_SCALE) -> dsp.Waveform:
    """Text -> flow prior -> audio, with predicted durations.

    The speaker vector comes from the source audio when given, else from the
    per-speaker averages stored at training time.
    """
    model = state.model
    with torch.no_grad():
        if source_wav is not None:
            spk_vec = model.speaker_encoder(
                _spec_tensor(source_wav, state.frame_cfg)).vector
        else:
            means = state.speaker_means or {}
            if speaker is None and len(means) == 1:
                speaker = next(iter(means))
            if speaker not in means:
                raise BadInputError(
                    f"no stored speaker average for {speaker!r}; give source audio")
            spk_vec = means[speaker]
        _, emo = model.emotion_descriptor.describe(target_emotion)
        ids = torch.from_numpy(state.vocab.encode(phonemes))
        tp = model.text_prior(ids, target_emotion)
        durations = decode_durations(tp.log_durations)
        frame_prior = expand_prior(tp.prior, durations=durations)
        eps = torch.randn(frame_prior.mu.shape, generator=state.noise_gen) \
            if noise_scale else torch.zeros(frame_prior.mu.shape)
        u = frame_prior.mu + noise_scale * frame_prior.sigma * eps
        z = model.flow.inverse(u)
        out = model.decoder(z, spk_vec, emo)
    return dsp.Waveform(out.waveform.numpy().astype(np.float64),
                        model.cfg.sample_rate)


def run_conversion(state: TrainState, request: ConversionRequest) -> dsp.Waveform:
    if request.mode == "fl":
        return convert_fl(state, dsp.load_wav(request.source.audio_path),
                          request.target_emotion)
    source_wav = dsp.load_wav(request.source.audio_path) \
        if request.source.audio_path else None
    return convert_vl(state, request.source.phonemes, request.target_emotion,
                      source_wav=source_wav, speaker=request.source.speaker,
                      noise_scale=request.noise_scale)


@dataclass
class EvalReport:
    """Mean MCD per neutral->target emotion pair."""

    pairs: dict = field(default_factory=dict)  # pair name -> (mean dB, count)

    def to_tsv(self) -> str:
        names = [PAIR_NAMES[e] for e in TARGET_EMOTIONS]
        header = "\t".join(names)
        values = "\t".join(
            f"{self.pairs[n][0]:.4f}" if n in self.pairs else "nan" for n in names)
        return header + "\n" + values + "\n"


def evaluate_corpus(records, state: TrainState, mode: str) -> EvalReport:
    """Convert every neutral utterance to each target emotion and score MCD
    against the true recording of that emotion (parallel ids)."""
    if mode not in ("fl", "vl"):
        raise BadInputError(f"mode must be 'fl' or 'vl', got {mode!r}")
    by_key = {(r.id, r.emotion): r for r in records}
    neutrals = [r for r in records if r.emotion == "neutral"]
    if not neutrals:
        raise BadInputError("no neutral utterances to convert")
    sums = {e: 0.0 for e in TARGET_EMOTIONS}
    counts = {e: 0 for e in TARGET_EMOTIONS}
    for src in neutrals:
        for emotion in TARGET_EMOTIONS:
            ref = by_key.get((src.id, emotion))
            if ref is None or ref.audio_path is None:
                raise BadInputError(
                    f"missing parallel pair ({src.id}, {emotion}) for evaluation")
            req = ConversionRequest(mode, src, emotion, noise_scale=0.0)
            converted = run_conversion(state, req)
            ref_wav = dsp.load_wav(ref.audio_path)
            sums[emotion] += dsp.mcd(ref_wav, converted, state.frame_cfg)
            counts[emotion] += 1
    report = EvalReport()
    for emotion in TARGET_EMOTIONS:
        if counts[emotion]:
            report.pairs[PAIR_NAMES[emotion]] = (sums[emotion] / counts[emotion],
                                                 counts[emotion])
    return report
