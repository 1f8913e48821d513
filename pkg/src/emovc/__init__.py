"""Desk-scale end-to-end emotional voice conversion.

A conditional VAE with a normalizing-flow prior: text-side prosody
prediction, audio-side prosody modeling, monotonic alignment between them,
and adversarial waveform synthesis, plus the DSP front-end and an MCD
evaluation harness.
"""

from .dsp import (FrameConfig, Waveform, dtw, extract_f0, linear_spectrogram,
                  load_wav, mcd, mel_cepstra, mel_from_linear, save_wav)
from .labels import EMOTIONS
from .corpus import (PhonemeVocab, UtteranceRecord, generate_synthetic_corpus,
                     read_manifest, write_manifest)
from .training import (LossBundle, TrainConfig, assemble_discriminator_loss,
                       assemble_generator_loss, load_checkpoint, save_checkpoint,
                       train_loop)
from .convert import ConversionRequest, convert_fl, convert_vl, evaluate_corpus

__all__ = [
    "EMOTIONS", "FrameConfig", "Waveform", "dtw", "extract_f0",
    "linear_spectrogram", "load_wav", "mcd", "mel_cepstra", "mel_from_linear",
    "save_wav", "PhonemeVocab", "UtteranceRecord", "generate_synthetic_corpus",
    "read_manifest", "write_manifest", "LossBundle", "TrainConfig",
    "assemble_discriminator_loss", "assemble_generator_loss", "load_checkpoint",
    "save_checkpoint", "train_loop", "ConversionRequest", "convert_fl",
    "convert_vl", "evaluate_corpus",
]
