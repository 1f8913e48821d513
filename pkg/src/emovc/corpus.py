"""Corpus handling: manifest format, phoneme vocabulary, the synthetic
parallel corpus generator and the feature-cache preparation step."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .errors import BadInputError
from .labels import EMOTIONS

MANIFEST_HEADER = "id|audio_path|phonemes|emotion|speaker"

PAD_SYMBOL = "_"

# Toy alphabet: 16 symbols, each tied to a base tone. Frequencies are spaced
# geometrically inside the F0 search band with headroom for the emotion
# pitch rules below.
TOY_PHONEMES = tuple(f"t{i:02d}" for i in range(16))
_TONE_BASE_HZ = 120.0 * (320.0 / 120.0) ** (np.arange(16) / 15.0)
_TONE_BASE_SEC = 0.055 + 0.002 * np.arange(16)

# Fixed emotion rendering rules (pitch scale, duration scale, peak amplitude,
# attack fraction). High-arousal labels raise pitch by 30%; sad lowers it.
# Tests may rely on the direction of these changes.
EMOTION_RENDER_RULES = {
    "neutral": (1.00, 1.00, 0.50, 0.30),
    "angry": (1.30, 0.75, 0.80, 0.10),
    "happy": (1.30, 0.90, 0.70, 0.20),
    "sad": (0.80, 1.25, 0.35, 0.45),
    "surprise": (1.30, 0.80, 0.75, 0.15),
}

_HARMONIC_AMPS = (1.0, 0.5, 0.25)


@dataclass
class UtteranceRecord:
    id: str
    audio_path: Path | None
    phonemes: list
    emotion: str
    speaker: str


class PhonemeVocab:
    """Fixed symbol table with a reserved pad/blank at index 0."""

    def __init__(self, symbols):
        symbols = list(symbols)
        if PAD_SYMBOL in symbols:
            raise BadInputError(f"{PAD_SYMBOL!r} is reserved for padding")
        if len(set(symbols)) != len(symbols):
            raise BadInputError("duplicate phoneme symbols")
        self.symbols = (PAD_SYMBOL, *symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_records(cls, records):
        seen = sorted({p for r in records for p in r.phonemes})
        return cls(seen)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def encode(self, phonemes) -> np.ndarray:
        try:
            return np.array([self._index[p] for p in phonemes], dtype=np.int64)
        except KeyError as exc:
            raise BadInputError(f"phoneme not in vocabulary: {exc.args[0]!r}") from None


def write_manifest(records, path) -> None:
    path = Path(path)
    lines = [MANIFEST_HEADER]
    for r in records:
        lines.append("|".join([r.id, str(r.audio_path) if r.audio_path else "",
                               " ".join(r.phonemes), r.emotion, r.speaker]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path):
    """Parse a manifest; audio paths resolve relative to the manifest file."""
    path = Path(path)
    if not path.exists():
        raise BadInputError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise BadInputError(f"manifest must start with header {MANIFEST_HEADER!r}")
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 5:
            raise BadInputError(f"{path}:{ln}: expected 5 '|'-separated fields")
        uid, audio, phonemes, emotion, speaker = (p.strip() for p in parts)
        if emotion not in EMOTIONS:
            raise BadInputError(f"{path}:{ln}: unknown emotion {emotion!r}")
        if not uid or not speaker:
            raise BadInputError(f"{path}:{ln}: empty id or speaker")
        audio_path = (path.parent / audio) if audio else None
        records.append(UtteranceRecord(uid, audio_path, phonemes.split(), emotion, speaker))
    if not records:
        raise BadInputError(f"manifest has no records: {path}")
    seen = set()
    for r in records:
        key = (r.id, r.emotion)
        if key in seen:
            raise BadInputError(f"duplicate utterance {key} in {path}")
        seen.add(key)
    return records


def render_utterance(phonemes, emotion, sample_rate=dsp.SAMPLE_RATE) -> dsp.Waveform:
    """Render a phoneme sequence under one emotion's fixed prosody rules."""
    if emotion not in EMOTION_RENDER_RULES:
        raise BadInputError(f"unknown emotion label: {emotion!r}")
    pitch, dur_scale, amp, attack = EMOTION_RENDER_RULES[emotion]
    pieces = []
    for sym in phonemes:
        try:
            k = TOY_PHONEMES.index(sym)
        except ValueError:
            raise BadInputError(f"not a toy phoneme: {sym!r}") from None
        n = int(round(_TONE_BASE_SEC[k] * dur_scale * sample_rate))
        t = np.arange(n) / sample_rate
        f0 = _TONE_BASE_HZ[k] * pitch
        tone = sum(a * np.sin(2.0 * np.pi * (m + 1) * f0 * t)
                   for m, a in enumerate(_HARMONIC_AMPS))
        tone /= sum(_HARMONIC_AMPS)
        n_attack = max(1, int(attack * n))
        env = np.ones(n)
        env[:n_attack] = np.linspace(0.0, 1.0, n_attack)
        n_rel = max(1, n // 8)
        env[-n_rel:] *= np.linspace(1.0, 0.0, n_rel)
        pieces.append(amp * env * tone)
    return dsp.Waveform(np.concatenate(pieces), sample_rate)


def generate_synthetic_corpus(n_utterances: int, seed: int, out_dir):
    """Write a parallel toy corpus: each utterance id rendered under all five
    emotions, plus a manifest. Deterministic per seed, byte for byte."""
    if n_utterances < 1:
        raise BadInputError("need at least one utterance")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for u in range(n_utterances):
        uid = f"utt{u:03d}"
        length = int(rng.integers(4, 8))
        phonemes = [TOY_PHONEMES[i] for i in rng.integers(0, len(TOY_PHONEMES), length)]
        for emotion in EMOTIONS:
            wav_name = f"{uid}_{emotion}.wav"
            dsp.save_wav(render_utterance(phonemes, emotion), out_dir / wav_name)
            records.append(UtteranceRecord(uid, out_dir / wav_name, phonemes,
                                           emotion, "spk0"))
    manifest = out_dir / "manifest.txt"
    write_manifest([UtteranceRecord(r.id, Path(r.audio_path.name), r.phonemes,
                                    r.emotion, r.speaker) for r in records], manifest)
    return manifest, records


def cache_path(cache_dir, record: UtteranceRecord) -> Path:
    return Path(cache_dir) / f"{record.id}_{record.emotion}.npz"


def prepare_features(manifest_path, cache_dir, frame_cfg: dsp.FrameConfig) -> int:
    """Compute and cache the frame-level features for every manifest record."""
    records = read_manifest(manifest_path)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    for record in records:
        if record.audio_path is None:
            raise BadInputError(f"record {record.id} has no audio to prepare")
        feats = dsp.compute_features(dsp.load_wav(record.audio_path), frame_cfg)
        dsp.save_features(feats, cache_path(cache_dir, record))
    return len(records)
