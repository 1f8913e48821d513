"""Deterministic DSP front-end: audio I/O, spectrograms, F0, cepstra, DTW, MCD.

Everything here is pure numpy (no learned parameters) and shared by the
neural modules, the synthetic-corpus generator and the evaluation harness.
"""

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .errors import BadInputError

SAMPLE_RATE = 22050
N_MELS = 80
MEL_LOG_FLOOR = 1e-5
N_CEPSTRA = 13

F0_MIN_HZ = 50.0
F0_MAX_HZ = 600.0
F0_VOICING_THRESHOLD = 0.3

# 10*sqrt(2)/ln(10); cepstral distance in dB over coefficients 1..13.
MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)


@dataclass
class Waveform:
    """Mono audio in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise BadInputError("waveform must be a nonempty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise BadInputError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size


@dataclass
class FrameConfig:
    """STFT framing parameters shared by every frame-level feature."""

    fft_size: int = 1024
    win_size: int = 1024
    hop: int = 256
    center_pad: bool = True

    def __post_init__(self):
        if not (0 < self.hop <= self.win_size <= self.fft_size):
            raise BadInputError("need 0 < hop <= win_size <= fft_size")

    def n_frames(self, n_samples: int) -> int:
        if not self.center_pad:
            return max(0, (n_samples - self.win_size) // self.hop + 1)
        return n_samples // self.hop + 1

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


def load_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file and normalize samples to [-1, 1]."""
    path = Path(path)
    if not path.exists():
        raise BadInputError(f"audio file not found: {path}")
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise BadInputError(f"mono required: {path}")
            if fh.getsampwidth() != 2:
                raise BadInputError(f"16-bit PCM required: {path}")
            n = fh.getnframes()
            if n < 1:
                raise BadInputError(f"empty audio: {path}")
            raw = fh.readframes(n)
            rate = fh.getframerate()
    except wave.Error as exc:
        raise BadInputError(f"unsupported encoding in {path}: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def save_wav(w: Waveform, path) -> None:
    """Write a waveform as 16-bit PCM mono WAV."""
    clipped = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def reflect_pad_indices(n: int, pad: int) -> np.ndarray:
    """Source indices for reflect padding (no edge duplication), any pad width.

    Shared with the differentiable spectrogram path so that both compute the
    exact same padded signal.
    """
    j = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(j)
    period = 2 * n - 2
    m = np.mod(j, period)
    return np.where(m < n, m, period - m)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def frame_signal(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Slice a signal into [n_frames, fft_size] frames with center padding."""
    x = np.asarray(samples, dtype=np.float64)
    pad = cfg.fft_size // 2 if cfg.center_pad else 0
    padded = x[reflect_pad_indices(x.size, pad)] if pad else x
    n_frames = cfg.n_frames(x.size)
    if n_frames < 1:
        raise BadInputError("signal shorter than one analysis frame")
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    return padded[idx]


@dataclass
class LinearSpectrogram:
    mag: np.ndarray  # [fft_size//2+1, n_frames], nonnegative
    sample_rate: int
    cfg: FrameConfig

    @property
    def n_frames(self) -> int:
        return self.mag.shape[1]


@dataclass
class MelSpectrogram:
    logmel: np.ndarray  # [N_MELS, n_frames], natural log, floored

    @property
    def n_frames(self) -> int:
        return self.logmel.shape[1]


@dataclass
class F0Track:
    f0: np.ndarray      # per-frame Hz, 0 where unvoiced
    voiced: np.ndarray  # per-frame bool


@dataclass
class CepstraSequence:
    coeffs: np.ndarray  # [N_CEPSTRA, n_frames], coefficients 1..13


def linear_spectrogram(w: Waveform, cfg: FrameConfig) -> LinearSpectrogram:
    """Magnitude STFT with a periodic Hann window and center-reflect padding."""
    frames = frame_signal(w.samples, cfg)
    window = hann_window(cfg.win_size)
    if cfg.win_size < cfg.fft_size:
        left = (cfg.fft_size - cfg.win_size) // 2
        window = np.pad(window, (left, cfg.fft_size - cfg.win_size - left))
    mag = np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1))
    return LinearSpectrogram(mag.T, w.sample_rate, cfg)


def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular, area-normalized mel filterbank over 0 Hz .. sr/2."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        lo, ctr, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lo) / (ctr - lo)
        falling = (hi - bin_freqs) / (hi - ctr)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling)) * (2.0 / (hi - lo))
    return fb


def mel_from_linear(s: LinearSpectrogram) -> MelSpectrogram:
    """80-band log-mel: ln(max(filterbank @ mag, floor))."""
    fb = mel_filterbank(s.sample_rate, s.cfg.fft_size)
    return MelSpectrogram(np.log(np.maximum(fb @ s.mag, MEL_LOG_FLOOR)))


def extract_f0(w: Waveform, cfg: FrameConfig) -> F0Track:
    """Frame-wise F0 by normalized autocorrelation with parabolic refinement.

    Search band 50-600 Hz; a frame is voiced iff the normalized peak is at
    least 0.3. Simple by design: pure tones in band are recovered within a
    fraction of a Hz, which is all the rest of the system relies on.
    """
    frames = frame_signal(w.samples, cfg)
    if cfg.win_size < cfg.fft_size:
        off = (cfg.fft_size - cfg.win_size) // 2
        frames = frames[:, off:off + cfg.win_size]
    win = cfg.win_size
    lag_min = int(math.ceil(w.sample_rate / F0_MAX_HZ))
    lag_max = int(math.floor(w.sample_rate / F0_MIN_HZ))
    lag_max = min(lag_max, win - 2)

    frames = frames - frames.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(frames, n=2 * win, axis=1)
    acf = np.fft.irfft(spec.real**2 + spec.imag**2, axis=1)[:, : lag_max + 2]

    n_frames = frames.shape[0]
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        r = acf[t]
        if r[0] < 1e-10:
            continue
        rn = r / r[0]
        # Only in-band local maxima qualify; a boundary ramp is not a pitch.
        band = rn[lag_min : lag_max + 1]
        local = (band > rn[lag_min - 1 : lag_max]) & (band >= rn[lag_min + 1 : lag_max + 2])
        if not local.any():
            continue
        candidates = np.nonzero(local)[0]
        k = lag_min + int(candidates[np.argmax(band[candidates])])
        if rn[k] < F0_VOICING_THRESHOLD:
            continue
        # Parabolic interpolation around the integer peak.
        a, b, c = rn[k - 1], rn[k], rn[k + 1]
        denom = a - 2.0 * b + c
        delta = 0.0 if abs(denom) < 1e-12 else 0.5 * (a - c) / denom
        lag = np.clip(k + np.clip(delta, -0.5, 0.5),
                      w.sample_rate / F0_MAX_HZ, w.sample_rate / F0_MIN_HZ)
        voiced[t] = True
        f0[t] = w.sample_rate / lag
    return F0Track(f0, voiced)


def mel_cepstra(w: Waveform, cfg: FrameConfig) -> CepstraSequence:
    """Mel-cepstral coefficients 1..13: orthonormal DCT-II of the log-mel."""
    logmel = mel_from_linear(linear_spectrogram(w, cfg)).logmel
    coeffs = scipy.fft.dct(logmel, type=2, norm="ortho", axis=0)
    return CepstraSequence(coeffs[1 : N_CEPSTRA + 1])


def dtw(a: CepstraSequence, b: CepstraSequence):
    """Minimal-cost monotone alignment with steps {(1,0),(0,1),(1,1)}.

    Cost is the sum of Euclidean frame distances over the cells of the path,
    each cell counted once; symmetric in its arguments by construction.

    Returns (path, cost) where path is a list of (i, j) index pairs from
    (0, 0) to (Ta-1, Tb-1).
    """
    xa, xb = a.coeffs, b.coeffs
    ta, tb = xa.shape[1], xb.shape[1]
    if ta == 0 or tb == 0:
        raise BadInputError("dtw requires nonempty sequences")
    diff = xa.T[:, None, :] - xb.T[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))

    cum = np.full((ta, tb), np.inf)
    cum[0, 0] = d[0, 0]
    for i in range(1, ta):
        cum[i, 0] = cum[i - 1, 0] + d[i, 0]
    for j in range(1, tb):
        cum[0, j] = cum[0, j - 1] + d[0, j]
    for i in range(1, ta):
        for j in range(1, tb):
            cum[i, j] = d[i, j] + min(cum[i - 1, j - 1], cum[i - 1, j], cum[i, j - 1])

    path = [(ta - 1, tb - 1)]
    i, j = ta - 1, tb - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # Tie-break toward the diagonal, then toward advancing i.
            best = min(cum[i - 1, j - 1], cum[i - 1, j], cum[i, j - 1])
            if cum[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif cum[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path, float(cum[ta - 1, tb - 1])


def mcd(ref: Waveform, conv: Waveform, cfg: FrameConfig | None = None) -> float:
    """Mel-cepstral distortion in dB over DTW-aligned frames.

    (10*sqrt(2)/ln 10) * mean over aligned frame pairs of the Euclidean
    distance between cepstral coefficients 1..13.
    """
    if ref.sample_rate != conv.sample_rate:
        raise BadInputError("sample-rate mismatch between reference and converted audio")
    cfg = cfg or FrameConfig()
    ca = mel_cepstra(ref, cfg)
    cb = mel_cepstra(conv, cfg)
    path, _ = dtw(ca, cb)
    dists = [np.linalg.norm(ca.coeffs[:, i] - cb.coeffs[:, j]) for i, j in path]
    return MCD_CONSTANT * float(np.mean(dists))


@dataclass
class UtteranceFeatures:
    """Cached frame-level features for one utterance."""

    linear: np.ndarray    # [n_bins, T]
    logmel: np.ndarray    # [N_MELS, T]
    f0: np.ndarray        # [T]
    voiced: np.ndarray    # [T] bool
    cepstra: np.ndarray   # [N_CEPSTRA, T]
    sample_rate: int
    hop: int

    @property
    def n_frames(self) -> int:
        return self.linear.shape[1]


def compute_features(w: Waveform, cfg: FrameConfig) -> UtteranceFeatures:
    """Run the full front-end once; all outputs share the same frame count."""
    spec = linear_spectrogram(w, cfg)
    mel = mel_from_linear(spec)
    track = extract_f0(w, cfg)
    ceps = scipy.fft.dct(mel.logmel, type=2, norm="ortho", axis=0)[1 : N_CEPSTRA + 1]
    return UtteranceFeatures(spec.mag, mel.logmel, track.f0, track.voiced,
                             ceps, w.sample_rate, cfg.hop)


def save_features(feats: UtteranceFeatures, path) -> None:
    np.savez(path, linear=feats.linear, logmel=feats.logmel, f0=feats.f0,
             voiced=feats.voiced, cepstra=feats.cepstra,
             sample_rate=np.int64(feats.sample_rate), hop=np.int64(feats.hop))


def load_features(path) -> UtteranceFeatures:
    with np.load(path) as z:
        return UtteranceFeatures(z["linear"], z["logmel"], z["f0"], z["voiced"],
                                 z["cepstra"], int(z["sample_rate"]), int(z["hop"]))
