"""Loss assembly, alternating adversarial optimization, ablation switches,
deterministic logging and checkpoint round-trips."""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .alignment import durations_from_alignment, mas, prosody_alignment_loss
from .corpus import PhonemeVocab, cache_path, read_manifest
from .errors import (BadInputError, CheckpointCorruptError, ConfigMismatchError,
                     MissingCheckpointError, TrainingDivergedError)
from .model import ConversionModel, ModelConfig
from .synthesis import (adversarial_losses, emotion_losses, reconstruction_losses)
from .text_prosody import expand_prior
from .labels import emotion_index

CHECKPOINT_VERSION = 1

LOG_FIELDS = ("step", "recon_cls", "recon_fm", "adv_G", "adv_D", "emo_cls",
              "emo_fm", "psd", "f0", "dur", "total_G", "total_D")


@dataclass
class TrainConfig:
    seed: int = 0
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    batch_size: int = 2
    steps: int = 200
    gamma: float = 45.0
    beta: float = 2.0
    gamma_final: float | None = None  # optional linear decay target
    grad_clip: float = 5.0
    no_prosody_predictor: bool = False
    no_prosody_alignment: bool = False
    no_prosody_integrator: bool = False
    d_model: int = 32
    d_latent: int = 32
    fft_blocks: int = 2
    attn_heads: int = 2
    flow_layers: int = 4
    flow_hidden: int = 32
    wn_blocks: int = 2
    wn_hidden: int = 32
    manifest: str = ""
    cache_dir: str = ""
    out_dir: str = ""

    def __post_init__(self):
        # lr 0 is allowed: it must leave parameters untouched.
        if self.lr_g < 0 or self.lr_d < 0:
            raise BadInputError("learning rates must be nonnegative")
        if self.batch_size < 1 or self.steps < 1:
            raise BadInputError("batch size and step count must be positive")
        if self.gamma <= 0 or self.beta <= 0:
            raise BadInputError("gamma and beta must be positive")


def _coerce(value: str, typ):
    text = value.strip()
    if typ is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise BadInputError(f"expected a boolean, got {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ == float | None:
        return None if text.lower() in ("none", "") else float(text)
    return text


def parse_config_file(path):
    """Flat key-value config covering TrainConfig and FrameConfig fields."""
    path = Path(path)
    if not path.exists():
        raise BadInputError(f"config file not found: {path}")
    train_fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    frame_fields = {f.name: f.type for f in dataclasses.fields(dsp.FrameConfig)}
    train_types = {"seed": int, "lr_g": float, "lr_d": float, "batch_size": int,
                   "steps": int, "gamma": float, "beta": float,
                   "gamma_final": float | None, "grad_clip": float,
                   "no_prosody_predictor": bool, "no_prosody_alignment": bool,
                   "no_prosody_integrator": bool, "d_model": int, "d_latent": int,
                   "fft_blocks": int, "attn_heads": int, "flow_layers": int,
                   "flow_hidden": int, "wn_blocks": int, "wn_hidden": int,
                   "manifest": str, "cache_dir": str, "out_dir": str}
    frame_types = {"fft_size": int, "win_size": int, "hop": int, "center_pad": bool}
    assert set(train_types) == set(train_fields) and set(frame_types) == set(frame_fields)
    train_kwargs, frame_kwargs = {}, {}
    for ln, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadInputError(f"{path}:{ln}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in train_types:
            train_kwargs[key] = _coerce(value, train_types[key])
        elif key in frame_types:
            frame_kwargs[key] = _coerce(value, frame_types[key])
        else:
            raise BadInputError(f"{path}:{ln}: unknown config key {key!r}")
    return TrainConfig(**train_kwargs), dsp.FrameConfig(**frame_kwargs)


def write_config_file(train_cfg: TrainConfig, frame_cfg: dsp.FrameConfig, path):
    lines = []
    for obj in (train_cfg, frame_cfg):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            lines.append(f"{f.name} = {'none' if v is None else v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def config_hash(train_cfg: TrainConfig, frame_cfg: dsp.FrameConfig, vocab) -> str:
    payload = {"train": dataclasses.asdict(train_cfg),
               "frame": dataclasses.asdict(frame_cfg),
               "vocab": list(vocab.symbols)}
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class LossBundle:
    recon_cls: float
    recon_fm: float
    adv_G: float
    adv_D: float
    emo_cls: float
    emo_fm: float
    psd: float
    f0: float
    dur: float
    gamma: float
    beta: float

    COMPONENTS = ("recon_cls", "recon_fm", "adv_G", "adv_D", "emo_cls",
                  "emo_fm", "psd", "f0", "dur")

    def __post_init__(self):
        for name in (*self.COMPONENTS, "gamma", "beta"):
            v = getattr(self, name)
            if v is None or not math.isfinite(v):
                raise BadInputError(f"loss component {name} is not finite: {v}")
        if self.gamma <= 0 or self.beta <= 0:
            raise BadInputError("gamma and beta must be positive")


def assemble_generator_loss(b: LossBundle):
    """Weighted reconstruction plus the remaining generator-side terms."""
    return (b.gamma * b.recon_cls + b.beta * b.recon_fm + b.adv_G
            + b.emo_cls + b.emo_fm + b.psd + b.f0 + b.dur)


def assemble_discriminator_loss(b: LossBundle, emo_real_ce: float = 0.0):
    """Adversarial discriminator loss plus the emotion classifier's
    cross-entropy on real audio (weight 1)."""
    return b.adv_D + emo_real_ce


def f0_and_duration_losses(pred_f0, track: dsp.F0Track, pred_logdur, mas_dur):
    """L2 on log-Hz over voiced frames; L2 on log-durations.

    The F0 mean over an all-unvoiced utterance is defined as zero.
    """
    if pred_f0.shape[0] != track.f0.shape[0]:
        raise BadInputError("predicted and reference F0 lengths differ")
    if pred_logdur.shape[0] != len(mas_dur):
        raise BadInputError("predicted and reference duration lengths differ")
    voiced = torch.from_numpy(np.asarray(track.voiced, dtype=bool))
    if bool(voiced.any()):
        ref = torch.from_numpy(track.f0[track.voiced]).to(pred_f0.dtype)
        l_f0 = torch.mean((torch.log(pred_f0[voiced]) - torch.log(ref)) ** 2)
    else:
        l_f0 = pred_f0.sum() * 0.0
    ref_dur = torch.as_tensor(np.asarray(mas_dur), dtype=pred_logdur.dtype)
    l_dur = torch.mean((pred_logdur - torch.log(ref_dur)) ** 2)
    return l_f0, l_dur


@dataclass
class TrainItem:
    record: object
    ids: torch.Tensor
    emotion: str
    emotion_idx: int
    speaker: str
    wave: torch.Tensor      # [n_samples]
    spec: torch.Tensor      # [bins, T]
    logmel: torch.Tensor    # [80, T]
    track: dsp.F0Track
    n_frames: int


def load_training_items(records, frame_cfg: dsp.FrameConfig, vocab: PhonemeVocab,
                        cache_dir=None):
    items = []
    for record in records:
        if record.audio_path is None:
            raise BadInputError(f"record {record.id} has no audio")
        wav = dsp.load_wav(record.audio_path)
        feats = None
        if cache_dir:
            p = cache_path(cache_dir, record)
            if p.exists():
                feats = dsp.load_features(p)
        if feats is None:
            feats = dsp.compute_features(wav, frame_cfg)
        dt = torch.get_default_dtype()
        items.append(TrainItem(
            record=record,
            ids=torch.from_numpy(vocab.encode(record.phonemes)),
            emotion=record.emotion,
            emotion_idx=emotion_index(record.emotion),
            speaker=record.speaker,
            wave=torch.from_numpy(wav.samples).to(dt),
            spec=torch.from_numpy(feats.linear).to(dt),
            logmel=torch.from_numpy(feats.logmel).to(dt),
            track=dsp.F0Track(feats.f0, feats.voiced),
            n_frames=feats.n_frames,
        ))
    return items


def build_model(cfg: TrainConfig, frame_cfg: dsp.FrameConfig,
                vocab: PhonemeVocab) -> ConversionModel:
    mcfg = ModelConfig(vocab_size=vocab.size, d_model=cfg.d_model,
                       d_latent=cfg.d_latent, spec_bins=frame_cfg.n_bins,
                       fft_blocks=cfg.fft_blocks, attn_heads=cfg.attn_heads,
                       flow_layers=cfg.flow_layers, flow_hidden=cfg.flow_hidden,
                       wn_blocks=cfg.wn_blocks, wn_hidden=cfg.wn_hidden,
                       hop=frame_cfg.hop,
                       simple_fusion=cfg.no_prosody_integrator)
    model = ConversionModel(mcfg, frame_cfg)
    return apply_ablation(cfg, model)


def apply_ablation(cfg: TrainConfig, model: ConversionModel) -> ConversionModel:
    """Apply the ablation switches. Must run before optimizers are created."""
    model.prosody_enabled = not cfg.no_prosody_predictor
    model.psd_weight = 0.0 if cfg.no_prosody_alignment else 1.0
    if cfg.no_prosody_integrator and not model.cfg.simple_fusion:
        raise BadInputError("no_prosody_integrator requires a model built with "
                            "simple_fusion (use build_model)")
    return model


@dataclass
class TrainState:
    model: ConversionModel
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    config: TrainConfig
    frame_cfg: dsp.FrameConfig
    vocab: PhonemeVocab
    noise_gen: torch.Generator
    step: int = 0
    speaker_means: dict = None
    last_real_ce: float = 0.0  # emotion-classifier CE on real audio, for total_D


def init_training(cfg: TrainConfig, frame_cfg: dsp.FrameConfig,
                  vocab: PhonemeVocab) -> TrainState:
    torch.manual_seed(cfg.seed)
    model = build_model(cfg, frame_cfg, vocab)
    opt_g = torch.optim.Adam(model.generator_parameters(), lr=cfg.lr_g,
                             betas=(0.8, 0.99))
    opt_d = torch.optim.Adam(model.discriminator_parameters(), lr=cfg.lr_d,
                             betas=(0.8, 0.99))
    gen = torch.Generator()
    gen.manual_seed(cfg.seed + 1)
    return TrainState(model, opt_g, opt_d, cfg, frame_cfg, vocab, gen,
                      speaker_means={})


def _gamma_at(cfg: TrainConfig, step: int) -> float:
    if cfg.gamma_final is None:
        return cfg.gamma
    frac = min(1.0, step / max(1, cfg.steps))
    return cfg.gamma + (cfg.gamma_final - cfg.gamma) * frac


def _check_finite(step, **named):
    for name, value in named.items():
        if not math.isfinite(value):
            raise TrainingDivergedError(name, step)


def _generator_path(model: ConversionModel, item: TrainItem, eps: torch.Tensor):
    """Shared forward pass: audio analysis, posterior sampling, decoding."""
    _, emo, spk = model.analyze_audio(item.spec, item.emotion)
    post = model.posterior(item.spec, emo, spk.vector, noise=eps)
    out = model.decoder(post.z2, spk.vector, emo)
    return emo, spk, post, out


def train_step(batch, state: TrainState) -> LossBundle:
    """One discriminator update followed by one generator update.

    The generator forward pass is shared: the discriminator update sees the
    detached fake, the generator losses then go through the freshly updated
    discriminator.
    """
    model = state.model
    cfg = state.config
    step = state.step + 1
    gamma = _gamma_at(cfg, step)

    forwards = []
    for item in batch:
        eps = torch.randn(model.cfg.d_latent, item.n_frames,
                          generator=state.noise_gen)
        emo, spk, post, out = _generator_path(model, item, eps)
        forwards.append((item, emo, spk, post, out))

    # -- Discriminator side -------------------------------------------------
    adv_d_acc, real_ce_acc = 0.0, 0.0
    for item, _, _, _, out in forwards:
        fake = out.waveform[: item.wave.shape[0]].detach()
        real_read = model.discriminators(item.wave)
        fake_read = model.discriminators(fake)
        _, adv_d = adversarial_losses(real_read, fake_read)
        real_emo = model.emotion_classifier(item.wave)
        real_ce = torch.nn.functional.cross_entropy(
            real_emo.logits[None], torch.tensor([item.emotion_idx]))
        adv_d_acc = adv_d_acc + adv_d
        real_ce_acc = real_ce_acc + real_ce
    adv_d_acc = adv_d_acc / len(batch)
    real_ce_acc = real_ce_acc / len(batch)
    loss_d = adv_d_acc + real_ce_acc
    state.last_real_ce = float(real_ce_acc.detach())
    _check_finite(step, adv_D=float(adv_d_acc.detach()),
                  emo_real_ce=state.last_real_ce)
    state.opt_d.zero_grad()
    loss_d.backward()
    torch.nn.utils.clip_grad_norm_(model.discriminator_parameters(), cfg.grad_clip)
    state.opt_d.step()

    # -- Generator side -----------------------------------------------------
    acc = {k: 0.0 for k in LossBundle.COMPONENTS if k != "adv_D"}
    for item, emo, spk, post, out in forwards:
        fake = out.waveform[: item.wave.shape[0]]
        with torch.no_grad():
            real_read = model.discriminators(item.wave)
            real_emo = model.emotion_classifier(item.wave)
        fake_read = model.discriminators(fake)
        adv_g, _ = adversarial_losses(real_read, fake_read)
        fake_mel = model.mel(out.waveform)[:, : item.n_frames]
        recon_cls, recon_fm = reconstruction_losses(
            item.logmel, fake_mel, real_read.feature_maps, fake_read.feature_maps)
        fake_emo = model.emotion_classifier(fake)
        emo_cls, emo_fm = emotion_losses(fake_emo, real_emo, item.emotion_idx)

        tp = model.text_prior(item.ids, item.emotion)
        with torch.no_grad():
            u_aligned, _ = model.flow(post.z2)
        align = mas(u_aligned, tp.prior)
        durations = durations_from_alignment(align)
        if model.psd_weight != 0.0:
            frame_prior = expand_prior(tp.prior, durations=durations)
            psd = prosody_alignment_loss(post, frame_prior, model.flow) * model.psd_weight
        else:
            psd = out.waveform.sum() * 0.0
        l_f0, l_dur = f0_and_duration_losses(spk.predicted_f0, item.track,
                                             tp.log_durations, durations)
        for key, val in (("recon_cls", recon_cls), ("recon_fm", recon_fm),
                         ("adv_G", adv_g), ("emo_cls", emo_cls),
                         ("emo_fm", emo_fm), ("psd", psd), ("f0", l_f0),
                         ("dur", l_dur)):
            acc[key] = acc[key] + val
    for key in acc:
        acc[key] = acc[key] / len(batch)

    values = {k: float(acc[k].detach()) for k in acc}
    values["adv_D"] = float(adv_d_acc.detach())
    _check_finite(step, **values)
    bundle = LossBundle(gamma=gamma, beta=cfg.beta, **values)

    loss_g = (gamma * acc["recon_cls"] + cfg.beta * acc["recon_fm"] + acc["adv_G"]
              + acc["emo_cls"] + acc["emo_fm"] + acc["psd"] + acc["f0"] + acc["dur"])
    state.opt_g.zero_grad()
    loss_g.backward()
    torch.nn.utils.clip_grad_norm_(model.generator_parameters(), cfg.grad_clip)
    state.opt_g.step()

    state.step = step
    return bundle


def format_log_line(bundle: LossBundle, step: int, emo_real_ce: float) -> str:
    total_g = assemble_generator_loss(bundle)
    total_d = assemble_discriminator_loss(bundle, emo_real_ce)
    values = [str(step)] + [f"{getattr(bundle, k):.9e}" for k in LossBundle.COMPONENTS]
    values += [f"{total_g:.9e}", f"{total_d:.9e}"]
    return "\t".join(values)


def compute_speaker_means(model: ConversionModel, items) -> dict:
    means, counts = {}, {}
    with torch.no_grad():
        for item in items:
            vec = model.speaker_encoder(item.spec).vector
            if item.speaker in means:
                means[item.speaker] += vec
                counts[item.speaker] += 1
            else:
                means[item.speaker] = vec.clone()
                counts[item.speaker] = 1
    return {s: means[s] / counts[s] for s in means}


def train_loop(items, cfg: TrainConfig, frame_cfg: dsp.FrameConfig,
               vocab: PhonemeVocab, log_path=None):
    """Run cfg.steps alternating updates; returns (state, bundles, log lines)."""
    if not items:
        raise BadInputError("no training items")
    state = init_training(cfg, frame_cfg, vocab)
    order_rng = np.random.default_rng(cfg.seed)
    order = []
    bundles, lines = [], []
    # Tensors here are tiny; intra-op threading costs more than it buys and
    # single-threaded execution keeps the loss stream reproducible.
    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for _ in range(cfg.steps):
            while len(order) < cfg.batch_size:
                order.extend(order_rng.permutation(len(items)).tolist())
            batch = [items[i] for i in order[: cfg.batch_size]]
            del order[: cfg.batch_size]
            bundle = train_step(batch, state)
            bundles.append(bundle)
            lines.append(format_log_line(bundle, state.step, state.last_real_ce))
        state.speaker_means = compute_speaker_means(state.model, items)
    finally:
        torch.set_num_threads(prev_threads)
    if log_path is not None:
        header = "\t".join(LOG_FIELDS)
        Path(log_path).write_text(header + "\n" + "\n".join(lines) + "\n",
                                  encoding="utf-8")
    return state, bundles, lines


def save_checkpoint(state: TrainState, path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": config_hash(state.config, state.frame_cfg, state.vocab),
        "train_config": dataclasses.asdict(state.config),
        "frame_config": dataclasses.asdict(state.frame_cfg),
        "vocab": list(state.vocab.symbols),
        "step": state.step,
        "model_state": state.model.state_dict(),
        "opt_g_state": state.opt_g.state_dict(),
        "opt_d_state": state.opt_d.state_dict(),
        "noise_gen_state": state.noise_gen.get_state(),
        "speaker_means": state.speaker_means or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_config: TrainConfig | None = None,
                    expected_frame: dsp.FrameConfig | None = None) -> TrainState:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointCorruptError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointCorruptError(f"unrecognized checkpoint format in {path}")
    cfg_dict = dict(payload["train_config"])
    cfg = TrainConfig(**cfg_dict)
    frame_cfg = dsp.FrameConfig(**payload["frame_config"])
    symbols = payload["vocab"]
    vocab = PhonemeVocab(symbols[1:])
    if payload["config_hash"] != config_hash(cfg, frame_cfg, vocab):
        raise CheckpointCorruptError(f"checkpoint {path} fails its own hash")
    if expected_config is not None or expected_frame is not None:
        want = config_hash(expected_config or cfg, expected_frame or frame_cfg, vocab)
        if want != payload["config_hash"]:
            raise ConfigMismatchError(
                "checkpoint configuration differs from the requested one")
    state = init_training(cfg, frame_cfg, vocab)
    try:
        state.model.load_state_dict(payload["model_state"])
        state.opt_g.load_state_dict(payload["opt_g_state"])
        state.opt_d.load_state_dict(payload["opt_d_state"])
        state.noise_gen.set_state(payload["noise_gen_state"])
    except Exception as exc:
        raise CheckpointCorruptError(f"checkpoint {path} does not fit its "
                                     f"declared architecture: {exc}") from exc
    state.step = int(payload["step"])
    state.speaker_means = dict(payload["speaker_means"])
    return state
