"""Command-line interface: corpus synthesis, feature prep, training,
conversion and MCD evaluation."""

import argparse
import sys
from pathlib import Path

from . import dsp
from .convert import ConversionRequest, EvalReport, evaluate_corpus, run_conversion
from .corpus import (UtteranceRecord, generate_synthetic_corpus, prepare_features,
                     read_manifest, PhonemeVocab)
from .errors import (BadInputError, CheckpointCorruptError, ConfigMismatchError,
                     MissingCheckpointError, TrainingDivergedError)
from .labels import EMOTIONS
from .training import (TrainConfig, load_checkpoint, load_training_items,
                       parse_config_file, save_checkpoint, train_loop)

ABLATION_FLAGS = ("no_prosody_predictor", "no_prosody_alignment",
                  "no_prosody_integrator")


def _build_parser():
    parser = argparse.ArgumentParser(prog="emovc",
                                     description="Desk-scale emotional voice conversion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic parallel corpus")
    p.add_argument("--n", type=int, required=True, help="number of utterance ids")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("prepare", help="cache frame-level features for a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="feature cache directory")
    p.add_argument("--config", default=None, help="config file for framing parameters")

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--ablate", default="",
                   help="comma-separated subset of: " + ",".join(ABLATION_FLAGS))

    p = sub.add_parser("convert", help="convert audio or manifest records")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mode", choices=("fl", "vl"), required=True)
    p.add_argument("--input", required=True, help="a WAV file or a manifest")
    p.add_argument("--target-emotion", choices=EMOTIONS, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--noise-scale", type=float, default=0.667)

    p = sub.add_parser("eval-mcd", help="MCD table over parallel test pairs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("fl", "vl"), required=True)
    p.add_argument("--out", required=True, help="report TSV path")
    return parser


def _cmd_synth_corpus(args) -> int:
    manifest, records = generate_synthetic_corpus(args.n, args.seed, args.out)
    print(f"wrote {len(records)} utterances and {manifest}")
    return 0


def _frame_cfg_from(args):
    if getattr(args, "config", None):
        _, frame_cfg = parse_config_file(args.config)
        return frame_cfg
    return dsp.FrameConfig()


def _cmd_prepare(args) -> int:
    n = prepare_features(args.manifest, args.out, _frame_cfg_from(args))
    print(f"cached features for {n} records in {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg, frame_cfg = parse_config_file(args.config)
    for flag in filter(None, (s.strip() for s in args.ablate.split(","))):
        if flag not in ABLATION_FLAGS:
            raise BadInputError(f"unknown ablation flag {flag!r}")
        setattr(cfg, flag, True)
    if not cfg.manifest:
        raise BadInputError("config must set 'manifest'")
    if not cfg.out_dir:
        raise BadInputError("config must set 'out_dir'")
    manifest = Path(args.config).parent / cfg.manifest \
        if not Path(cfg.manifest).is_absolute() else Path(cfg.manifest)
    records = read_manifest(manifest)
    vocab = PhonemeVocab.from_records(records)
    items = load_training_items(records, frame_cfg, vocab,
                                cache_dir=cfg.cache_dir or None)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state, _, _ = train_loop(items, cfg, frame_cfg, vocab,
                             log_path=out_dir / "train_log.tsv")
    save_checkpoint(state, out_dir / "model.ckpt")
    print(f"trained {state.step} steps; checkpoint at {out_dir / 'model.ckpt'}")
    return 0


def _cmd_convert(args) -> int:
    state = load_checkpoint(args.ckpt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    src = Path(args.input)
    if src.suffix.lower() == ".wav":
        if args.mode == "vl":
            raise BadInputError("variable-length conversion needs phonemes; "
                                "pass a manifest instead of a bare WAV")
        record = UtteranceRecord(src.stem, src, [], "neutral", "unknown")
        records = [record]
    else:
        records = read_manifest(src)
    n = 0
    for record in records:
        req = ConversionRequest(args.mode, record, args.target_emotion,
                                noise_scale=args.noise_scale)
        wav = run_conversion(state, req)
        name = f"{record.id}_{record.emotion}_to_{args.target_emotion}_{args.mode}.wav"
        dsp.save_wav(wav, out_dir / name)
        n += 1
    print(f"converted {n} utterances into {out_dir}")
    return 0


def _cmd_eval_mcd(args) -> int:
    state = load_checkpoint(args.ckpt)
    records = read_manifest(args.manifest)
    report: EvalReport = evaluate_corpus(records, state, args.mode)
    Path(args.out).write_text(report.to_tsv(), encoding="utf-8")
    print(report.to_tsv(), end="")
    return 0


_COMMANDS = {
    "synth-corpus": _cmd_synth_corpus,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "convert": _cmd_convert,
    "eval-mcd": _cmd_eval_mcd,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (BadInputError, CheckpointCorruptError, ConfigMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
