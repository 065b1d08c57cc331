"""Command-line front end for the full workflow.

Exit codes: 0 success, 1 usage error (bad flags or option values),
2 data/format error (malformed or missing input files).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import datagen, epalign, metrics, tts
from .dsp import wav_read, wav_write
from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    InsufficientDataError,
    InvalidInputError,
    InvalidLabelError,
    UndefinedMetricError,
)

_DATA_ERRORS = (FormatError, InvalidInputError, DegenerateInputError,
                InvalidLabelError, UndefinedMetricError, InsufficientDataError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("error: %s\n" % message)
        sys.exit(1)


def _default_seed():
    raw = os.environ.get("EMOFORGE_SEED")
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("EMOFORGE_SEED=%r is not an integer" % raw)


def _parse_modalities(raw):
    mods = tuple(m.strip() for m in raw.split(",") if m.strip())
    for m in mods:
        if m not in epalign.MODALITIES:
            raise ConfigError("unknown modality %r (want %s)"
                              % (m, "/".join(epalign.MODALITIES)))
    if not mods:
        raise ConfigError("empty modality list")
    return mods


def _load_dataset(data_dir):
    manifest = os.path.join(data_dir, "manifest.jsonl")
    if not os.path.exists(manifest):
        raise FormatError("no manifest.jsonl under %s" % data_dir)
    return datagen.load_manifest(manifest)


def _build_parser():
    p = _Parser(prog="emoforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, metavar="COMMAND")

    g = sub.add_parser("gen-data", help="render a synthetic multimodal corpus")
    g.add_argument("--out", required=True, metavar="DIR")
    g.add_argument("--classes", type=int, default=5)
    g.add_argument("--speakers", type=int, default=4)
    g.add_argument("--per-class", type=int, default=200)
    g.add_argument("--sep", type=float, default=4.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=None)

    t = sub.add_parser("train-align", help="train the emotion-prompt alignment model")
    t.add_argument("--data", required=True, metavar="DIR")
    t.add_argument("--out", required=True, metavar="CKPT")
    t.add_argument("--modalities", default="vis,audio,tex")
    t.add_argument("--anchor", default="tex")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--seed", type=int, default=None)

    e = sub.add_parser("eval-align", help="classification report for an alignment checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, metavar="DIR")
    e.add_argument("--modalities", default=None)
    e.add_argument("--out", default="eval_align.json", metavar="JSON")

    tt = sub.add_parser("train-tts", help="train the toy synthesizer")
    tt.add_argument("--data", required=True, metavar="DIR")
    tt.add_argument("--variant", required=True, choices=tts.VARIANTS)
    tt.add_argument("--align-ckpt", required=True)
    tt.add_argument("--out", required=True, metavar="CKPT")
    tt.add_argument("--steps", type=int, default=2000)
    tt.add_argument("--batch", type=int, default=8)
    tt.add_argument("--lr", type=float, default=0.05)
    tt.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("synth", help="synthesize a waveform from text")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--align-ckpt", required=True)
    s.add_argument("--text", required=True)
    emo = s.add_mutually_exclusive_group(required=True)
    emo.add_argument("--emotion", metavar="NAME")
    emo.add_argument("--ref-features", metavar="FILE")
    s.add_argument("--speaker", type=int, default=0)
    s.add_argument("--out", required=True, metavar="WAV")

    v = sub.add_parser("eval", help="objective metrics over a pairing manifest")
    v.add_argument("--ref-dir", required=True)
    v.add_argument("--syn-dir", required=True)
    v.add_argument("--pairs", required=True, metavar="FILE")
    v.add_argument("--out", required=True, metavar="JSON")

    m = sub.add_parser("mos", help="aggregate opinion scores (one rating per line)")
    m.add_argument("--scores", required=True, metavar="FILE")
    return p


# -- subcommand bodies ---------------------------------------------------------

def _cmd_gen_data(args):
    seed = args.seed if args.seed is not None else _default_seed()
    config = datagen.CorpusConfig(n_classes=args.classes, n_speakers=args.speakers,
                                  samples_per_class=args.per_class,
                                  separation=args.sep, noise_std=args.noise, seed=seed)
    utts = datagen.gen_corpus(config, args.out)
    print("wrote %d utterances to %s" % (len(utts), args.out))
    return 0


def _cmd_train_align(args):
    seed = args.seed if args.seed is not None else _default_seed()
    dataset = _load_dataset(args.data)
    samples = epalign.samples_from_utterances(dataset)
    config = epalign.AlignTrainConfig(batch=args.batch, epochs=args.epochs, lr=args.lr,
                                      seed=seed, modalities=_parse_modalities(args.modalities),
                                      anchor=args.anchor)
    params, curve = epalign.train_epalign(samples, config)
    epalign.save_epalign(params, args.out)
    print("trained %d epochs, loss %.4f -> %.4f, checkpoint %s"
          % (len(curve), curve[0], curve[-1], args.out))
    return 0


def _cmd_eval_align(args):
    params = epalign.load_epalign(args.ckpt)
    dataset = _load_dataset(args.data)
    samples = epalign.samples_from_utterances(dataset)
    modalities = _parse_modalities(args.modalities) if args.modalities else None
    report = epalign.eval_alignment(params, samples, modalities)
    print("macro F1: %.4f  accuracy: %.4f" % (report["macro_f1"], report["accuracy"]))
    print("confusion (rows = true class):")
    for row in report["confusion"]:
        print("  " + " ".join("%5d" % n for n in row))
    with open(args.out, "w") as f:
        json.dump(report, f, indent=2)
    print("report written to %s" % args.out)
    return 0


def _cmd_train_tts(args):
    seed = args.seed if args.seed is not None else _default_seed()
    dataset = _load_dataset(args.data)
    align = epalign.load_epalign(args.align_ckpt)
    prompts = epalign.anchored_prompts(align)
    config = tts.TtsConfig(steps=args.steps, lr=args.lr, batch=args.batch, seed=seed)
    params, curve = tts.train_tts(dataset, prompts, args.variant, config)
    tts.save_tts(params, args.out)
    print("trained %s for %d steps, loss %.2f -> %.2f, checkpoint %s"
          % (args.variant, args.steps, curve[0], curve[-1], args.out))
    return 0


def _emotion_embedding(args, align):
    if args.emotion is not None:
        class_id = datagen.emotion_id(args.emotion)
        prompts = epalign.anchored_prompts(align)
        if class_id >= len(prompts):
            raise InvalidLabelError("emotion %r is class %d but the checkpoint has %d classes"
                                    % (args.emotion, class_id, len(prompts)))
        return prompts[class_id]
    try:
        with open(args.ref_features) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError("bad feature file %s: %s" % (args.ref_features, e))
    if not isinstance(raw, dict):
        raise FormatError("feature file must be a JSON object of modality -> vector")
    features = {k: np.asarray(v, dtype=np.float64) for k, v in raw.items()}
    return epalign.align_infer(features, align).u_emo


def _cmd_synth(args):
    params = tts.load_tts(args.ckpt)
    align = epalign.load_epalign(args.align_ckpt)
    u_emo = _emotion_embedding(args, align)
    u_spk = tts.speaker_one_hot(args.speaker, params.dims["n_speakers"])
    wav, _ = tts.synthesize(args.text, u_emo, u_spk, params)
    wav_write(args.out, wav)
    print("wrote %s (%d samples, %.2f s)"
          % (args.out, len(wav.samples), len(wav.samples) / wav.sample_rate))
    return 0


def _read_pairs(path):
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                raise FormatError("bad pairs line %d in %s" % (lineno, path))
            for key in ("id", "ref", "syn", "ref_text", "hyp_text"):
                if key not in row:
                    raise FormatError("pairs line %d is missing %r" % (lineno, key))
            pairs.append(row)
    if not pairs:
        raise FormatError("empty pairs file %s" % path)
    return pairs


def _cmd_eval(args):
    per_utt = []
    for row in _read_pairs(args.pairs):
        ref = wav_read(os.path.join(args.ref_dir, row["ref"]))
        syn = wav_read(os.path.join(args.syn_dir, row["syn"]))
        per_utt.append(metrics.utterance_metrics(row["id"], ref, syn,
                                                 row["ref_text"], row["hyp_text"]))
    report = metrics.aggregate_report(per_utt)
    with open(args.out, "w") as f:
        f.write(report.to_json())
    print("n_utts %d  WER %.4f  CER %.4f  MCD %.3f  SECS %.4f"
          % (report.n_utts, report.wer, report.cer, report.mcd_median, report.secs_median))
    print("report written to %s" % args.out)
    return 0


def _cmd_mos(args):
    scores = []
    with open(args.scores) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                scores.append(float(line))
            except ValueError:
                raise FormatError("bad rating on line %d of %s" % (lineno, args.scores))
    print(metrics.mos_aggregate(scores).formatted())
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-align": _cmd_train_align,
    "eval-align": _cmd_eval_align,
    "train-tts": _cmd_train_tts,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "mos": _cmd_mos,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.cmd](args)
    except ConfigError as e:
        sys.stderr.write("error: %s\n" % e)
        return 1
    except _DATA_ERRORS as e:
        sys.stderr.write("error: %s\n" % e)
        return 2
    except OSError as e:
        sys.stderr.write("error: %s\n" % e)
        return 2
