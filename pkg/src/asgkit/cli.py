"""Command-line surface: estimate -> corrupt -> train -> decode -> eval,
plus beam inspection and the randomized verification suites.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification
failure. Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import train as training
from .asg import Transitions
from .beam import BeamConfig, beam_transcriptions
from .errors import AsgKitError
from .eval import letter_error_rate, viterbi, word_error_rate
from .noise import NoiseModel, corrupt, estimate, scale
from .tokens import DEFAULT_LETTERS, Alphabet, read_transcripts, write_transcripts
from .train import (AcousticMLP, TrainConfig, Utterance, load_checkpoint,
                    read_features, save_checkpoint, train_loop)
from .verify import run_gradient_suite, run_oracle_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


def _paired_texts(hyp_path, ref_path):
    hyps = read_transcripts(hyp_path)
    refs = read_transcripts(ref_path)
    return hyps, refs


def cmd_estimate_noise(args) -> int:
    hyps, refs = _paired_texts(args.hyp, args.ref)
    pairs = []
    skipped = 0
    for uid, ref in refs.items():
        hyp = hyps.get(uid)
        if hyp is None:
            raise AsgKitError(f"no hypothesis for utterance {uid}")
        if not hyp or not ref:
            skipped += 1
            continue
        pairs.append((hyp, ref))
    if skipped:
        print(f"skipped {skipped} empty utterances", file=sys.stderr)
    model = estimate(pairs, letters=args.letters)
    if args.smooth > 0:
        probs = model.probs + args.smooth
        model = NoiseModel(model.letters, probs / probs.sum(axis=0, keepdims=True))
    if args.factor != 1.0:
        model = scale(model, args.factor)
    model.save(args.out)
    print(f"wrote noise model over {len(model.letters)} letters to {args.out}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    model = NoiseModel.load(args.noise, smooth=args.smooth)
    texts = read_transcripts(args.infile)
    seeds = np.random.SeedSequence(args.seed).spawn(len(texts))
    out = {}
    for (uid, text), seq in zip(texts.items(), seeds):
        out[uid] = corrupt(text, model, seed=seq) if text else ""
    write_transcripts(args.out, out)
    print(f"corrupted {len(out)} utterances -> {args.out}")
    return EXIT_OK


def _load_utterances(features_path, transcripts_path, alphabet) -> list[Utterance]:
    feats = read_features(features_path)
    texts = read_transcripts(transcripts_path)
    out = []
    for uid, mat in feats:
        if uid not in texts:
            raise AsgKitError(f"no transcript for utterance {uid}")
        text = texts[uid]
        if not text:
            print(f"skipping {uid}: empty transcript", file=sys.stderr)
            continue
        try:
            alphabet.encode(text)
        except (AsgKitError, ValueError) as exc:
            print(f"skipping {uid}: {exc}", file=sys.stderr)
            continue
        out.append(Utterance(uid=uid, features=mat, text=text))
    return out


def cmd_train(args) -> int:
    if args.init:
        model, trans, alphabet, _ = load_checkpoint(args.init)
    else:
        alphabet = Alphabet(letters=args.letters)
        feats = read_features(args.features)
        if not feats:
            raise AsgKitError("no feature data found")
        dim = feats[0][1].shape[1]
        model = AcousticMLP.create(dim, args.hidden, alphabet.size, seed=args.seed)
        trans = Transitions.zeros(alphabet.size)

    data = _load_utterances(args.features, args.transcripts, alphabet)
    noise_model = NoiseModel.load(args.noise) if args.noise else None
    heldout = None
    if args.heldout_features and args.heldout_transcripts:
        heldout = _load_utterances(args.heldout_features, args.heldout_transcripts, alphabet)

    cfg = TrainConfig(
        loss=args.loss,
        learning_rate=args.lr,
        transition_lr=args.transition_lr,
        grad_clip_norm=args.clip,
        batch_size=args.batch_size,
        epochs=args.epochs,
        beam=BeamConfig(beam_size=args.beam_size, alpha=args.alpha),
        seed=args.seed,
    )
    model, trans, history = train_loop(
        model, trans, data, cfg, alphabet,
        noise_model=noise_model, heldout=heldout, workers=args.workers,
    )
    save_checkpoint(args.out, model, trans, alphabet, meta={
        "loss": args.loss,
        "epochs": args.epochs,
        "seed": args.seed,
    })
    lines = [
        f"{st.epoch}\t{st.mean_loss!r}\t{st.heldout_ler!r}\t{st.beam_failures}"
        for st in history
    ]
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            fh.write("epoch\tmean_loss\theldout_ler\tbeam_failures\n")
            for line in lines:
                fh.write(line + "\n")
    for line in lines:
        print(line)
    print(f"wrote checkpoint to {args.out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    model, trans, alphabet, _ = load_checkpoint(args.ckpt)
    feats = read_features(args.features)
    out = {}
    for uid, mat in feats:
        em = model.emissions(mat)
        out[uid] = viterbi(em, trans, alphabet).transcription
    write_transcripts(args.out, out)
    print(f"decoded {len(out)} utterances -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    hyps, refs = _paired_texts(args.hyp, args.ref)
    if args.metric in ("ler", "both"):
        ler = letter_error_rate(hyps, refs)
        print(f"ler\t{ler!r}\t{100 * ler:.2f}%")
    if args.metric in ("wer", "both"):
        wer = word_error_rate(hyps, refs)
        print(f"wer\t{wer!r}\t{100 * wer:.2f}%")
    return EXIT_OK


def cmd_inspect_beam(args) -> int:
    model, trans, alphabet, _ = load_checkpoint(args.ckpt)
    noise_model = NoiseModel.load(args.noise)
    feats = dict(read_features(args.features))
    noisy = read_transcripts(args.transcripts)
    references = read_transcripts(args.reference) if args.reference else None
    cfg = BeamConfig(beam_size=args.beam_size, alpha=args.alpha)
    ids = [args.id] if args.id else list(noisy)
    for uid in ids:
        if uid not in feats or uid not in noisy:
            raise AsgKitError(f"utterance {uid} missing from features or transcripts")
        em = model.emissions(feats[uid])
        tokens = alphabet.encode(noisy[uid])
        reference = references[uid] if references else noisy[uid]
        rows = beam_transcriptions(
            tokens, em, trans, noise_model, alphabet, cfg,
            top_k=args.top_k, reference=reference,
        )
        print(f"id\t{uid}")
        print("transcription\tweight\tler")
        for row in rows:
            print(f"{row.text}\t{row.weight:.4f}\t{100 * row.ler:.1f}")
    return EXIT_OK


def _report(results) -> int:
    failed = False
    for res in results:
        print(res.line())
        failed = failed or not res.passed
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_oraclecheck(args) -> int:
    return _report(run_oracle_suite(args.instances, args.seed))


def cmd_gradcheck(args) -> int:
    return _report(run_gradient_suite(args.instances, args.seed))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asgkit",
        description="Sequence criteria for noisy transcriptions: estimate, corrupt, "
                    "train, decode, evaluate, inspect, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-noise", help="estimate a confusion model from hyp/ref pairs")
    p.add_argument("--hyp", required=True, help="hypothesis transcript file")
    p.add_argument("--ref", required=True, help="reference transcript file")
    p.add_argument("--out", required=True, help="output noise-model JSON")
    p.add_argument("--factor", type=float, default=1.0, help="error-mass multiplier")
    p.add_argument("--smooth", type=float, default=0.0, help="additive smoothing (default off)")
    p.add_argument("--letters", default=None, help="letter inventory (default: observed)")
    p.set_defaults(func=cmd_estimate_noise)

    p = sub.add_parser("corrupt", help="sample a noisy copy of a transcript file")
    p.add_argument("--noise", required=True, help="noise-model JSON")
    p.add_argument("--in", dest="infile", required=True, help="input transcript file")
    p.add_argument("--out", required=True, help="output transcript file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--smooth", type=float, default=0.0)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train the toy acoustic model")
    p.add_argument("--features", required=True, help="feature file or directory")
    p.add_argument("--transcripts", required=True, help="training transcript file")
    p.add_argument("--loss", choices=("asg", "l2g"), required=True)
    p.add_argument("--noise", default=None, help="noise-model JSON (required for l2g)")
    p.add_argument("--alpha", type=float, default=0.5, help="noise-model weight")
    p.add_argument("--beam-size", type=int, default=300)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--init", default=None, help="initial checkpoint")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--transition-lr", type=float, default=5e-4)
    p.add_argument("--clip", type=float, default=0.05, help="gradient-norm clip")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64, help="hidden units (fresh init)")
    p.add_argument("--letters", default=DEFAULT_LETTERS, help="alphabet letters (fresh init)")
    p.add_argument("--metrics", default=None, help="per-epoch TSV metrics file")
    p.add_argument("--heldout-features", default=None)
    p.add_argument("--heldout-transcripts", default=None)
    p.add_argument("--workers", type=int, default=os.cpu_count(),
                   help="utterance-level parallelism")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="Viterbi-decode features to transcripts")
    p.add_argument("--features", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=os.cpu_count())
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="letter/word error rate between transcript files")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("ler", "wer", "both"), default="both")
    p.add_argument("--workers", type=int, default=os.cpu_count(),
                   help="upper bound on utterance-level parallelism")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-beam", help="show top clean-transcription candidates")
    p.add_argument("--features", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--transcripts", required=True, help="noisy transcript file")
    p.add_argument("--noise", required=True)
    p.add_argument("--reference", default=None, help="reference transcripts for the LER column")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beam-size", type=int, default=300)
    p.add_argument("--id", default=None, help="inspect a single utterance")
    p.set_defaults(func=cmd_inspect_beam)

    p = sub.add_parser("oraclecheck", help="randomized fast-path vs oracle checks")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oraclecheck)

    p = sub.add_parser("gradcheck", help="randomized finite-difference gradient checks")
    p.add_argument("--instances", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is cmd_train and args.loss == "l2g" and not args.noise:
        parser.error("--loss l2g requires --noise")
    try:
        return args.func(args)
    except (AsgKitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
