"""Command-line front end.

Subcommands: synth, vad, embed, train-plda, diarize, score. Exit status is
0 on success, 1 on usage errors and 2 on data errors. Every subcommand
accepts ``--config FILE`` with flat ``key = value`` lines whose keys are
option names (``n-frames = 200``); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .annot import format_rttm, parse_rttm
from .audio import frame_signal, read_wav
from .changepoint import LANGUAGE_PARAMS, SPEAKER_PARAMS, ChangePointParams
from .diarize import (
    changepoint_diarize,
    front_end,
    labels_to_annotation,
    read_label_file,
    uniform_diarize,
)
from .embed import load_external_embeddings, sliding_embeddings, write_embeddings, write_feature_matrix
from .errors import DiarError
from .metrics import eer, score_corpus
from .score import PldaScorer, length_normalize, load_plda, save_plda, train_plda
from .synth import SynthParams, generate_dataset, load_pool, toy_pools
from .vad import energy_vad, short_term_energy

logger = logging.getLogger("langdiar")

TASK_DEFAULTS = {"ld": LANGUAGE_PARAMS, "sd": SPEAKER_PARAMS}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_usage()}")


def read_config(path) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _expand_inputs(paths: Sequence[str], suffix: str) -> List[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            out.extend(sorted(os.path.join(p, n) for n in os.listdir(p) if n.lower().endswith(suffix)))
        else:
            out.append(p)
    if not out:
        raise UsageError(f"no {suffix} inputs found in {list(paths)}")
    return out


def _add_common(p):
    p.add_argument("--config", help="flat key=value file with option defaults")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_frontend(p):
    p.add_argument("--frame-ms", type=float, default=20.0, help="frame length (ms)")
    p.add_argument("--shift-ms", type=float, default=10.0, help="frame shift (ms)")
    p.add_argument("--vad-ratio", type=float, default=0.06, help="VAD threshold as a fraction of mean frame energy")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="langdiar", description="Language/speaker diarization toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic code-switch corpus")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--toy", action="store_true", help="use the built-in artificial languages")
    src.add_argument("--pool-a", help="directory of mono-class WAVs for class A")
    p.add_argument("--pool-b", help="directory of mono-class WAVs for class B")
    p.add_argument("--label-a", default="A")
    p.add_argument("--label-b", default="B")
    p.add_argument("--num", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-changes", type=int, default=1)
    p.add_argument("--max-changes", type=int, default=5)
    p.add_argument("--seg-min", type=float, default=3.5)
    p.add_argument("--seg-max", type=float, default=6.5)
    p.add_argument("--crossfade-ms", type=float, default=0.0)
    p.add_argument("--ratio", type=float, help="A:B mean segment duration ratio (e.g. 4 for 4:1)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("vad", help="energy VAD: per-frame mask and voiced-segment RTTM")
    _add_common(p)
    _add_frontend(p)
    p.add_argument("--input", required=True, help="WAV file")
    p.add_argument("--mask-out", help="write one 0/1 per frame (default: stdout)")
    p.add_argument("--rttm-out", help="write voiced segments as RTTM")

    p = sub.add_parser("embed", help="sliding-window embeddings from a WAV")
    _add_common(p)
    _add_frontend(p)
    p.add_argument("--input", help="WAV file")
    p.add_argument("--external", help="validate an externally produced embeddings file instead")
    p.add_argument("--n-frames", type=int, default=200)
    p.add_argument("--shift", type=int, help="window shift in frames (default n-frames/4)")
    p.add_argument("--dump-features", help="also write the voiced 39-dim features here")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-plda", help="train a two-covariance PLDA model")
    _add_common(p)
    _add_frontend(p)
    p.add_argument("--input", nargs="+", help="WAV files or directories")
    p.add_argument("--embeddings", nargs="+", help="embedding files (file stem = utterance id)")
    p.add_argument("--ref", required=True, help="RTTM giving the class of each embedding")
    p.add_argument("--n-frames", type=int, default=200)
    p.add_argument("--shift", type=int)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("diarize", help="run a diarization pipeline")
    _add_common(p)
    _add_frontend(p)
    p.add_argument("--method", choices=("change", "cluster", "labels"), required=True)
    p.add_argument("--input", nargs="+", required=True, help="WAVs, label files, or directories of them")
    p.add_argument("--out", required=True, help="output RTTM")
    p.add_argument("--task", choices=("ld", "sd"), default="ld", help="selects default alpha/delta/gamma/N")
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-frames", type=int)
    p.add_argument("--shift", type=int, help="cluster window shift in frames (default n-frames/4)")
    p.add_argument("--num-clusters", type=int, default=2)
    p.add_argument("--plda", help="PLDA model file; cosine scoring when omitted")
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--embeddings", help="directory of external embeddings (<utt>.emb) for --method cluster")
    p.add_argument("--label-vocab", default="P,S", help="speech labels accepted by --method labels")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("score", help="DER/JER/accuracy/confusion (and EER)")
    _add_common(p)
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--step-ms", type=float, default=10.0)
    p.add_argument("--labels", help="EER trials: lines of '<score> <0|1>'")
    return parser


def _apply_config(sub: argparse.ArgumentParser, config: Dict[str, str], path) -> None:
    known = {a.dest: a for a in sub._actions}
    for key, value in config.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"{path}: unknown option {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            parsed = value.lower() in ("1", "true", "yes", "on")
        else:
            conv = action.type or str
            try:
                parsed = [conv(v) for v in value.split()] if action.nargs else conv(value)
            except ValueError:
                raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
            if action.choices is not None and parsed not in action.choices:
                raise UsageError(f"{path}: {key} must be one of {sorted(action.choices)}")
        sub.set_defaults(**{key: parsed})
        action.required = False  # the file supplies it; a flag still overrides


def parse_args(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # find --config before the full parse so it can supply required options
    pre = _Parser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if known.config and known.command in subparsers:
        try:
            config = read_config(known.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        _apply_config(subparsers[known.command], config, known.config)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_help())
    return args


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.toy:
        pool_a, pool_b = toy_pools(args.seed, labels=(args.label_a, args.label_b))
    else:
        if not args.pool_b:
            raise UsageError("--pool-a requires --pool-b")
        pool_a, pool_b = load_pool(args.pool_a, args.label_a), load_pool(args.pool_b, args.label_b)
    params = SynthParams(
        args.min_changes, args.max_changes, args.seg_min, args.seg_max,
        args.num, args.seed, args.crossfade_ms, args.ratio,
    )
    entries = generate_dataset(pool_a, pool_b, params, args.out, jobs=args.jobs)
    total = sum(e.duration for e in entries)
    print(f"UTTERANCES={len(entries)}")
    print(f"TOTAL_SECONDS={total:.3f}")
    print(f"OUT={args.out}")
    return 0


def cmd_vad(args) -> int:
    audio = read_wav(args.input)
    frames = frame_signal(audio, args.frame_ms, args.shift_ms)
    mask = energy_vad(short_term_energy(frames), args.vad_ratio, args.shift_ms)
    text = "".join("1\n" if f else "0\n" for f in mask.flags)
    if args.mask_out:
        with open(args.mask_out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.rttm_out:
        with open(args.rttm_out, "w") as fh:
            fh.write(format_rttm([mask.to_annotation(audio.id, audio.duration)]))
    print(f"VOICED_FRAMES={mask.num_voiced}", file=sys.stderr)
    print(f"TOTAL_FRAMES={len(mask)}", file=sys.stderr)
    return 0


def _window_shift(args) -> int:
    return args.shift if args.shift else max(1, args.n_frames // 4)


def _utterance_embeddings(path, args):
    audio = read_wav(path)
    fe = front_end(audio, args.frame_ms, args.shift_ms, args.vad_ratio)
    seq = sliding_embeddings(fe.voiced, args.n_frames, _window_shift(args), index_map=fe.index_map)
    return audio, fe, seq


def cmd_embed(args) -> int:
    if args.external:
        seq = load_external_embeddings(args.external)
    elif args.input:
        _, fe, seq = _utterance_embeddings(args.input, args)
        if args.dump_features:
            write_feature_matrix(args.dump_features, fe.voiced, fe.index_map)
    else:
        raise UsageError("embed needs --input or --external")
    write_embeddings(args.out, seq)
    print(f"EMBEDDINGS={len(seq)}")
    print(f"DIM={seq.dim}")
    return 0


def cmd_train_plda(args) -> int:
    refs = parse_rttm(args.ref)
    sequences = []
    if args.embeddings:
        for path in args.embeddings:
            uid = os.path.splitext(os.path.basename(path))[0]
            sequences.append((uid, load_external_embeddings(path)))
    elif args.input:
        for path in _expand_inputs(args.input, ".wav"):
            audio, _, seq = _utterance_embeddings(path, args)
            sequences.append((audio.id, seq))
    else:
        raise UsageError("train-plda needs --input or --embeddings")
    vectors, labels = [], []
    for uid, seq in sequences:
        if uid not in refs:
            logger.warning("%s: not in reference, skipped", uid)
            continue
        times = seq.centers * seq.shift_ms / 1000.0
        for vec, lab in zip(seq.vectors, refs[uid].label_at(times)):
            if lab != "sil":
                vectors.append(vec)
                labels.append(lab)
    if not vectors:
        raise DiarError("no labeled embeddings to train on")
    x = np.array(vectors)
    if args.length_norm:
        x = length_normalize(x)
    model = train_plda(x, labels)
    save_plda(args.out, model)
    print(f"TRAINED_ON={len(vectors)}")
    print(f"CLASSES={len(set(labels))}")
    print(f"DIM={model.dim}")
    return 0


def _diarize_one(task):
    method, path, opts = task
    if method == "labels":
        uid = os.path.splitext(os.path.basename(path))[0]
        return labels_to_annotation(read_label_file(path), uid, opts["vocab"])
    audio = read_wav(path)
    scorer = PldaScorer(load_plda(opts["plda"]), opts["length_norm"]) if opts["plda"] else None
    common = dict(
        scorer=scorer, num_clusters=opts["num_clusters"], vad_ratio=opts["vad_ratio"],
        frame_len_ms=opts["frame_ms"], shift_ms=opts["shift_ms"],
    )
    if method == "change":
        return changepoint_diarize(audio, opts["params"], **common)
    embeddings = None
    if opts["embeddings"]:
        embeddings = load_external_embeddings(os.path.join(opts["embeddings"], audio.id + ".emb"))
    return uniform_diarize(audio, opts["params"].n, opts["shift"], embeddings=embeddings, **common)


def cmd_diarize(args) -> int:
    base = TASK_DEFAULTS[args.task]
    params = ChangePointParams(
        alpha=args.alpha if args.alpha is not None else base.alpha,
        delta=args.delta if args.delta is not None else base.delta,
        gamma=args.gamma if args.gamma is not None else base.gamma,
        n=args.n_frames if args.n_frames is not None else base.n,
    )
    if args.num_clusters < 1:
        raise UsageError("--num-clusters must be >= 1")
    suffix = ".lab" if args.method == "labels" else ".wav"
    paths = _expand_inputs(args.input, suffix)
    opts = dict(
        params=params, shift=args.shift or max(1, params.n // 4), num_clusters=args.num_clusters,
        plda=args.plda, length_norm=args.length_norm, vad_ratio=args.vad_ratio,
        frame_ms=args.frame_ms, shift_ms=args.shift_ms, embeddings=args.embeddings,
        vocab=tuple(v for v in args.label_vocab.split(",") if v),
    )
    tasks = [(args.method, p, opts) for p in paths]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            annotations = list(ex.map(_diarize_one, tasks))
    else:
        annotations = [_diarize_one(t) for t in tasks]
    with open(args.out, "w") as fh:
        fh.write(format_rttm(annotations))
    print(f"UTTERANCES={len(annotations)}")
    print(f"OUT={args.out}")
    return 0


def _read_trials(path):
    scores, labels = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            try:
                scores.append(float(fields[0]))
                labels.append(int(fields[1]))
            except (ValueError, IndexError):
                raise DiarError(f"{path}:{lineno}: expected '<score> <0|1>'") from None
    return scores, labels


def cmd_score(args) -> int:
    refs, hyps = parse_rttm(args.ref), parse_rttm(args.hyp)
    report = score_corpus(refs, hyps, args.collar, args.step_ms)
    if args.labels:
        report.eer = eer(*_read_trials(args.labels))
    print(report.format_table())
    print()
    for line in report.key_values():
        print(line)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "vad": cmd_vad,
    "embed": cmd_embed,
    "train-plda": cmd_train_plda,
    "diarize": cmd_diarize,
    "score": cmd_score,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DiarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
