"""Command-line driver for the alignment / priors / decoding pipeline.

All subcommands read an optional `key = value` config file; command-line
flags override config entries, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .align import (
    TransitionModel,
    estimate_gaussians,
    linear_segmentation,
    load_gaussians,
    read_alignments,
    realign_corpus,
    save_gaussians,
    write_alignments,
)
from .config import Config
from .features import read_features
from .lexicon import Lexicon, build_prefix_tree
from .ngram import load_arpa
from .phones import PhonemeInventory
from .priors import ContextPriors, estimate_priors
from .scoring import AcousticScales, table_scorer_from_file
from .search import BeamConfig, brute_force_decode, decode
from .targets import LSPolicy, smooth_targets, write_targets
from .wer import EvalCounts, wer


def _read_transcripts(path: str | Path) -> list[tuple[str, tuple[str, ...]]]:
    items = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        items.append((parts[0], tuple(parts[1:])))
    return items


def _config(args) -> Config:
    if getattr(args, "config", None):
        return Config.load(args.config)
    return Config()


def _pick(flag, cfg: Config, key: str, default, kind=float):
    if flag is not None:
        return flag
    if kind is float:
        return cfg.get_float(key, default)
    if kind is int:
        return cfg.get_int(key, default)
    if kind is bool:
        return cfg.get_bool(key, default)
    return cfg.get_str(key, default)


def _scales(args, cfg: Config) -> AcousticScales:
    return AcousticScales(
        gamma_left=_pick(args.gamma_left, cfg, "am.gamma_left", 1.0),
        gamma_center=_pick(args.gamma_center, cfg, "am.gamma_center", 1.0),
        gamma_right=_pick(args.gamma_right, cfg, "am.gamma_right", 1.0),
    )


def _transitions(args, cfg: Config) -> TransitionModel:
    base = TransitionModel()
    return TransitionModel(
        speech_loop=cfg.get_float("transition.speech_loop", base.speech_loop),
        speech_forward=cfg.get_float("transition.speech_forward", base.speech_forward),
        silence_loop=cfg.get_float("transition.silence_loop", base.silence_loop),
        silence_forward=cfg.get_float("transition.silence_forward", base.silence_forward),
        beta=_pick(args.beta, cfg, "transition.beta", base.beta),
    )


def _beam(args, cfg: Config) -> BeamConfig:
    return BeamConfig(
        beam_logwidth=_pick(args.beam, cfg, "decode.beam_logwidth", 200.0),
        max_hyps=_pick(args.max_hyps, cfg, "decode.max_hyps", 50_000, int),
        word_end_beam=_pick(args.word_end_beam, cfg, "decode.word_end_beam", 200.0),
    )


def _decode_corpus(args, mode_override: Optional[str] = None):
    cfg = _config(args)
    inventory = PhonemeInventory.from_file(args.phones)
    lexicon = Lexicon.from_file(args.lexicon, inventory)
    tree = build_prefix_tree(lexicon)
    priors = ContextPriors.load(args.priors, inventory)
    lm = load_arpa(args.lm) if args.lm else None
    alpha = _pick(args.alpha, cfg, "lm.alpha", 1.0)
    scales = _scales(args, cfg)
    transitions = _transitions(args, cfg)
    beam = _beam(args, cfg)
    mode = mode_override or _pick(args.mode, cfg, "decode.mode", "tri", str)
    post_dir = Path(args.posteriors_dir)
    utts = sorted(p.stem for p in post_dir.glob("*.fhpd"))
    if not utts:
        raise FileNotFoundError(f"no .fhpd posterior dumps in {post_dir}")
    return cfg, inventory, lexicon, tree, priors, lm, alpha, scales, transitions, beam, mode, post_dir, utts


def cmd_flatstart_align(args) -> int:
    inventory = PhonemeInventory.from_file(args.phones)
    lexicon = Lexicon.from_file(args.lexicon, inventory)
    items = []
    for utt_id, words in _read_transcripts(args.transcripts):
        feats = read_features(Path(args.features_dir) / f"{utt_id}.ft")
        items.append((utt_id, linear_segmentation(feats, words, lexicon)))
    write_alignments(args.out, items, inventory)
    print(f"linear segmentation of {len(items)} utterances -> {args.out}")
    return 0


def cmd_train_mono(args) -> int:
    inventory = PhonemeInventory.from_file(args.phones)
    items = read_alignments(args.alignments, inventory)
    corpus = [
        (read_features(Path(args.features_dir) / f"{utt_id}.ft"), alignment)
        for utt_id, alignment in items
    ]
    model = estimate_gaussians(corpus, inventory, variance_floor=args.variance_floor)
    save_gaussians(args.out, model)
    print(f"monophone Gaussians for {inventory.num_center_states} center states -> {args.out}")
    return 0


def cmd_realign(args) -> int:
    cfg = _config(args)
    inventory = PhonemeInventory.from_file(args.phones)
    lexicon = Lexicon.from_file(args.lexicon, inventory)
    items = read_alignments(args.alignments, inventory)
    corpus = [
        (read_features(Path(args.features_dir) / f"{utt_id}.ft"), alignment)
        for utt_id, alignment in items
    ]
    floor = _pick(args.variance_floor, cfg, "align.variance_floor", 1e-4)
    if args.model:
        model = load_gaussians(args.model, inventory)
    else:
        model = estimate_gaussians(corpus, inventory, variance_floor=floor)
    transitions = _transitions(args, cfg)
    allow_silence = cfg.get_bool("align.allow_silence", not args.no_silence)
    aligns, scores = realign_corpus(
        corpus, model, transitions, args.iterations, lexicon, allow_silence=allow_silence
    )
    for i, s in enumerate(scores, 1):
        print(f"iteration {i}: total log score {s:.6f}")
    write_alignments(args.out, [(u, a) for (u, _), a in zip(items, aligns)], inventory)
    if args.model_out:
        final = estimate_gaussians(
            [(f, a) for (f, _), a in zip(corpus, aligns)], inventory, variance_floor=floor
        )
        save_gaussians(args.model_out, final)
    print(f"realigned {len(aligns)} utterances -> {args.out}")
    return 0


def cmd_estimate_priors(args) -> int:
    cfg = _config(args)
    inventory = PhonemeInventory.from_file(args.phones)
    items = read_alignments(args.alignments, inventory)
    floor = _pick(args.floor, cfg, "priors.floor", 1e-8)
    priors = estimate_priors([a for _, a in items], inventory, floor=floor)
    priors.save(args.out)
    print(f"priors over {sum(a.num_frames for _, a in items)} frames -> {args.out}")
    return 0


def cmd_gen_targets(args) -> int:
    cfg = _config(args)
    inventory = PhonemeInventory.from_file(args.phones)
    items = read_alignments(args.alignments, inventory)
    policy = LSPolicy(
        epsilon=_pick(args.epsilon, cfg, "targets.epsilon", 0.2),
        left=cfg.get_bool("targets.smooth_left", not args.hard_left),
        center=cfg.get_bool("targets.smooth_center", args.smooth_center),
        right=cfg.get_bool("targets.smooth_right", not args.hard_right),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for utt_id, alignment in items:
        write_targets(out_dir / f"{utt_id}.fhtg", smooth_targets(alignment, inventory, policy))
    print(f"targets for {len(items)} utterances -> {out_dir}")
    return 0


def cmd_decode(args) -> int:
    (cfg, inventory, lexicon, tree, priors, lm, alpha, scales,
     transitions, beam, mode, post_dir, utts) = _decode_corpus(args)
    batched = args.cache != "off"
    lines = []
    trace_lines = []
    for utt_id in utts:
        scorer = table_scorer_from_file(post_dir / f"{utt_id}.fhpd")
        result = decode(
            scorer, priors, scales, transitions, lm, alpha, tree, beam,
            mode=mode, batch_scoring=batched,
        )
        lines.append(result.serialize(utt_id))
        if args.trace:
            for t in range(result.n_frames):
                trace_lines.append(
                    f"{utt_id}\t{t}\t{result.per_frame_hypotheses[t]}\t"
                    f"{result.per_frame_active_pairs[t]}\t{result.per_frame_active_labels[t]}"
                )
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.trace:
        header = "# utt\tframe\thypotheses\tactive_pairs\tactive_labels"
        Path(args.trace).write_text("\n".join([header] + trace_lines) + "\n", encoding="utf-8")
    print(f"decoded {len(utts)} utterances ({mode} mode) -> {args.out}")
    return 0


def cmd_oracle_decode(args) -> int:
    (cfg, inventory, lexicon, tree, priors, lm, alpha, scales,
     transitions, beam, mode, post_dir, utts) = _decode_corpus(args)
    lines = []
    for utt_id in utts:
        scorer = table_scorer_from_file(post_dir / f"{utt_id}.fhpd")
        words, score = brute_force_decode(
            scorer, priors, scales, transitions, lm, alpha, lexicon,
            max_words=args.max_words, mode=mode,
        )
        lines.append(f"{utt_id} {score:.17g} {' '.join(words)}".rstrip())
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"exhaustively decoded {len(utts)} utterances -> {args.out}")
    return 0


def _read_hyp(path: str | Path, scored: bool) -> dict[str, tuple[str, ...]]:
    out = {}
    for utt_id, fields in _read_transcripts(path):
        out[utt_id] = fields[1:] if scored else fields
    return out


def cmd_score_wer(args) -> int:
    refs = dict(_read_transcripts(args.ref))
    hyps = _read_hyp(args.hyp, scored=args.scored)
    total = EvalCounts()
    for utt_id, ref_words in refs.items():
        hyp_words = hyps.get(utt_id, ())
        counts = wer(ref_words, hyp_words)
        total = total + counts
        if args.per_utt:
            print(
                f"{utt_id} WER {counts.wer:.4f} "
                f"(S={counts.substitutions} D={counts.deletions} I={counts.insertions} "
                f"N={counts.reference_length})"
            )
    print(
        f"WER {total.wer:.4f} (S={total.substitutions} D={total.deletions} "
        f"I={total.insertions} N={total.reference_length})"
    )
    return 0


def cmd_bench(args) -> int:
    (cfg, inventory, lexicon, tree, priors, lm, alpha, scales,
     transitions, beam, mode, post_dir, utts) = _decode_corpus(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = {"on": (True,), "off": (False,), "both": (True, False)}[args.cache]
    for batched in modes:
        tag = "cached" if batched else "naive"
        lines = []
        frames = conditions = naive = batch_calls = 0
        wall = 0.0
        for utt_id in utts:
            scorer = table_scorer_from_file(post_dir / f"{utt_id}.fhpd")
            result = decode(
                scorer, priors, scales, transitions, lm, alpha, tree, beam,
                mode=mode, batch_scoring=batched,
            )
            lines.append(result.serialize(utt_id))
            frames += result.n_frames
            conditions += result.scorer_conditions
            naive += result.naive_conditions
            batch_calls += result.scorer_batch_calls
            wall += result.wall_seconds
        (out_dir / f"{tag}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        saving = 1.0 - conditions / naive if naive else 0.0
        print(
            f"{tag}: frames={frames} wall={wall:.3f}s fps={frames / max(wall, 1e-9):.1f} "
            f"scorer_conditions={conditions} naive_conditions={naive} "
            f"saving={100.0 * saving:.1f}% batch_calls={batch_calls}"
        )
    return 0


def _add_decode_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phones", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--posteriors-dir", required=True)
    p.add_argument("--priors", required=True)
    p.add_argument("--lm", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--mode", choices=("mono", "di", "tri"), default=None)
    p.add_argument("--alpha", type=float, default=None, help="LM scale")
    p.add_argument("--beta", type=float, default=None, help="transition scale")
    p.add_argument("--gamma-left", type=float, default=None)
    p.add_argument("--gamma-center", type=float, default=None)
    p.add_argument("--gamma-right", type=float, default=None)
    p.add_argument("--beam", type=float, default=None)
    p.add_argument("--max-hyps", type=int, default=None)
    p.add_argument("--word-end-beam", type=float, default=None)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fhmm",
        description="Factored triphone hybrid-HMM alignment and decoding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flatstart-align", help="linear segmentation of the transcript states")
    p.add_argument("--phones", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--transcripts", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flatstart_align)

    p = sub.add_parser("train-mono", help="estimate monophone Gaussians from alignments")
    p.add_argument("--phones", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance-floor", type=float, default=1e-4)
    p.set_defaults(func=cmd_train_mono)

    p = sub.add_parser("realign", help="iterate Viterbi realignment and re-estimation")
    p.add_argument("--phones", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--model", default=None, help="initial Gaussians (.npz); estimated if omitted")
    p.add_argument("--model-out", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-silence", action="store_true", help="disallow optional silence")
    p.add_argument("--variance-floor", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_realign)

    p = sub.add_parser("estimate-priors", help="relative-frequency label priors from alignments")
    p.add_argument("--phones", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_estimate_priors)

    p = sub.add_parser("gen-targets", help="soft training targets from alignments")
    p.add_argument("--phones", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--hard-left", action="store_true", help="keep the left output one-hot")
    p.add_argument("--hard-right", action="store_true", help="keep the right output one-hot")
    p.add_argument("--smooth-center", action="store_true", help="also smooth the center output")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gen_targets)

    p = sub.add_parser("decode", help="time-synchronous beam search over the prefix tree")
    _add_decode_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", choices=("on", "off"), default="on")
    p.add_argument("--trace", default=None, help="per-frame search statistics file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("oracle-decode", help="exhaustive decode for verification")
    _add_decode_options(p)
    p.add_argument("--out", required=True)
    p.add_argument("--max-words", type=int, required=True)
    p.set_defaults(func=cmd_oracle_decode)

    p = sub.add_parser("score-wer", help="word error rate of a transcript against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--scored", action="store_true", help="hyp lines carry a score column")
    p.add_argument("--per-utt", action="store_true")
    p.set_defaults(func=cmd_score_wer)

    p = sub.add_parser("bench", help="decode with and without batched scoring, report savings")
    _add_decode_options(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cache", choices=("on", "off", "both"), default="both")
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as err:  # surface as a clean CLI error, nonzero exit
        print(f"fhmm {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
