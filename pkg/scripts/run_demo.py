#!/usr/bin/env python3
"""End-to-end demo on the toy corpus.

Builds the corpus, then drives the CLI through the whole pipeline:
flat-start segmentation, monophone training, realignment, prior estimation,
target generation, decoding with one-hot posteriors, and WER scoring.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent))

from make_toy_corpus import build_toy_corpus

from fhmm.cli import main as fhmm


def run(*argv: str) -> None:
    print(f"$ fhmm {' '.join(argv)}")
    rc = fhmm(list(argv))
    if rc != 0:
        raise SystemExit(rc)


def main() -> int:
    work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_work")
    paths = build_toy_corpus(work / "corpus", seed=0, n_utterances=10)
    corpus = paths["dir"]

    run(
        "flatstart-align",
        "--phones", str(paths["phones"]),
        "--lexicon", str(paths["lexicon"]),
        "--transcripts", str(paths["ref"]),
        "--features-dir", str(paths["features"]),
        "--out", str(work / "align_flat.txt"),
    )
    run(
        "train-mono",
        "--phones", str(paths["phones"]),
        "--features-dir", str(paths["features"]),
        "--alignments", str(work / "align_flat.txt"),
        "--out", str(work / "mono.npz"),
    )
    run(
        "realign",
        "--phones", str(paths["phones"]),
        "--lexicon", str(paths["lexicon"]),
        "--features-dir", str(paths["features"]),
        "--alignments", str(work / "align_flat.txt"),
        "--model", str(work / "mono.npz"),
        "--iterations", "4",
        "--out", str(work / "align_realigned.txt"),
        "--model-out", str(work / "mono_final.npz"),
    )
    run(
        "estimate-priors",
        "--phones", str(paths["phones"]),
        "--alignments", str(work / "align_realigned.txt"),
        "--out", str(work / "priors.txt"),
    )
    run(
        "gen-targets",
        "--phones", str(paths["phones"]),
        "--alignments", str(work / "align_realigned.txt"),
        "--out-dir", str(work / "targets"),
    )
    run(
        "decode",
        "--phones", str(paths["phones"]),
        "--lexicon", str(paths["lexicon"]),
        "--posteriors-dir", str(paths["posteriors"]),
        "--priors", str(work / "priors.txt"),
        "--lm", str(paths["lm"]),
        "--config", str(paths["config"]),
        "--out", str(work / "hyp.txt"),
        "--trace", str(work / "trace.txt"),
    )
    run(
        "score-wer",
        "--ref", str(paths["ref"]),
        "--hyp", str(work / "hyp.txt"),
        "--scored",
    )
    run(
        "bench",
        "--phones", str(paths["phones"]),
        "--lexicon", str(paths["lexicon"]),
        "--posteriors-dir", str(paths["posteriors"]),
        "--priors", str(work / "priors.txt"),
        "--lm", str(paths["lm"]),
        "--out-dir", str(work / "bench"),
    )
    print(f"demo artifacts under {work}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
