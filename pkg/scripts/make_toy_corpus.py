#!/usr/bin/env python3
"""Generate the bundled toy corpus: a 5-word lexicon, reference transcripts,
ground-truth alignments, Gaussian-cluster features, one-hot posterior dumps,
a uniform unigram LM, and a config file.

Everything is seeded, so repeated runs produce identical artifacts.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fhmm.align import Alignment, expand_utterance, write_alignments
from fhmm.features import FeatureSequence, write_features
from fhmm.lexicon import Lexicon
from fhmm.phones import PhonemeInventory
from fhmm.scoring import synthetic_scorer, write_posterior_dump

PHONEMES = ("s", "t", "k", "ae", "ih")
WORDS = {
    "sat": (("s", "ae", "t"),),
    "sit": (("s", "ih", "t"),),
    "kit": (("k", "ih", "t"),),
    "ski": (("s", "k", "ih"),),
    "tea": (("t", "ih"),),
}
FEATURE_DIM = 2
CLUSTER_SPACING = 4.0
CLUSTER_SIGMA = 1.0


def toy_inventory() -> PhonemeInventory:
    return PhonemeInventory(PHONEMES)


def toy_lexicon(inventory: PhonemeInventory) -> Lexicon:
    return Lexicon(inventory, WORDS)


def center_state_means(inventory: PhonemeInventory) -> np.ndarray:
    """Well-separated cluster means, one per center state, on a 2-d grid."""
    s = inventory.num_center_states
    side = math.ceil(math.sqrt(s))
    means = np.zeros((s, FEATURE_DIM))
    for i in range(s):
        means[i] = (CLUSTER_SPACING * (i % side), CLUSTER_SPACING * (i // side))
    return means


def sample_truth(rng: np.random.Generator, lexicon: Lexicon, n_words: int) -> Alignment:
    words = tuple(rng.choice(sorted(lexicon.entries), size=n_words))
    labels = []
    for state in expand_utterance(words, lexicon, allow_silence=True):
        if state.optional:
            duration = int(rng.integers(0, 4))
        else:
            duration = int(rng.integers(2, 6))
        labels.extend([state.label] * duration)
    return Alignment(words, tuple(labels))


def features_for(rng: np.random.Generator, alignment: Alignment, inventory, means) -> FeatureSequence:
    rows = [
        means[inventory.center_index(label.center)]
        + CLUSTER_SIGMA * rng.normal(size=FEATURE_DIM)
        for label in alignment.labels
    ]
    return FeatureSequence(np.stack(rows))


def uniform_unigram_arpa(path: Path, words: list[str]) -> None:
    events = words + ["</s>"]
    logp = math.log10(1.0 / len(events))
    lines = ["\\data\\", f"ngram 1={len(events) + 1}", "", "\\1-grams:", "-99\t<s>"]
    for w in events:
        lines.append(f"{logp:.17g}\t{w}")
    lines += ["", "\\end\\"]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_toy_corpus(out_dir: str | Path, seed: int = 0, n_utterances: int = 10) -> dict[str, Path]:
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "posteriors").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    inventory = toy_inventory()
    lexicon = toy_lexicon(inventory)
    means = center_state_means(inventory)

    inventory.to_file(out / "phones.txt")
    lexicon.to_file(out / "lexicon.txt")
    uniform_unigram_arpa(out / "lm.arpa", sorted(lexicon.entries))

    ref_lines = []
    truth_items = []
    for i in range(n_utterances):
        utt_id = f"utt{i:03d}"
        truth = sample_truth(rng, lexicon, n_words=int(rng.integers(2, 5)))
        truth_items.append((utt_id, truth))
        ref_lines.append(f"{utt_id} {' '.join(truth.words)}")
        write_features(out / "features" / f"{utt_id}.ft", features_for(rng, truth, inventory, means))
        scorer = synthetic_scorer(truth, inventory, peak=1.0)
        write_posterior_dump(out / "posteriors" / f"{utt_id}.fhpd", scorer)
    (out / "ref.txt").write_text("\n".join(ref_lines) + "\n", encoding="utf-8")
    write_alignments(out / "align_ref.txt", truth_items, inventory)

    (out / "toy.cfg").write_text(
        "\n".join(
            [
                "# toy pipeline configuration",
                "am.gamma_left = 1.0",
                "am.gamma_center = 1.0",
                "am.gamma_right = 1.0",
                "transition.beta = 1.0",
                "lm.alpha = 1.0",
                "decode.beam_logwidth = 200.0",
                "decode.max_hyps = 50000",
                "decode.word_end_beam = 200.0",
                "decode.mode = tri",
                "priors.floor = 1e-8",
                "targets.epsilon = 0.2",
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    return {
        "dir": out,
        "phones": out / "phones.txt",
        "lexicon": out / "lexicon.txt",
        "ref": out / "ref.txt",
        "align_ref": out / "align_ref.txt",
        "features": out / "features",
        "posteriors": out / "posteriors",
        "lm": out / "lm.arpa",
        "config": out / "toy.cfg",
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="toy_corpus")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--utterances", type=int, default=10)
    args = ap.parse_args()
    paths = build_toy_corpus(args.out_dir, seed=args.seed, n_utterances=args.utterances)
    print(f"toy corpus written to {paths['dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
