"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"
if str(SCRIPTS) not in sys.path:
    sys.path.insert(0, str(SCRIPTS))

from fhmm.align import Alignment, TransitionModel, expand_utterance
from fhmm.lexicon import Lexicon
from fhmm.ngram import NGramLM, load_arpa
from fhmm.phones import PhonemeInventory, StateSpace
from fhmm.priors import ContextPriors
from fhmm.scoring import (
    AcousticScales,
    TableScorer,
    combine_diphone_score,
    combine_factored_score,
    combine_monophone_score,
)
from fhmm.ngram import score_word


def tiny_inventory(n: int = 2) -> PhonemeInventory:
    return PhonemeInventory(tuple("abcdefghij"[:n]))


def branchy_lexicon() -> Lexicon:
    """Five words with shared prefixes and ambiguous continuations."""
    inv = PhonemeInventory(("s", "t", "k", "ae", "ih"))
    return Lexicon(
        inv,
        {
            "sat": (("s", "ae", "t"),),
            "sit": (("s", "ih", "t"),),
            "kit": (("k", "ih", "t"),),
            "ski": (("s", "k", "ih"),),
            "tea": (("t", "ih"),),
        },
    )


def sample_truth(
    rng: np.random.Generator,
    lexicon: Lexicon,
    n_words: int,
    min_dur: int = 2,
    max_dur: int = 5,
    max_sil: int = 3,
) -> Alignment:
    """Random valid alignment: random words, random substate/silence durations."""
    words = tuple(rng.choice(sorted(lexicon.entries), size=n_words))
    labels = []
    for state in expand_utterance(words, lexicon, allow_silence=True):
        if state.optional:
            dur = int(rng.integers(0, max_sil + 1))
        else:
            dur = int(rng.integers(min_dur, max_dur + 1))
        labels.extend([state.label] * dur)
    return Alignment(words, tuple(labels))


def random_table_scorer(
    rng: np.random.Generator, inventory: PhonemeInventory, n_frames: int, low: float = 0.05
) -> TableScorer:
    c, s = inventory.num_contexts, inventory.num_center_states
    mono = rng.uniform(low, 1.0, (n_frames, c))
    di = rng.uniform(low, 1.0, (n_frames, c, s))
    tri = rng.uniform(low, 1.0, (n_frames, c, s, c))
    return TableScorer(
        mono / mono.sum(-1, keepdims=True),
        di / di.sum(-1, keepdims=True),
        tri / tri.sum(-1, keepdims=True),
    )


def random_priors(
    rng: np.random.Generator, inventory: PhonemeInventory, floor: float = 1e-6
) -> ContextPriors:
    c, s = inventory.num_contexts, inventory.num_center_states
    return ContextPriors.from_probs(
        inventory,
        rng.uniform(0.1, 1.0, c),
        rng.uniform(0.1, 1.0, (c, s)),
        rng.uniform(0.1, 1.0, (c, s, c)),
        floor=floor,
    )


def uniform_unigram_arpa_text(words: Sequence[str]) -> str:
    events = list(words) + ["</s>"]
    logp = math.log10(1.0 / len(events))
    lines = ["\\data\\", f"ngram 1={len(events) + 1}", "", "\\1-grams:", "-99\t<s>"]
    lines += [f"{logp:.17g}\t{w}" for w in events]
    lines += ["", "\\end\\"]
    return "\n".join(lines) + "\n"


def random_unigram_lm(rng: np.random.Generator, words: Sequence[str], tmp_path: Path) -> NGramLM:
    weights = rng.uniform(0.5, 2.0, len(words) + 1)
    probs = weights / (2.0 * weights.sum())  # leaves mass unassigned; fine for scoring
    lines = ["\\data\\", f"ngram 1={len(words) + 2}", "", "\\1-grams:", "-99\t<s>"]
    for w, p in zip(list(words) + ["</s>"], probs):
        lines.append(f"{math.log10(p):.17g}\t{w}")
    lines += ["", "\\end\\"]
    path = tmp_path / "random_lm.arpa"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return load_arpa(path)


@dataclass
class DecodeInstance:
    inventory: PhonemeInventory
    lexicon: Lexicon
    scorer: TableScorer
    priors: ContextPriors
    scales: AcousticScales
    transitions: TransitionModel
    lm: Optional[NGramLM]
    alpha: float
    n_frames: int


def random_decode_instance(seed: int, tmp_path: Path, max_frames: int = 15) -> DecodeInstance:
    """Random small decoding problem: inventory, lexicon, posteriors, priors, LM."""
    rng = np.random.default_rng(seed)
    n_phones = int(rng.integers(2, 4))
    inventory = tiny_inventory(n_phones)
    phones = inventory.phonemes
    vocab = int(rng.integers(1, 4))
    entries = {}
    for w in ("wa", "wb", "wc")[:vocab]:
        n_pron = 1 if rng.random() < 0.8 else 2
        prons = []
        for _ in range(n_pron):
            length = int(rng.integers(1, 4))
            prons.append(tuple(phones[int(i)] for i in rng.integers(0, n_phones, length)))
        entries[w] = tuple(dict.fromkeys(prons))
    lexicon = Lexicon(inventory, entries)
    n_frames = int(rng.integers(4, max_frames + 1))
    scorer = random_table_scorer(rng, inventory, n_frames)
    priors = random_priors(rng, inventory)
    scales = AcousticScales(*(float(x) for x in rng.uniform(0.2, 1.5, 3)))
    transitions = TransitionModel(
        speech_loop=float(-rng.uniform(0.2, 1.5)),
        speech_forward=float(-rng.uniform(0.2, 1.5)),
        silence_loop=float(-rng.uniform(0.05, 1.0)),
        silence_forward=float(-rng.uniform(0.5, 3.0)),
        beta=float(rng.uniform(0.3, 1.5)),
    )
    lm = random_unigram_lm(rng, sorted(entries), tmp_path) if rng.random() < 0.7 else None
    alpha = float(rng.uniform(0.2, 1.5)) if lm is not None else 0.0
    return DecodeInstance(
        inventory, lexicon, scorer, priors, scales, transitions, lm, alpha, n_frames
    )


# ---------------------------------------------------------------------------
# independent oracles


def levenshtein(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Plain recursive minimum edit distance."""

    @lru_cache(maxsize=None)
    def dist(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            dist(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
            dist(i, j - 1) + 1,
            dist(i - 1, j) + 1,
        )

    return dist(len(ref), len(hyp))


def naive_trie_size(pronunciations: Sequence[Sequence[str]]) -> int:
    """Distinct prefixes (including the empty one) over all pronunciations."""
    prefixes = {()}
    for pron in pronunciations:
        for k in range(1, len(pron) + 1):
            prefixes.add(tuple(pron[:k]))
    return len(prefixes)


def enumerate_chain_paths(states, n_frames: int):
    """All monotone frame->state paths through a linear chain with optional states."""
    starts = [0] + ([1] if states[0].optional and len(states) > 1 else [])
    finals = {len(states) - 1}
    if states[-1].optional and len(states) > 1:
        finals.add(len(states) - 2)

    def extend(path):
        if len(path) == n_frames:
            if path[-1] in finals:
                yield list(path)
            return
        s = path[-1]
        nexts = [s, s + 1]
        if s + 2 < len(states) and states[s + 1].optional:
            nexts.append(s + 2)
        for nxt in nexts:
            if nxt < len(states):
                path.append(nxt)
                yield from extend(path)
                path.pop()

    for s0 in starts:
        yield from extend([s0])


def score_chain_path(path, states, emissions, transitions: TransitionModel) -> float:
    """Path score with the shared conventions: first frame free, source-based penalties."""
    total = emissions[0][path[0]]
    for t in range(1, len(path)):
        src, dst = path[t - 1], path[t]
        if src == dst:
            pen = transitions.loop(states[src].is_silence)
        else:
            pen = transitions.forward(states[src].is_silence)
        total = total + transitions.beta * pen
        total = total + emissions[t][dst]
    return total


def independent_rescore(result, instance: DecodeInstance, mode: str) -> float:
    """Re-derive the decode total from the traced labels and words alone.

    Emissions come from the scalar combination functions, transition kinds
    from label (in)equality of adjacent frames, LM terms at the word-end
    positions implied by the alignment.  Accumulation order mirrors the
    decoder's, so agreement is exact.
    """
    labels = result.frame_labels
    words = result.words
    inv = instance.inventory
    lex = instance.lexicon
    space = StateSpace(inv)
    silence_label = space.silence_label
    lm, alpha, tm = instance.lm, instance.alpha, instance.transitions

    # find, for each word, the frame of its final label run
    word_end_frames = []
    t = 0
    n = len(labels)

    def skip_silence(t: int) -> int:
        while t < n and labels[t] == silence_label:
            t += 1
        return t

    from fhmm.lexicon import hmm_expand

    t = skip_silence(0)
    for word in words:
        matched = False
        for pron in lex.pronunciations(word):
            expected = hmm_expand(pron, inv)
            tt = t
            ok = True
            for lab in expected:
                if tt >= n or labels[tt] != lab:
                    ok = False
                    break
                while tt < n and labels[tt] == lab:
                    tt += 1
            if ok:
                word_end_frames.append(tt - 1)
                t = skip_silence(tt)
                matched = True
                break
        if not matched:
            raise AssertionError(f"trace does not realize word {word!r}")
    assert t == n, "trailing labels not covered"

    ends_at = {}
    for i, te in enumerate(word_end_frames):
        ends_at.setdefault(te, []).append(i)

    posts = [instance.scorer.frame_posteriors(t) for t in range(n)]

    def emission(t: int) -> float:
        if mode == "tri":
            return combine_factored_score(posts[t], instance.priors, instance.scales, labels[t])
        if mode == "di":
            return combine_diphone_score(
                posts[t], instance.priors, instance.scales, labels[t].left, labels[t].center
            )
        return combine_monophone_score(
            posts[t], instance.priors, instance.scales.gamma_center, labels[t].center
        )

    h = ()
    if lm is not None and (lm.sentence_begin,) in lm.probs[0]:
        h = (lm.sentence_begin,)
    hist_limit = lm.order - 1 if lm is not None else 0

    def push(h, w):
        return (h + (w,))[-hist_limit:] if hist_limit > 0 else ()

    total = emission(0)
    for t in range(1, n):
        if labels[t] == labels[t - 1]:
            pen = tm.loop(labels[t - 1] == silence_label)
        else:
            pen = tm.forward(labels[t - 1] == silence_label)
        total = total + tm.beta * pen
        for i in ends_at.get(t - 1, ()):
            lp = score_word(lm, h, words[i]) if lm is not None else 0.0
            total = total + alpha * lp
            h = push(h, words[i])
        total = total + emission(t)
    for i in ends_at.get(n - 1, ()):
        lp = score_word(lm, h, words[i]) if lm is not None else 0.0
        total = total + alpha * lp
        h = push(h, words[i])
    if lm is not None and (lm.sentence_end,) in lm.probs[0]:
        total = total + alpha * score_word(lm, h, lm.sentence_end)
    return total
