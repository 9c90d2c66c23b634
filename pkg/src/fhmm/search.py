"""Time-synchronous Viterbi beam search over the lexical prefix tree.

A hypothesis occupies one emitting state per frame: either a phone substate
of a tree node together with its committed right context, or the silence
state.  Word identity, the language-model term, and re-entry at the tree
root happen on the transition out of a word-final phone.  Only the active
(left context, center state) pairs of a frame are forwarded to the scorer,
in one deduplicated batch whose results are cached; a per-label fallback
path exists for benchmarking and produces bit-identical scores.

``brute_force_decode`` exhaustively enumerates word sequences and their
alignments; it is the correctness oracle for the beam search on small
instances.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .align import TransitionModel, expand_utterance
from .lexicon import Lexicon, PrefixTree
from .ngram import NGramLM, score_word
from .phones import StateSpace, TriphoneLabel
from .priors import ContextPriors
from .scoring import (
    AcousticScales,
    FactoredScorer,
    ScoreCache,
    batch_score_frame,
    checked_score,
    combine_diphone_score,
    combine_factored_score,
    combine_monophone_score,
    di_score_vector,
    mono_score_vector,
    naive_score_label,
)

_SIL_NODE = -1
MODES = ("mono", "di", "tri")


class EmptyBeamError(RuntimeError):
    def __init__(self, frame: int, message: str = "all hypotheses pruned"):
        super().__init__(f"empty beam at frame {frame}: {message}")
        self.frame = frame


class BruteForceError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamConfig:
    """Pruning parameters: score gap to the best, hypothesis cap, word-end gap."""

    beam_logwidth: float = 200.0
    max_hyps: int = 50_000
    word_end_beam: float = 200.0

    def __post_init__(self):
        if not (self.beam_logwidth > 0 and self.word_end_beam > 0 and self.max_hyps > 0):
            raise ValueError("beam parameters must be positive")

    @classmethod
    def exhaustive(cls) -> "BeamConfig":
        return cls(beam_logwidth=math.inf, max_hyps=10**9, word_end_beam=math.inf)


@dataclass(frozen=True)
class Hypothesis:
    """One beam entry: search position, committed right context, LM history."""

    node: int  # tree node, or -1 for the silence state
    substate: int
    right: int  # committed right-context index; -1 in silence
    history: tuple[str, ...]
    label_index: int
    score: float
    parent: Optional["Hypothesis"] = field(default=None, compare=False, repr=False)
    new_words: tuple[str, ...] = field(default=(), compare=False)


@dataclass
class DecodeResult:
    """Best word sequence with its score and the decode's measurement surface."""

    words: tuple[str, ...]
    score: float
    frame_labels: tuple[TriphoneLabel, ...]
    mode: str
    n_frames: int
    wall_seconds: float
    per_frame_active_pairs: tuple[int, ...]
    per_frame_active_labels: tuple[int, ...]
    per_frame_hypotheses: tuple[int, ...]
    scorer_batch_calls: int
    scorer_conditions: int
    naive_conditions: int

    def serialize(self, utt_id: str) -> str:
        return f"{utt_id} {self.score:.17g} {' '.join(self.words)}".rstrip()


@dataclass
class ThroughputReport:
    n_frames: int
    wall_seconds: float
    frames_per_second: float
    audio_seconds: float
    rtf_style: float
    scorer_batch_calls: int
    scorer_conditions: int
    naive_conditions: int
    hypothesis_requests: int
    relative_saving: float

    def __str__(self) -> str:
        return (
            f"frames={self.n_frames} wall={self.wall_seconds:.3f}s "
            f"fps={self.frames_per_second:.1f} rtf~{self.rtf_style:.3f} "
            f"scorer_conditions={self.scorer_conditions} "
            f"naive_conditions={self.naive_conditions} "
            f"hypothesis_requests={self.hypothesis_requests} "
            f"saving={100.0 * self.relative_saving:.1f}% "
            f"(batch_calls={self.scorer_batch_calls})"
        )


def measure_throughput(result: DecodeResult, frame_shift_ms: float = 10.0) -> ThroughputReport:
    """Frames/second plus scorer traffic with and without condition batching.

    ``naive_conditions`` counts one scorer condition per distinct active label
    per frame (what an unbatched scorer would forward); ``hypothesis_requests``
    counts every beam entry's score lookup.
    """
    audio = result.n_frames * frame_shift_ms / 1000.0
    wall = max(result.wall_seconds, 1e-9)
    saving = 0.0
    if result.naive_conditions > 0:
        saving = 1.0 - result.scorer_conditions / result.naive_conditions
    return ThroughputReport(
        n_frames=result.n_frames,
        wall_seconds=result.wall_seconds,
        frames_per_second=result.n_frames / wall,
        audio_seconds=audio,
        rtf_style=result.wall_seconds / max(audio, 1e-9),
        scorer_batch_calls=result.scorer_batch_calls,
        scorer_conditions=result.scorer_conditions,
        naive_conditions=result.naive_conditions,
        hypothesis_requests=sum(result.per_frame_hypotheses),
        relative_saving=saving,
    )


class _FramePort:
    """Mode dispatch for frame scoring, batched or per label, with traffic stats."""

    def __init__(self, scorer, priors, scales, mode, batched):
        self.scorer = scorer
        self.priors = priors
        self.scales = scales
        self.mode = mode
        self.batched = batched
        self.cache = ScoreCache()
        self.active_pairs: list[int] = []
        self.active_labels: list[int] = []

    def scores(self, t: int, triples: Sequence[tuple[int, int, int]]) -> dict[tuple[int, int, int], float]:
        distinct = sorted(set(triples))
        out: dict[tuple[int, int, int], float] = {}
        if self.mode == "tri":
            pairs = sorted({(l, c) for l, c, _ in distinct})
            self.active_pairs.append(len(pairs))
            if self.batched:
                vecs = batch_score_frame(self.scorer, self.cache, t, pairs, self.priors, self.scales)
                for l, c, r in distinct:
                    out[(l, c, r)] = checked_score(float(vecs[(l, c)][r]), f"frame {t}")
            else:
                for l, c, r in distinct:
                    out[(l, c, r)] = checked_score(
                        naive_score_label(self.scorer, t, l, c, r, self.priors, self.scales),
                        f"frame {t}",
                    )
        elif self.mode == "di":
            lefts = sorted({l for l, _, _ in distinct})
            self.active_pairs.append(len(lefts))
            if self.batched:
                mono = self.cache.raw_mono(self.scorer, t)
                rows = self.cache.raw_di(self.scorer, t, lefts)
                vec = {l: di_score_vector(rows[l], mono[l], self.priors, self.scales, l) for l in lefts}
                for l, c, r in distinct:
                    out[(l, c, r)] = checked_score(float(vec[l][c]), f"frame {t}")
            else:
                for l, c, r in distinct:
                    row = self.scorer.log_di_rows(t, [l])[0]
                    mono = self.scorer.log_mono(t)
                    v = di_score_vector(row, mono[l], self.priors, self.scales, l)
                    out[(l, c, r)] = checked_score(float(v[c]), f"frame {t}")
        else:
            self.active_pairs.append(1)
            if self.batched:
                vec = self.cache._mono.get(t)
                if vec is None:
                    vec = mono_score_vector(
                        self.scorer.log_center_marginal(t), self.priors, self.scales.gamma_center
                    )
                    self.cache._mono[t] = vec
                for l, c, r in distinct:
                    out[(l, c, r)] = checked_score(float(vec[c]), f"frame {t}")
            else:
                for l, c, r in distinct:
                    vec = mono_score_vector(
                        self.scorer.log_center_marginal(t), self.priors, self.scales.gamma_center
                    )
                    out[(l, c, r)] = checked_score(float(vec[c]), f"frame {t}")
        self.active_labels.append(len(distinct))
        return out

    def conditions_used(self, before, after) -> tuple[int, int]:
        if self.mode == "tri":
            return after.tri_calls - before.tri_calls, after.tri_conditions - before.tri_conditions
        if self.mode == "di":
            return after.di_calls - before.di_calls, after.di_conditions - before.di_conditions
        return after.mono_calls - before.mono_calls, after.mono_calls - before.mono_calls


def decode(
    scorer: FactoredScorer,
    priors: ContextPriors,
    scales: AcousticScales,
    transitions: TransitionModel,
    lm: Optional[NGramLM],
    alpha: float,
    tree: PrefixTree,
    cfg: Optional[BeamConfig] = None,
    mode: str = "tri",
    batch_scoring: bool = True,
) -> DecodeResult:
    """Find the best word sequence under the combined acoustic, transition and LM score.

    The total score decomposes exactly into per-frame acoustic terms,
    beta-scaled transition penalties, and alpha-scaled LM terms applied at
    word ends (plus the sentence-end term when the LM has one).
    """
    if mode not in MODES:
        raise ValueError(f"unknown decode mode {mode!r}")
    cfg = cfg or BeamConfig()
    inv = tree.inventory
    if (
        scorer.num_contexts != inv.num_contexts
        or scorer.num_center_states != inv.num_center_states
    ):
        raise ValueError("scorer dimensions do not match the tree's inventory")
    n_frames = scorer.num_frames
    if n_frames < 1:
        raise ValueError("need at least one frame to decode")
    space = StateSpace(inv)
    bnd = inv.boundary_index
    sil_center = inv.silence_center_index
    n_phone_centers = sil_center  # phone substate count = 3P
    n_contexts = inv.num_contexts
    beta = transitions.beta
    sp_loop, sp_fwd = transitions.speech_loop, transitions.speech_forward
    sil_loop, sil_fwd = transitions.silence_loop, transitions.silence_forward

    node_cbase = [-1] * len(tree)
    for u in tree.nodes():
        ph = tree.phoneme_of(u)
        if ph is not None:
            node_cbase[u] = 3 * inv.phoneme_index(ph)
    root_entries = [(u, tree.entry_rights(u)) for _, u in tree.arcs(tree.root)]

    def label_triple(node: int, substate: int, right: int) -> tuple[int, int, int]:
        if node == _SIL_NODE:
            return (bnd, sil_center, bnd)
        return (tree.left_context_index(node), node_cbase[node] + substate, right)

    def label_index_of(triple: tuple[int, int, int]) -> int:
        l, c, r = triple
        if c == sil_center:
            return space.silence_index
        return (l * n_phone_centers + c) * n_contexts + r

    has_end = lm is not None and (lm.sentence_end,) in lm.probs[0]
    h0: tuple[str, ...] = ()
    if lm is not None and (lm.sentence_begin,) in lm.probs[0]:
        h0 = (lm.sentence_begin,)
    hist_limit = lm.order - 1 if lm is not None else 0

    def push_hist(h: tuple[str, ...], w: str) -> tuple[str, ...]:
        if hist_limit <= 0:
            return ()
        return (h + (w,))[-hist_limit:]

    port = _FramePort(scorer, priors, scales, mode, batch_scoring)
    stats_before = scorer.stats.copy()
    t_start = time.perf_counter()

    incoming: dict = {}

    def add_incoming(key, pre: float, parent, new_words) -> None:
        cur = incoming.get(key)
        if cur is None or pre > cur[0]:
            incoming[key] = (pre, parent, new_words)

    add_incoming((_SIL_NODE, 0, -1, h0), 0.0, None, ())
    for u, rights in root_entries:
        for r2 in rights:
            add_incoming((u, 0, r2, h0), 0.0, None, ())

    hyps: list[Hypothesis] = []
    per_frame_hyps: list[int] = []
    for t in range(n_frames):
        triples = {key: label_triple(key[0], key[1], key[2]) for key in incoming}
        emis = port.scores(t, list(triples.values()))
        new_hyps: list[Hypothesis] = []
        for key, (pre, parent, new_words) in incoming.items():
            e = emis[triples[key]]
            sc = pre + e
            if sc == -math.inf:
                continue
            new_hyps.append(
                Hypothesis(
                    node=key[0],
                    substate=key[1],
                    right=key[2],
                    history=key[3],
                    label_index=label_index_of(triples[key]),
                    score=sc,
                    parent=parent,
                    new_words=new_words,
                )
            )
        if not new_hyps:
            raise EmptyBeamError(t)
        best = max(h.score for h in new_hyps)
        threshold = best - cfg.beam_logwidth
        kept = [h for h in new_hyps if h.score >= threshold]
        kept.sort(key=lambda h: (-h.score, h.label_index, h.history, h.node, h.substate, h.right))
        hyps = kept[: cfg.max_hyps]
        per_frame_hyps.append(len(hyps))
        if t == n_frames - 1:
            break

        # word-end pruning threshold, over all exits of this frame
        we_best = -math.inf
        for h in hyps:
            if (
                h.node != _SIL_NODE
                and h.substate == 2
                and h.right == bnd
                and tree.words_at(h.node)
            ):
                base = h.score + beta * sp_fwd
                for w in tree.words_at(h.node):
                    lp = score_word(lm, h.history, w) if lm is not None else 0.0
                    es = base + alpha * lp
                    if es > we_best:
                        we_best = es
        we_threshold = we_best - cfg.word_end_beam

        incoming = {}
        for h in hyps:
            if h.node == _SIL_NODE:
                add_incoming((_SIL_NODE, 0, -1, h.history), h.score + beta * sil_loop, h, ())
                pre = h.score + beta * sil_fwd
                for u, rights in root_entries:
                    for r2 in rights:
                        add_incoming((u, 0, r2, h.history), pre, h, ())
                continue
            add_incoming(
                (h.node, h.substate, h.right, h.history), h.score + beta * sp_loop, h, ()
            )
            if h.substate < 2:
                add_incoming(
                    (h.node, h.substate + 1, h.right, h.history), h.score + beta * sp_fwd, h, ()
                )
                continue
            if h.right != bnd:
                w_node = tree.child(h.node, h.right)
                pre = h.score + beta * sp_fwd
                for r2 in tree.entry_rights(w_node):
                    add_incoming((w_node, 0, r2, h.history), pre, h, ())
            elif tree.words_at(h.node):
                base = h.score + beta * sp_fwd
                for w in tree.words_at(h.node):
                    lp = score_word(lm, h.history, w) if lm is not None else 0.0
                    es = base + alpha * lp
                    if es < we_threshold:
                        continue
                    h2 = push_hist(h.history, w)
                    add_incoming((_SIL_NODE, 0, -1, h2), es, h, (w,))
                    for u, rights in root_entries:
                        for r2 in rights:
                            add_incoming((u, 0, r2, h2), es, h, (w,))

    # finalization: word-final exits and silence are valid utterance ends
    best_final: Optional[tuple[float, Hypothesis, tuple[str, ...]]] = None
    for h in hyps:
        if h.node == _SIL_NODE:
            ends = [(h.score, h.history, ())]
        elif h.substate == 2 and h.right == bnd and tree.words_at(h.node):
            ends = []
            for w in tree.words_at(h.node):
                lp = score_word(lm, h.history, w) if lm is not None else 0.0
                ends.append((h.score + alpha * lp, push_hist(h.history, w), (w,)))
        else:
            continue
        for fs, hist, extra in ends:
            if has_end:
                fs = fs + alpha * score_word(lm, hist, lm.sentence_end)
            if best_final is None or fs > best_final[0]:
                best_final = (fs, h, extra)
    if best_final is None:
        raise EmptyBeamError(n_frames - 1, "no complete hypothesis at the final frame")

    final_score, final_hyp, extra_words = best_final
    rev_labels: list[int] = []
    rev_words: list[tuple[str, ...]] = []
    node: Optional[Hypothesis] = final_hyp
    while node is not None:
        rev_labels.append(node.label_index)
        rev_words.append(node.new_words)
        node = node.parent
    frame_labels = tuple(space.label(i) for i in reversed(rev_labels))
    words: list[str] = []
    for chunk in reversed(rev_words):
        words.extend(chunk)
    words.extend(extra_words)
    wall = time.perf_counter() - t_start
    batch_calls, conditions = port.conditions_used(stats_before, scorer.stats)
    return DecodeResult(
        words=tuple(words),
        score=final_score,
        frame_labels=frame_labels,
        mode=mode,
        n_frames=n_frames,
        wall_seconds=wall,
        per_frame_active_pairs=tuple(port.active_pairs),
        per_frame_active_labels=tuple(port.active_labels),
        per_frame_hypotheses=tuple(per_frame_hyps),
        scorer_batch_calls=batch_calls,
        scorer_conditions=conditions,
        naive_conditions=sum(port.active_labels),
    )


def brute_force_decode(
    scorer: FactoredScorer,
    priors: ContextPriors,
    scales: AcousticScales,
    transitions: TransitionModel,
    lm: Optional[NGramLM],
    alpha: float,
    lexicon: Lexicon,
    max_words: int,
    mode: str = "tri",
    work_budget: int = 10_000_000,
) -> tuple[tuple[str, ...], float]:
    """Exhaustive oracle: enumerate every word sequence up to ``max_words``.

    For each sequence (and pronunciation choice) a plain dynamic program over
    the expanded chain finds the best monotone alignment; the global optimum
    over sequences is returned.  Refuses instances whose enumeration cost
    exceeds ``work_budget``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown decode mode {mode!r}")
    inv = lexicon.inventory
    n_frames = scorer.num_frames
    vocab = sorted(lexicon.entries)
    max_pron_len = max(len(p) for prons in lexicon.entries.values() for p in prons)
    # sequences x pronunciation choices of length k number exactly (sum npron)^k
    pron_total = sum(len(prons) for prons in lexicon.entries.values())
    estimate = 0
    for k in range(max_words + 1):
        n_states = 3 * max_pron_len * k + k + 1
        estimate += (pron_total**k) * n_frames * n_states
        if estimate > work_budget:
            raise BruteForceError(
                f"instance too large for exhaustive decoding (~{estimate} > {work_budget} DP cells)"
            )

    posts = [scorer.frame_posteriors(t) for t in range(n_frames)]
    memo: dict[tuple[int, TriphoneLabel], float] = {}

    def label_score(t: int, label: TriphoneLabel) -> float:
        key = (t, label)
        v = memo.get(key)
        if v is None:
            if mode == "tri":
                v = combine_factored_score(posts[t], priors, scales, label)
            elif mode == "di":
                v = combine_diphone_score(posts[t], priors, scales, label.left, label.center)
            else:
                v = combine_monophone_score(posts[t], priors, scales.gamma_center, label.center)
            memo[key] = v
        return v

    has_end = lm is not None and (lm.sentence_end,) in lm.probs[0]
    h0: tuple[str, ...] = ()
    if lm is not None and (lm.sentence_begin,) in lm.probs[0]:
        h0 = (lm.sentence_begin,)
    hist_limit = lm.order - 1 if lm is not None else 0

    best_words: Optional[tuple[str, ...]] = None
    best_score = -math.inf
    for k in range(max_words + 1):
        for seq in itertools.product(vocab, repeat=k):
            lm_total = 0.0
            if lm is not None:
                hist = h0
                for w in seq:
                    lm_total += alpha * score_word(lm, hist, w)
                    hist = (hist + (w,))[-hist_limit:] if hist_limit > 0 else ()
                if has_end:
                    lm_total += alpha * score_word(lm, hist, lm.sentence_end)
            pron_counts = [range(len(lexicon.pronunciations(w))) for w in seq]
            for choice in itertools.product(*pron_counts):
                states = expand_utterance(seq, lexicon, choice, allow_silence=True)
                if sum(1 for st in states if not st.optional) > n_frames:
                    continue
                acoustic = _chain_best_score(
                    states, n_frames, label_score, transitions
                )
                if acoustic is None:
                    continue
                total = acoustic + lm_total
                if total > best_score:
                    best_score = total
                    best_words = seq
    if best_words is None:
        raise BruteForceError("no feasible word sequence fits the utterance")
    return best_words, best_score


def _chain_best_score(states, n_frames, label_score, transitions) -> Optional[float]:
    """Score-only Viterbi over a linear chain with skippable optional states."""
    n_states = len(states)
    beta = transitions.beta
    emis = [[label_score(t, st.label) for st in states] for t in range(n_frames)]
    prev = [-math.inf] * n_states
    prev[0] = emis[0][0]
    if states[0].optional and n_states > 1:
        prev[1] = emis[0][1]
    for t in range(1, n_frames):
        cur = [-math.inf] * n_states
        for s in range(n_states):
            best = -math.inf
            src = states[s]
            if prev[s] > -math.inf:
                best = prev[s] + beta * transitions.loop(src.is_silence)
            if s >= 1 and prev[s - 1] > -math.inf:
                v = prev[s - 1] + beta * transitions.forward(states[s - 1].is_silence)
                if v > best:
                    best = v
            if s >= 2 and states[s - 1].optional and prev[s - 2] > -math.inf:
                v = prev[s - 2] + beta * transitions.forward(states[s - 2].is_silence)
                if v > best:
                    best = v
            if best > -math.inf:
                cur[s] = best + emis[t][s]
        prev = cur
    finals = [prev[n_states - 1]]
    if states[-1].optional and n_states > 1:
        finals.append(prev[n_states - 2])
    best = max(finals)
    return None if best == -math.inf else best
