"""Flat-start alignment pipeline.

Linear segmentation seeds a first alignment with no model at all; a
single-Gaussian monophone model is estimated from it; Viterbi forced
alignment and re-estimation then alternate.  The same chain Viterbi also
serves factored-posterior emissions, so external scorers can realign too.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .features import FeatureSequence
from .lexicon import Lexicon, hmm_expand
from .phones import CenterState, PhonemeInventory, StateSpace, TriphoneLabel
from .priors import ContextPriors
from .scoring import (
    AcousticScales,
    FactoredScorer,
    ScoreCache,
    TableScorer,
    batch_score_frame,
    checked_score,
    di_score_vector,
    mono_score_vector,
)

LOG_HALF = math.log(0.5)


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionModel:
    """Constant log transition penalties, with separate speech and silence values.

    The penalty of a transition is determined by its source state; ``beta``
    scales every transition term in path scores.
    """

    speech_loop: float = LOG_HALF
    speech_forward: float = LOG_HALF
    silence_loop: float = -0.1054
    silence_forward: float = -2.3026
    beta: float = 1.0

    def __post_init__(self):
        for name in ("speech_loop", "speech_forward", "silence_loop", "silence_forward", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def loop(self, is_silence: bool) -> float:
        return self.silence_loop if is_silence else self.speech_loop

    def forward(self, is_silence: bool) -> float:
        return self.silence_forward if is_silence else self.speech_forward


@dataclass(frozen=True)
class Alignment:
    """One triphone label per frame plus the utterance's word sequence."""

    words: tuple[str, ...]
    labels: tuple[TriphoneLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise AlignmentError("alignment has no frames")

    @property
    def num_frames(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class MonophoneGaussians:
    """Diagonal single Gaussian per center state (phone substates plus silence)."""

    inventory: PhonemeInventory
    means: np.ndarray  # (S, D)
    variances: np.ndarray  # (S, D)
    variance_floor: float = 1e-4

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        s = self.inventory.num_center_states
        if means.ndim != 2 or means.shape[0] != s or variances.shape != means.shape:
            raise ValueError(
                f"expected (num_center_states, D) parameter matrices, got {means.shape} {variances.shape}"
            )
        if self.variance_floor <= 0:
            raise ValueError("variance floor must be positive")
        if np.any(variances < self.variance_floor):
            raise ValueError("variances below the floor")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def estimate_gaussians(
    corpus: Iterable[tuple[FeatureSequence, Alignment]],
    inventory: PhonemeInventory,
    variance_floor: float = 1e-4,
) -> MonophoneGaussians:
    """Per-center-state ML mean and diagonal variance over the aligned frames.

    States with no aligned frames fall back to the global statistics.
    """
    n = None
    sx = sxx = None
    s = inventory.num_center_states
    total_frames = 0
    for features, alignment in corpus:
        if features.num_frames != alignment.num_frames:
            raise AlignmentError(
                f"feature/alignment length mismatch: {features.num_frames} vs {alignment.num_frames}"
            )
        if n is None:
            d = features.dim
            n = np.zeros(s)
            sx = np.zeros((s, d))
            sxx = np.zeros((s, d))
        elif features.dim != sx.shape[1]:
            raise AlignmentError("inconsistent feature dimensions across corpus")
        for t, label in enumerate(alignment.labels):
            c = inventory.center_index(label.center)
            x = features.frames[t]
            n[c] += 1.0
            sx[c] += x
            sxx[c] += x * x
            total_frames += 1
    if n is None or total_frames == 0:
        raise AlignmentError("empty corpus")
    g_mean = sx.sum(axis=0) / total_frames
    g_var = np.maximum(sxx.sum(axis=0) / total_frames - g_mean * g_mean, variance_floor)
    means = np.tile(g_mean, (s, 1))
    variances = np.tile(g_var, (s, 1))
    seen = n > 0
    means[seen] = sx[seen] / n[seen, None]
    variances[seen] = np.maximum(sxx[seen] / n[seen, None] - means[seen] ** 2, variance_floor)
    return MonophoneGaussians(inventory, means, variances, variance_floor)


def gaussian_frame_log_likelihood(
    model: MonophoneGaussians, state: CenterState, frame: np.ndarray
) -> float:
    """Diagonal Gaussian log density of one frame under one center state."""
    c = model.inventory.center_index(state)
    x = np.asarray(frame, dtype=np.float64)
    var = model.variances[c]
    diff = x - model.means[c]
    return float(-0.5 * (x.size * math.log(2.0 * math.pi) + np.log(var).sum() + (diff * diff / var).sum()))


def log_likelihood_matrix(model: MonophoneGaussians, features: FeatureSequence) -> np.ndarray:
    """(T, num_center_states) log densities for a whole utterance."""
    x = features.frames  # (T, D)
    mu = model.means  # (S, D)
    var = model.variances
    diff = x[:, None, :] - mu[None, :, :]
    quad = (diff * diff / var[None, :, :]).sum(axis=2)
    const = x.shape[1] * math.log(2.0 * math.pi) + np.log(var).sum(axis=1)
    return -0.5 * (const[None, :] + quad)


# ---------------------------------------------------------------------------
# utterance chain expansion


@dataclass(frozen=True)
class ChainState:
    label: TriphoneLabel
    is_silence: bool
    optional: bool


def expand_utterance(
    words: Sequence[str],
    lexicon: Lexicon,
    pron_choice: Sequence[int] | None = None,
    allow_silence: bool = True,
) -> list[ChainState]:
    """Expand a word sequence into its linear HMM chain.

    Optional silence states sit at the utterance edges and between words.
    """
    inv = lexicon.inventory
    sil = ChainState(StateSpace(inv).silence_label, is_silence=True, optional=True)
    if pron_choice is None:
        pron_choice = [0] * len(words)
    states: list[ChainState] = []
    if allow_silence:
        states.append(sil)
    for word, which in zip(words, pron_choice):
        pron = lexicon.pronunciations(word)[which]
        for label in hmm_expand(pron, inv):
            states.append(ChainState(label, is_silence=False, optional=False))
        if allow_silence:
            states.append(sil)
    return states


def _pron_choices(words: Sequence[str], lexicon: Lexicon, limit: int = 256):
    counts = [len(lexicon.pronunciations(w)) for w in words]
    total = math.prod(counts) if counts else 1
    if total > limit:
        raise AlignmentError(
            f"too many pronunciation combinations ({total} > {limit}) for forced alignment"
        )
    return itertools.product(*(range(k) for k in counts))


# ---------------------------------------------------------------------------
# emission adapters


@dataclass
class FactoredEmission:
    """Emission source backed by a factored scorer, priors, and scales."""

    scorer: FactoredScorer
    priors: ContextPriors
    scales: AcousticScales
    mode: str = "tri"

    def __post_init__(self):
        if self.mode not in ("mono", "di", "tri"):
            raise ValueError(f"unknown scoring mode {self.mode!r}")
        self._cache = ScoreCache()

    @property
    def num_frames(self) -> int:
        return self.scorer.num_frames

    def matrix(self, states: Sequence[ChainState], space: StateSpace) -> np.ndarray:
        t_total = self.scorer.num_frames
        out = np.empty((t_total, len(states)))
        triples = [space.factor_indices(st.label) for st in states]
        if self.mode == "tri":
            pairs = sorted({(l, c) for l, c, _ in triples})
            for t in range(t_total):
                vecs = batch_score_frame(self.scorer, self._cache, t, pairs, self.priors, self.scales)
                for j, (l, c, r) in enumerate(triples):
                    out[t, j] = checked_score(float(vecs[(l, c)][r]), f"state {j}")
        elif self.mode == "di":
            lefts = sorted({l for l, _, _ in triples})
            for t in range(t_total):
                mono = self._cache.raw_mono(self.scorer, t)
                rows = self._cache.raw_di(self.scorer, t, lefts)
                vec_by_left = {
                    l: di_score_vector(rows[l], mono[l], self.priors, self.scales, l) for l in lefts
                }
                for j, (l, c, _) in enumerate(triples):
                    out[t, j] = checked_score(float(vec_by_left[l][c]), f"state {j}")
        else:
            for t in range(t_total):
                vec = mono_score_vector(
                    self.scorer.log_center_marginal(t), self.priors, self.scales.gamma_center
                )
                for j, (_, c, _) in enumerate(triples):
                    out[t, j] = checked_score(float(vec[c]), f"state {j}")
        return out


EmissionSource = Union[MonophoneGaussians, FactoredEmission]


def _emission_matrix(
    source: EmissionSource,
    features: Optional[FeatureSequence],
    states: Sequence[ChainState],
    inventory: PhonemeInventory,
) -> np.ndarray:
    if isinstance(source, MonophoneGaussians):
        if features is None:
            raise AlignmentError("Gaussian emissions require a feature sequence")
        loglik = log_likelihood_matrix(source, features)
        cols = [inventory.center_index(st.label.center) for st in states]
        return loglik[:, cols]
    space = StateSpace(inventory)
    return source.matrix(states, space)


# ---------------------------------------------------------------------------
# linear segmentation and chain Viterbi


def linear_segmentation(
    features: FeatureSequence,
    transcript: Sequence[str],
    lexicon: Lexicon,
) -> Alignment:
    """Split the frames evenly over the transcript's mandatory HMM states.

    States receive floor(T/S) or ceil(T/S) contiguous frames, longer runs
    first; optional silence states receive no frames at this stage.
    """
    if not transcript:
        raise AlignmentError("empty transcript")
    states = [st for st in expand_utterance(transcript, lexicon, allow_silence=False)]
    t_total = features.num_frames
    s_total = len(states)
    if s_total > t_total:
        raise AlignmentError(
            f"utterance too short: {t_total} frames for {s_total} HMM states"
        )
    base = t_total // s_total
    extra = t_total % s_total
    labels: list[TriphoneLabel] = []
    for i, st in enumerate(states):
        run = base + (1 if i < extra else 0)
        labels.extend([st.label] * run)
    return Alignment(tuple(transcript), tuple(labels))


def _viterbi_chain(
    emissions: np.ndarray,
    states: Sequence[ChainState],
    transitions: TransitionModel,
) -> Optional[tuple[list[int], float]]:
    """Best monotone path through a linear chain with skippable optional states.

    Ties prefer staying in the current state over advancing, then the nearer
    predecessor; final-state ties prefer the later state.  Returns None when
    the chain does not fit into the frames.
    """
    t_total, s_total = emissions.shape
    if sum(1 for st in states if not st.optional) > t_total:
        return None
    neg_inf = -math.inf
    dp = np.full((t_total, s_total), neg_inf)
    bp = np.full((t_total, s_total), -1, dtype=np.int64)
    dp[0, 0] = emissions[0, 0]
    if states[0].optional and s_total > 1:
        dp[0, 1] = emissions[0, 1]
    beta = transitions.beta
    for t in range(1, t_total):
        prev = dp[t - 1]
        for s in range(s_total):
            best = neg_inf
            arg = -1
            cands = [(s, transitions.loop(states[s].is_silence))]
            if s >= 1:
                cands.append((s - 1, transitions.forward(states[s - 1].is_silence)))
            if s >= 2 and states[s - 1].optional:
                cands.append((s - 2, transitions.forward(states[s - 2].is_silence)))
            for p, pen in cands:
                if prev[p] == neg_inf:
                    continue
                v = prev[p] + beta * pen
                if v > best:
                    best = v
                    arg = p
            if arg >= 0:
                dp[t, s] = best + emissions[t, s]
                bp[t, s] = arg
    finals = [s_total - 1]
    if states[-1].optional and s_total > 1:
        finals.append(s_total - 2)
    best_final = -1
    best_score = neg_inf
    for s in finals:
        if dp[t_total - 1, s] > best_score:
            best_score = dp[t_total - 1, s]
            best_final = s
    if best_final < 0:
        return None
    path = [0] * t_total
    path[t_total - 1] = best_final
    for t in range(t_total - 1, 0, -1):
        path[t - 1] = int(bp[t, path[t]])
    return path, float(best_score)


def viterbi_forced_align(
    features: Optional[FeatureSequence],
    transcript: Sequence[str],
    lexicon: Lexicon,
    emission_source: EmissionSource,
    transitions: TransitionModel,
    allow_silence: bool = True,
) -> tuple[Alignment, float]:
    """Maximum-score monotone alignment of the transcript's HMM to the frames.

    The path score is the sum of emission terms plus beta-scaled transition
    penalties.  All pronunciation combinations are searched (bounded).
    """
    if not transcript:
        raise AlignmentError("empty transcript")
    inventory = lexicon.inventory
    if isinstance(emission_source, MonophoneGaussians):
        if features is None:
            raise AlignmentError("Gaussian emissions require a feature sequence")
        t_total = features.num_frames
    else:
        t_total = emission_source.num_frames
        if features is not None and features.num_frames != t_total:
            raise AlignmentError("feature/scorer frame count mismatch")
    best_path: Optional[list[int]] = None
    best_score = -math.inf
    best_states: Optional[list[ChainState]] = None
    feasible = False
    for choice in _pron_choices(transcript, lexicon):
        states = expand_utterance(transcript, lexicon, choice, allow_silence)
        if sum(1 for st in states if not st.optional) > t_total:
            continue
        feasible = True
        emissions = _emission_matrix(emission_source, features, states, inventory)
        result = _viterbi_chain(emissions, states, transitions)
        if result is not None and result[1] > best_score:
            best_path, best_score = result
            best_states = states
    if not feasible:
        raise AlignmentError(
            f"utterance too short: {t_total} frames cannot fit the transcript"
        )
    if best_path is None:
        raise AlignmentError("no finite-score alignment path")
    labels = tuple(best_states[s].label for s in best_path)
    return Alignment(tuple(transcript), labels), best_score


def realign_corpus(
    corpus: Sequence[tuple[FeatureSequence, Alignment]],
    model: MonophoneGaussians,
    transitions: TransitionModel,
    iterations: int,
    lexicon: Lexicon,
    allow_silence: bool = True,
) -> tuple[list[Alignment], list[float]]:
    """Alternate Viterbi realignment and Gaussian re-estimation.

    Returns the final alignments and the total path score of each iteration;
    the score sequence is non-decreasing.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    feats = [f for f, _ in corpus]
    aligns = [a for _, a in corpus]
    if not aligns:
        raise AlignmentError("empty corpus")
    scores: list[float] = []
    for _ in range(iterations):
        total = 0.0
        new_aligns = []
        for f, a in zip(feats, aligns):
            alignment, score = viterbi_forced_align(
                f, a.words, lexicon, model, transitions, allow_silence
            )
            new_aligns.append(alignment)
            total += score
        aligns = new_aligns
        scores.append(total)
        model = estimate_gaussians(
            zip(feats, aligns), model.inventory, variance_floor=model.variance_floor
        )
    return aligns, scores


# ---------------------------------------------------------------------------
# alignment validation


def check_alignment(alignment: Alignment, lexicon: Lexicon, allow_silence: bool = True) -> None:
    """Replay the 0-1-2 automaton over the frame labels; raise on any violation.

    Checks phone order against some pronunciation of each word, substate
    progression without skips, at least one frame per substate, and silence
    only at the edges or between words.
    """
    inv = lexicon.inventory
    silence_label = StateSpace(inv).silence_label
    runs: list[TriphoneLabel] = []
    for label in alignment.labels:
        if not runs or runs[-1] != label:
            runs.append(label)

    def consume_silence(pos: int) -> int:
        if allow_silence and pos < len(runs) and runs[pos] == silence_label:
            return pos + 1
        return pos

    def match_word(pos: int, word: str) -> Optional[int]:
        for pron in lexicon.pronunciations(word):
            expected = hmm_expand(pron, inv)
            end = pos + len(expected)
            if end <= len(runs) and tuple(runs[pos:end]) == expected:
                return end
        return None

    pos = consume_silence(0)
    for word in alignment.words:
        nxt = match_word(pos, word)
        if nxt is None:
            raise AlignmentError(
                f"alignment does not realize word {word!r} at run {pos}"
            )
        pos = consume_silence(nxt)
    if pos != len(runs):
        raise AlignmentError(f"trailing labels at run {pos} not covered by the transcript")


# ---------------------------------------------------------------------------
# Gaussian-derived factored posteriors


def scorer_from_gaussians(
    model: MonophoneGaussians,
    log_center_prior: np.ndarray,
    features: FeatureSequence,
    inventory: PhonemeInventory,
) -> TableScorer:
    """Turn a monophone Gaussian model into a (context-independent) factored scorer.

    Center posteriors come from Bayes' rule over the center states; the
    context posteriors are induced from them by pooling each phoneme's
    substates, silence mass mapping to the boundary context.
    """
    loglik = log_likelihood_matrix(model, features)
    joint = loglik + np.asarray(log_center_prior)[None, :]
    joint -= joint.max(axis=1, keepdims=True)
    center = np.exp(joint)
    center /= center.sum(axis=1, keepdims=True)
    t_total = center.shape[0]
    c = inventory.num_contexts
    s = inventory.num_center_states
    ctx = np.empty((t_total, c))
    for p in range(inventory.num_phonemes):
        ctx[:, p] = center[:, 3 * p : 3 * p + 3].sum(axis=1)
    ctx[:, inventory.boundary_index] = center[:, inventory.silence_center_index]
    ctx /= ctx.sum(axis=1, keepdims=True)
    di = np.repeat(center[:, None, :], c, axis=1)
    tri = np.repeat(ctx[:, None, :], c * s, axis=1).reshape(t_total, c, s, c)
    return TableScorer(ctx, di, tri)


def save_gaussians(path: str | Path, model: MonophoneGaussians) -> None:
    np.savez(
        path,
        means=model.means,
        variances=model.variances,
        variance_floor=model.variance_floor,
        phonemes=np.array(model.inventory.phonemes),
        silence=model.inventory.silence_symbol,
        boundary=model.inventory.boundary_symbol,
    )


def load_gaussians(path: str | Path, inventory: PhonemeInventory) -> MonophoneGaussians:
    data = np.load(path, allow_pickle=False)
    stored = tuple(str(p) for p in data["phonemes"])
    if stored != inventory.phonemes or str(data["silence"]) != inventory.silence_symbol:
        raise AlignmentError(f"{path}: model was trained on a different inventory")
    return MonophoneGaussians(
        inventory, data["means"], data["variances"], float(data["variance_floor"])
    )


# ---------------------------------------------------------------------------
# alignment files


def write_alignments(
    path: str | Path,
    items: Sequence[tuple[str, Alignment]],
    inventory: PhonemeInventory,
) -> None:
    """`#utt <id> <words>` header then one `t<TAB>left<TAB>center<TAB>right` line per frame."""
    lines = []
    for utt_id, alignment in items:
        lines.append(f"#utt {utt_id} {' '.join(alignment.words)}".rstrip())
        for t, label in enumerate(alignment.labels, 1):
            lines.append(
                f"{t}\t{label.left}\t{inventory.format_center(label.center)}\t{label.right}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_alignments(
    path: str | Path, inventory: PhonemeInventory
) -> list[tuple[str, Alignment]]:
    items: list[tuple[str, Alignment]] = []
    utt_id: Optional[str] = None
    words: tuple[str, ...] = ()
    labels: list[TriphoneLabel] = []

    def flush():
        if utt_id is not None:
            items.append((utt_id, Alignment(words, tuple(labels))))

    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.rstrip()
        if not line:
            continue
        if line.startswith("#utt "):
            flush()
            parts = line.split()
            utt_id = parts[1]
            words = tuple(parts[2:])
            labels = []
            continue
        fields = line.split("\t")
        if len(fields) != 4 or utt_id is None:
            raise AlignmentError(f"{path}:{lineno}: bad alignment line {line!r}")
        _, left, center, right = fields
        labels.append(TriphoneLabel(left, inventory.parse_center(center), right))
    flush()
    return items

