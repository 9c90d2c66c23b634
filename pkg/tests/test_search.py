import math

import numpy as np
import pytest

from fhmm.align import Alignment, TransitionModel
from fhmm.lexicon import Lexicon, build_prefix_tree
from fhmm.phones import StateSpace
from fhmm.priors import ContextPriors, estimate_priors
from fhmm.scoring import AcousticScales, synthetic_scorer
from fhmm.search import (
    BeamConfig,
    BruteForceError,
    EmptyBeamError,
    brute_force_decode,
    decode,
    measure_throughput,
)

from helpers import (
    branchy_lexicon,
    independent_rescore,
    random_decode_instance,
    sample_truth,
    tiny_inventory,
)


def _decode_instance(inst, mode, cfg=None, batched=True):
    tree = build_prefix_tree(inst.lexicon)
    return decode(
        inst.scorer, inst.priors, inst.scales, inst.transitions, inst.lm, inst.alpha,
        tree, cfg or BeamConfig.exhaustive(), mode=mode, batch_scoring=batched,
    )


def test_single_word_one_hot_any_beam():
    inv = tiny_inventory(2)
    lex = Lexicon(inv, {"only": (("a", "b"),)})
    truth = Alignment(("only",), tuple(__import__("fhmm").hmm_expand(("a", "b"), inv)))
    scorer = synthetic_scorer(truth, inv, peak=1.0)
    priors = estimate_priors([truth], inv, floor=1e-8)
    tree = build_prefix_tree(lex)
    for cfg in (BeamConfig(beam_logwidth=1.0, max_hyps=2, word_end_beam=1.0), BeamConfig()):
        res = decode(
            scorer, priors, AcousticScales(), TransitionModel(), None, 0.0, tree, cfg
        )
        assert res.words == ("only",)


@pytest.mark.parametrize("seed", range(20))
def test_oracle_equivalence_small(seed, tmp_path):
    inst = random_decode_instance(seed, tmp_path)
    mode = ("mono", "di", "tri")[seed % 3]
    res = _decode_instance(inst, mode)
    words, score = brute_force_decode(
        inst.scorer, inst.priors, inst.scales, inst.transitions, inst.lm, inst.alpha,
        inst.lexicon, max_words=inst.n_frames // 3, mode=mode,
    )
    assert res.score == pytest.approx(score, abs=1e-8)
    # word sequences agree unless two optima tie exactly
    if res.words != words:
        assert res.score == score


@pytest.mark.parametrize("seed", range(8))
def test_score_decomposition_exact(seed, tmp_path):
    inst = random_decode_instance(seed + 100, tmp_path)
    mode = ("tri", "di", "mono")[seed % 3]
    res = _decode_instance(inst, mode)
    assert independent_rescore(res, inst, mode) == res.score


def test_beam_monotonicity(tmp_path):
    scores = {}
    inst = random_decode_instance(4242, tmp_path)
    for width in (0.5, 2.0, 8.0, 32.0, math.inf):
        cfg = (
            BeamConfig.exhaustive()
            if width == math.inf
            else BeamConfig(beam_logwidth=width, max_hyps=10**9, word_end_beam=width)
        )
        try:
            scores[width] = _decode_instance(inst, "tri", cfg).score
        except EmptyBeamError:
            scores[width] = -math.inf
    widths = sorted(scores)
    for a, b in zip(widths, widths[1:]):
        assert scores[b] >= scores[a] - 1e-12


def test_batched_equals_naive_end_to_end(tmp_path):
    for seed in range(6):
        inst = random_decode_instance(seed + 500, tmp_path)
        cfg = BeamConfig(beam_logwidth=25.0, max_hyps=500, word_end_beam=25.0)
        r1 = _decode_instance(inst, "tri", cfg, batched=True)
        r2 = _decode_instance(inst, "tri", cfg, batched=False)
        assert r1.words == r2.words
        assert r1.score == r2.score  # exact
        assert r1.frame_labels == r2.frame_labels
        assert r1.per_frame_hypotheses == r2.per_frame_hypotheses
        assert r1.scorer_conditions <= r2.scorer_conditions


def test_decode_deterministic_serialization(tmp_path):
    inst = random_decode_instance(77, tmp_path)
    lines = {
        _decode_instance(inst, "tri", BeamConfig(beam_logwidth=10.0, max_hyps=64, word_end_beam=10.0)).serialize("u1")
        for _ in range(3)
    }
    assert len(lines) == 1


def test_scale_doubling_with_uniform_priors_keeps_argmax(tmp_path):
    rng = np.random.default_rng(9)
    lex = branchy_lexicon()
    inv = lex.inventory
    truth = sample_truth(rng, lex, 3)
    scorer = synthetic_scorer(truth, inv, peak=0.8, rng_seed=1, noise=0.1)
    c, s = inv.num_contexts, inv.num_center_states
    uniform = ContextPriors.from_probs(
        inv,
        np.full(c, 1.0 / c),
        np.full((c, s), 1.0 / s),
        np.full((c, s, c), 1.0 / c),
        floor=0.0,
    )
    tm = TransitionModel(beta=0.0)
    tree = build_prefix_tree(lex)
    res1 = decode(scorer, uniform, AcousticScales(1, 1, 1), tm, None, 0.0, tree, BeamConfig.exhaustive())
    res2 = decode(scorer, uniform, AcousticScales(2, 2, 2), tm, None, 0.0, tree, BeamConfig.exhaustive())
    assert res1.words == res2.words


def test_empty_beam_reports_frame():
    inv = tiny_inventory(2)
    lex = Lexicon(inv, {"wb": (("b",),)})
    tree = build_prefix_tree(lex)
    # posteriors put all mass on phoneme `a` labels: every `wb` path and
    # silence itself are impossible from frame 0
    truth = Alignment(("wa",), tuple(__import__("fhmm").hmm_expand(("a",), inv)))
    scorer = synthetic_scorer(truth, inv, peak=1.0)
    priors = estimate_priors([truth], inv, floor=1e-8)
    with pytest.raises(EmptyBeamError, match="frame 0"):
        decode(scorer, priors, AcousticScales(), TransitionModel(), None, 0.0, tree)


def test_brute_force_empty_sequence():
    inv = tiny_inventory(1)
    lex = Lexicon(inv, {"wa": (("a",),)})
    space = StateSpace(inv)
    truth = Alignment(("x",), (space.silence_label,) * 4)
    scorer = synthetic_scorer(truth, inv, peak=1.0)
    priors = estimate_priors([truth], inv, floor=1e-8)
    tm = TransitionModel()
    words, score = brute_force_decode(
        scorer, priors, AcousticScales(), tm, None, 0.0, lex, max_words=0
    )
    assert words == ()
    # silence-only path: T emissions + (T-1) silence loops
    sil = space.silence_label
    posts = [scorer.frame_posteriors(t) for t in range(4)]
    from fhmm.scoring import combine_factored_score

    want = combine_factored_score(posts[0], priors, AcousticScales(), sil)
    for t in range(1, 4):
        want = want + tm.beta * tm.silence_loop
        want = want + combine_factored_score(posts[t], priors, AcousticScales(), sil)
    assert score == want


def test_brute_force_refuses_large_instances():
    rng = np.random.default_rng(10)
    lex = branchy_lexicon()
    truth = sample_truth(rng, lex, 6)
    scorer = synthetic_scorer(truth, lex.inventory, peak=1.0)
    priors = estimate_priors([truth], lex.inventory, floor=1e-8)
    with pytest.raises(BruteForceError, match="too large"):
        brute_force_decode(
            scorer, priors, AcousticScales(), TransitionModel(), None, 0.0, lex,
            max_words=12,
        )


def test_throughput_report_counts(tmp_path):
    rng = np.random.default_rng(12)
    lex = branchy_lexicon()
    truth = sample_truth(rng, lex, 8)
    scorer = synthetic_scorer(truth, lex.inventory, peak=0.6, rng_seed=2, noise=0.4)
    priors = estimate_priors([truth], lex.inventory, floor=1e-8)
    tree = build_prefix_tree(lex)
    cfg = BeamConfig(beam_logwidth=60.0, max_hyps=3000, word_end_beam=60.0)
    cached = decode(scorer, priors, AcousticScales(), TransitionModel(), None, 0.0, tree, cfg)
    fresh = synthetic_scorer(truth, lex.inventory, peak=0.6, rng_seed=2, noise=0.4)
    naive = decode(fresh, priors, AcousticScales(), TransitionModel(), None, 0.0, tree, cfg, batch_scoring=False)
    assert cached.words == naive.words and cached.score == naive.score
    assert cached.scorer_conditions <= naive.scorer_conditions
    assert naive.scorer_conditions == naive.naive_conditions
    rep = measure_throughput(cached)
    assert rep.n_frames == truth.num_frames
    assert rep.naive_conditions == sum(cached.per_frame_active_labels)
    assert 0.0 <= rep.relative_saving <= 1.0
    dup_frames = [
        p < l for p, l in zip(cached.per_frame_active_pairs, cached.per_frame_active_labels)
    ]
    if any(dup_frames):
        assert cached.scorer_conditions < naive.scorer_conditions


def test_decode_rejects_dimension_mismatch():
    inv3 = tiny_inventory(3)
    lex3 = Lexicon(inv3, {"w": (("a",),)})
    rng = np.random.default_rng(0)
    truth = sample_truth(rng, lex3, 1)
    scorer = synthetic_scorer(truth, inv3, peak=1.0)
    inv2 = tiny_inventory(2)
    lex2 = Lexicon(inv2, {"w": (("a",),)})
    tree = build_prefix_tree(lex2)
    priors = estimate_priors([truth], inv3, floor=1e-8)
    with pytest.raises(ValueError, match="dimensions"):
        decode(scorer, priors, AcousticScales(), TransitionModel(), None, 0.0, tree)
