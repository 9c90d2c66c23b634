import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fhmm.wer import EvalCounts, wer

from helpers import levenshtein

WORDS = ("a", "b", "c", "d")


def test_exact_match():
    counts = wer("a b c".split(), "a b c".split())
    assert (counts.substitutions, counts.deletions, counts.insertions) == (0, 0, 0)
    assert counts.wer == 0.0


def test_single_substitution():
    counts = wer("a b c".split(), "a x c".split())
    assert (counts.substitutions, counts.deletions, counts.insertions) == (1, 0, 0)
    assert counts.wer == pytest.approx(1 / 3)


def test_empty_hypothesis_all_deletions():
    counts = wer("a b".split(), [])
    assert counts.deletions == 2 and counts.wer == 1.0


def test_empty_reference():
    assert wer([], []).wer == 0.0
    assert wer([], ["x"]).wer == float("inf")


def test_tie_prefers_substitution():
    counts = wer(["a"], ["b"])
    assert (counts.substitutions, counts.deletions, counts.insertions) == (1, 0, 0)


def test_counts_are_consistent():
    ref = "a b c d".split()
    hyp = "b c d e e".split()
    counts = wer(ref, hyp)
    assert counts.errors == levenshtein(tuple(ref), tuple(hyp))
    # matched words on both sides agree
    assert len(ref) - counts.deletions - counts.substitutions == len(hyp) - counts.insertions - counts.substitutions


def test_eval_counts_add():
    total = EvalCounts(1, 0, 0, 3) + EvalCounts(0, 2, 1, 5)
    assert total == EvalCounts(1, 2, 1, 8)
    assert total.wer == pytest.approx(4 / 8)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.sampled_from(WORDS), max_size=8),
    st.lists(st.sampled_from(WORDS), max_size=8),
)
def test_matches_recursive_oracle(ref, hyp):
    counts = wer(ref, hyp)
    assert counts.errors == levenshtein(tuple(ref), tuple(hyp))
    assert counts.reference_length == len(ref)


def test_thousand_random_pairs_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        ref = [WORDS[i] for i in rng.integers(0, len(WORDS), rng.integers(0, 9))]
        hyp = [WORDS[i] for i in rng.integers(0, len(WORDS), rng.integers(0, 9))]
        assert wer(ref, hyp).errors == levenshtein(tuple(ref), tuple(hyp))
