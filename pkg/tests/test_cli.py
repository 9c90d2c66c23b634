import numpy as np
import pytest

from fhmm.align import read_alignments
from fhmm.cli import main
from fhmm.phones import PhonemeInventory
from fhmm.targets import read_targets

from helpers import SCRIPTS  # noqa: F401  (puts scripts/ on sys.path)

from make_toy_corpus import build_toy_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    return build_toy_corpus(root, seed=0, n_utterances=6)


def run(*argv):
    return main([str(a) for a in argv])


def test_full_pipeline(corpus, tmp_path, capsys):
    work = tmp_path
    assert run(
        "flatstart-align", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--transcripts", corpus["ref"], "--features-dir", corpus["features"],
        "--out", work / "flat.txt",
    ) == 0
    assert run(
        "train-mono", "--phones", corpus["phones"], "--features-dir", corpus["features"],
        "--alignments", work / "flat.txt", "--out", work / "mono.npz",
    ) == 0
    assert run(
        "realign", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--features-dir", corpus["features"], "--alignments", work / "flat.txt",
        "--model", work / "mono.npz", "--iterations", 3, "--out", work / "re.txt",
    ) == 0
    out = capsys.readouterr().out
    totals = [float(l.rsplit(" ", 1)[1]) for l in out.splitlines() if l.startswith("iteration")]
    assert len(totals) == 3 and all(b >= a - 1e-9 for a, b in zip(totals, totals[1:]))

    assert run(
        "estimate-priors", "--phones", corpus["phones"], "--alignments", work / "re.txt",
        "--out", work / "priors.txt",
    ) == 0
    assert run(
        "decode", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--posteriors-dir", corpus["posteriors"], "--priors", work / "priors.txt",
        "--lm", corpus["lm"], "--config", corpus["config"],
        "--out", work / "hyp.txt", "--trace", work / "trace.txt",
    ) == 0
    capsys.readouterr()
    assert run("score-wer", "--ref", corpus["ref"], "--hyp", work / "hyp.txt", "--scored") == 0
    out = capsys.readouterr().out
    assert "WER 0.0000" in out
    # hypothesis words match the references exactly
    refs = {l.split()[0]: l.split()[1:] for l in corpus["ref"].read_text().splitlines()}
    hyps = {l.split()[0]: l.split()[2:] for l in (work / "hyp.txt").read_text().splitlines()}
    assert refs == hyps
    trace = (work / "trace.txt").read_text().splitlines()
    assert trace[0].startswith("# utt")
    assert len(trace) > 10


def test_estimate_priors_deterministic(corpus, tmp_path):
    a, b = tmp_path / "p1.txt", tmp_path / "p2.txt"
    for out in (a, b):
        assert run(
            "estimate-priors", "--phones", corpus["phones"],
            "--alignments", corpus["align_ref"], "--out", out,
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_targets(corpus, tmp_path):
    out_dir = tmp_path / "targets"
    assert run(
        "gen-targets", "--phones", corpus["phones"], "--alignments", corpus["align_ref"],
        "--out-dir", out_dir, "--epsilon", 0.2,
    ) == 0
    inv = PhonemeInventory.from_file(corpus["phones"])
    items = read_alignments(corpus["align_ref"], inv)
    targets = read_targets(out_dir / f"{items[0][0]}.fhtg")
    assert targets.num_frames == items[0][1].num_frames
    assert np.all(targets.center.max(axis=1) == 1.0)  # default keeps center hard
    assert targets.left.max() == pytest.approx(0.8, abs=1e-6)


def test_bench_cache_equivalence(corpus, tmp_path, capsys):
    assert run(
        "bench", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--posteriors-dir", corpus["posteriors"], "--priors", tmp_path / "p.txt",
        "--out-dir", tmp_path / "bench",
    ) == 1  # missing priors file -> clean nonzero exit
    capsys.readouterr()
    assert run(
        "estimate-priors", "--phones", corpus["phones"],
        "--alignments", corpus["align_ref"], "--out", tmp_path / "p.txt",
    ) == 0
    assert run(
        "bench", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--posteriors-dir", corpus["posteriors"], "--priors", tmp_path / "p.txt",
        "--lm", corpus["lm"], "--out-dir", tmp_path / "bench",
    ) == 0
    out = capsys.readouterr().out
    assert "cached:" in out and "naive:" in out
    cached = (tmp_path / "bench" / "cached.txt").read_bytes()
    naive = (tmp_path / "bench" / "naive.txt").read_bytes()
    assert cached == naive


def test_oracle_decode_matches_decode(corpus, tmp_path):
    assert run(
        "estimate-priors", "--phones", corpus["phones"],
        "--alignments", corpus["align_ref"], "--out", tmp_path / "p.txt",
    ) == 0
    assert run(
        "decode", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--posteriors-dir", corpus["posteriors"], "--priors", tmp_path / "p.txt",
        "--lm", corpus["lm"], "--out", tmp_path / "hyp.txt",
    ) == 0
    assert run(
        "oracle-decode", "--phones", corpus["phones"], "--lexicon", corpus["lexicon"],
        "--posteriors-dir", corpus["posteriors"], "--priors", tmp_path / "p.txt",
        "--lm", corpus["lm"], "--out", tmp_path / "oracle.txt", "--max-words", 4,
    ) == 0
    hyp = {l.split()[0]: l.split()[2:] for l in (tmp_path / "hyp.txt").read_text().splitlines()}
    oracle = {l.split()[0]: l.split()[2:] for l in (tmp_path / "oracle.txt").read_text().splitlines()}
    assert hyp == oracle


def test_unknown_flag_exits_nonzero(corpus):
    with pytest.raises(SystemExit) as exc:
        run("decode", "--nonsense")
    assert exc.value.code == 2


def test_missing_file_clean_error(tmp_path, capsys):
    rc = run(
        "estimate-priors", "--phones", tmp_path / "nope.txt",
        "--alignments", tmp_path / "nope2.txt", "--out", tmp_path / "o.txt",
    )
    assert rc == 1
    assert "error" in capsys.readouterr().err
