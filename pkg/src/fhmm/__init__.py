"""Factored triphone hybrid-HMM toolkit: scoring, search, alignment, targets."""

from .align import (
    Alignment,
    AlignmentError,
    FactoredEmission,
    MonophoneGaussians,
    TransitionModel,
    check_alignment,
    estimate_gaussians,
    gaussian_frame_log_likelihood,
    linear_segmentation,
    read_alignments,
    realign_corpus,
    scorer_from_gaussians,
    viterbi_forced_align,
    write_alignments,
)
from .config import Config, ConfigError
from .features import FeatureSequence, read_features, write_features
from .lexicon import Lexicon, LexiconError, PrefixTree, build_prefix_tree, hmm_expand
from .ngram import ArpaError, NGramLM, OovError, load_arpa, save_arpa, score_word
from .phones import (
    CenterState,
    InventoryError,
    PhonemeInventory,
    StateSpace,
    TriphoneLabel,
    build_state_space,
)
from .priors import (
    ContextPriors,
    MissingPriorError,
    PriorsError,
    estimate_priors,
    floor_distribution,
)
from .scoring import (
    AcousticScales,
    FactoredFramePosteriors,
    FactoredScorer,
    PosteriorFileError,
    ScoreCache,
    TableScorer,
    batch_score_frame,
    combine_diphone_score,
    combine_factored_score,
    combine_monophone_score,
    synthetic_scorer,
    table_scorer_from_file,
    write_posterior_dump,
)
from .search import (
    BeamConfig,
    BruteForceError,
    DecodeResult,
    EmptyBeamError,
    Hypothesis,
    ThroughputReport,
    brute_force_decode,
    decode,
    measure_throughput,
)
from .targets import (
    LSPolicy,
    MaskParams,
    SoftTargets,
    chunk,
    read_targets,
    smooth_targets,
    time_feature_mask,
    write_targets,
)
from .wer import EvalCounts, wer

__version__ = "0.1.0"
