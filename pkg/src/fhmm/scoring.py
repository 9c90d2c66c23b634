"""Factored acoustic scoring.

The acoustic score of a triphone label is a scaled log-linear combination of
three conditional posteriors (left context, center state given left, right
context given left and center) divided by the matching priors:

    log p(right | left, center, x) - g_r * log p(right | left, center)
  + log p(center | left, x)        - g_c * log p(center | left)
  + log p(left | x)                - g_l * log p(left)

All probabilities are converted to natural logs once, at table construction;
every scoring path afterwards is pure float arithmetic with one fixed
left-to-right summation order.  Batched scoring over the active
(left, center) pairs of a frame is therefore bit-identical to scoring each
label on its own.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

from .phones import CenterState, PhonemeInventory, TriphoneLabel
from .priors import ContextPriors, MissingPriorError

if TYPE_CHECKING:
    from .align import Alignment

POSTERIOR_MAGIC = b"FHPD"
POSTERIOR_VERSION = 1


class PosteriorFileError(ValueError):
    pass


@dataclass(frozen=True)
class AcousticScales:
    """Exponents on the three prior terms of the acoustic score."""

    gamma_left: float = 1.0
    gamma_center: float = 1.0
    gamma_right: float = 1.0

    def __post_init__(self):
        for name in ("gamma_left", "gamma_center", "gamma_right"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


def _log(arr: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(arr)


class FactoredFramePosteriors:
    """One frame's factored posteriors: p(l|x), p(c|l,x), p(r|l,c,x).

    Stored densely over the context / center-state axes, in both probability
    and log domain.  The center marginal p(c|x) = sum_l p(l|x) p(c|l,x)
    backs monophone-mode scoring.
    """

    def __init__(
        self,
        mono: np.ndarray,
        di: np.ndarray,
        tri: np.ndarray,
        *,
        logs: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
        center_marginal: Optional[tuple[np.ndarray, np.ndarray]] = None,
        validate: bool = True,
        atol: float = 1e-6,
    ):
        self.mono = np.asarray(mono, dtype=np.float64)
        self.di = np.asarray(di, dtype=np.float64)
        self.tri = np.asarray(tri, dtype=np.float64)
        c = self.mono.shape[0]
        s = self.di.shape[-1]
        if self.mono.shape != (c,) or self.di.shape != (c, s) or self.tri.shape != (c, s, c):
            raise ValueError(
                f"inconsistent posterior shapes {self.mono.shape} {self.di.shape} {self.tri.shape}"
            )
        if validate:
            for name, arr in (("mono", self.mono), ("di", self.di), ("tri", self.tri)):
                if np.any(arr < 0):
                    raise ValueError(f"{name} posteriors contain negative entries")
                sums = arr.sum(axis=-1)
                if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
                    raise ValueError(f"{name} posteriors do not sum to 1 within {atol}")
        if logs is None:
            self.log_mono, self.log_di, self.log_tri = _log(self.mono), _log(self.di), _log(self.tri)
        else:
            self.log_mono, self.log_di, self.log_tri = logs
        if center_marginal is None:
            marg = self.mono @ self.di
            self.center_marginal = marg
            self.log_center_marginal = _log(marg)
        else:
            self.center_marginal, self.log_center_marginal = center_marginal

    @property
    def num_contexts(self) -> int:
        return self.mono.shape[0]

    @property
    def num_center_states(self) -> int:
        return self.di.shape[-1]


@dataclass
class ScorerStats:
    """Counts of scorer traffic; the batching contract is verified against these."""

    mono_calls: int = 0
    di_calls: int = 0
    di_conditions: int = 0
    tri_calls: int = 0
    tri_conditions: int = 0

    def copy(self) -> "ScorerStats":
        return ScorerStats(**self.__dict__)


class FactoredScorer:
    """Per-frame source of the factored conditional posteriors, log domain.

    Implementations are pure functions of (frame, condition): repeated
    queries return identical values.  Batch queries are counted in ``stats``
    so callers can report and bound scorer traffic.
    """

    num_frames: int
    num_contexts: int
    num_center_states: int
    stats: ScorerStats

    def log_mono(self, frame: int) -> np.ndarray:
        raise NotImplementedError

    def log_di_rows(self, frame: int, lefts: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def log_tri_rows(self, frame: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        raise NotImplementedError

    def log_center_marginal(self, frame: int) -> np.ndarray:
        raise NotImplementedError

    def frame_posteriors(self, frame: int) -> FactoredFramePosteriors:
        raise NotImplementedError


class TableScorer(FactoredScorer):
    """Scorer backed by dense per-frame posterior tables (file replay, fixtures)."""

    def __init__(
        self,
        mono: np.ndarray,
        di: np.ndarray,
        tri: np.ndarray,
        *,
        validate: bool = True,
        atol: float = 1e-6,
    ):
        self.mono = np.asarray(mono, dtype=np.float64)
        self.di = np.asarray(di, dtype=np.float64)
        self.tri = np.asarray(tri, dtype=np.float64)
        t = self.mono.shape[0]
        c = self.mono.shape[1] if self.mono.ndim == 2 else 0
        s = self.di.shape[2] if self.di.ndim == 3 else 0
        if self.mono.shape != (t, c) or self.di.shape != (t, c, s) or self.tri.shape != (t, c, s, c):
            raise ValueError(
                f"inconsistent table shapes {self.mono.shape} {self.di.shape} {self.tri.shape}"
            )
        if validate and t:
            for name, arr in (("mono", self.mono), ("di", self.di), ("tri", self.tri)):
                if np.any(arr < 0):
                    raise ValueError(f"{name} posteriors contain negative entries")
                if not np.allclose(arr.sum(axis=-1), 1.0, rtol=0.0, atol=atol):
                    raise ValueError(f"{name} posteriors do not sum to 1 within {atol}")
        self._log_mono = _log(self.mono)
        self._log_di = _log(self.di)
        self._log_tri = _log(self.tri)
        self._center_marginal = np.einsum("tc,tcs->ts", self.mono, self.di)
        self._log_center_marginal = _log(self._center_marginal)
        self.num_frames = t
        self.num_contexts = c
        self.num_center_states = s
        self.stats = ScorerStats()

    def log_mono(self, frame: int) -> np.ndarray:
        self.stats.mono_calls += 1
        return self._log_mono[frame]

    def log_di_rows(self, frame: int, lefts: Sequence[int]) -> np.ndarray:
        self.stats.di_calls += 1
        self.stats.di_conditions += len(lefts)
        return self._log_di[frame, list(lefts)]

    def log_tri_rows(self, frame: int, pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        self.stats.tri_calls += 1
        self.stats.tri_conditions += len(pairs)
        ls = [p[0] for p in pairs]
        cs = [p[1] for p in pairs]
        return self._log_tri[frame, ls, cs]

    def log_center_marginal(self, frame: int) -> np.ndarray:
        self.stats.mono_calls += 1
        return self._log_center_marginal[frame]

    def frame_posteriors(self, frame: int) -> FactoredFramePosteriors:
        return FactoredFramePosteriors(
            self.mono[frame],
            self.di[frame],
            self.tri[frame],
            logs=(self._log_mono[frame], self._log_di[frame], self._log_tri[frame]),
            center_marginal=(self._center_marginal[frame], self._log_center_marginal[frame]),
            validate=False,
        )


def synthetic_scorer(
    truth: "Alignment",
    inventory: PhonemeInventory,
    peak: float,
    rng_seed: int = 0,
    noise: float = 0.0,
) -> TableScorer:
    """Posteriors concentrated on a known alignment: test and demo fixture.

    At every frame, mass ``peak`` sits on the true value of each factor and
    the remainder spreads uniformly over the other classes.  ``noise`` mixes
    in a seeded random perturbation (0 keeps the exact peaked shape).
    """
    if not 0.0 < peak <= 1.0:
        raise ValueError(f"peak must be in (0, 1], got {peak}")
    from .phones import StateSpace

    space = StateSpace(inventory)
    c, s = inventory.num_contexts, inventory.num_center_states
    t = len(truth.labels)
    mono = np.empty((t, c))
    di = np.empty((t, c, s))
    tri = np.empty((t, c, s, c))

    def peaked(k: int, true_idx: int) -> np.ndarray:
        if k == 1:
            return np.ones(1)
        row = np.full(k, (1.0 - peak) / (k - 1))
        row[true_idx] = peak
        return row

    for i, label in enumerate(truth.labels):
        l, cc, r = space.factor_indices(label)
        mono[i] = peaked(c, l)
        di[i, :, :] = peaked(s, cc)
        tri[i, :, :, :] = peaked(c, r)
    if noise > 0.0:
        rng = np.random.default_rng(rng_seed)
        for arr in (mono, di, tri):
            jitter = rng.uniform(0.0, 1.0, size=arr.shape)
            mixed = (1.0 - noise) * arr + noise * jitter
            arr[...] = mixed / mixed.sum(axis=-1, keepdims=True)
    return TableScorer(mono, di, tri)


# ---------------------------------------------------------------------------
# score combination


def _label_indices(inv: PhonemeInventory, label: TriphoneLabel) -> tuple[int, int, int]:
    if label.center.is_silence and (
        label.left != inv.boundary_symbol or label.right != inv.boundary_symbol
    ):
        raise ValueError(f"silence label must use boundary contexts: {label}")
    return (
        inv.context_index(label.left),
        inv.center_index(label.center),
        inv.context_index(label.right),
    )


def _require_priors(priors: ContextPriors, what: str, *values: float) -> None:
    for v in values:
        if v == -math.inf or math.isnan(v):
            raise MissingPriorError(
                f"zero prior for {what}; estimate priors with a positive floor"
            )


def combine_factored_score(
    post: FactoredFramePosteriors,
    priors: ContextPriors,
    scales: AcousticScales,
    label: TriphoneLabel,
) -> float:
    """Scaled log-linear triphone score of one label at one frame."""
    l, c, r = _label_indices(priors.inventory, label)
    lp_r = priors.log_right_given_left_center[l, c, r]
    lp_c = priors.log_center_given_left[l, c]
    lp_l = priors.log_left[l]
    _require_priors(priors, f"label {label}", lp_r, lp_c, lp_l)
    return float(
        post.log_tri[l, c, r]
        - scales.gamma_right * lp_r
        + post.log_di[l, c]
        - scales.gamma_center * lp_c
        + post.log_mono[l]
        - scales.gamma_left * lp_l
    )


def combine_diphone_score(
    post: FactoredFramePosteriors,
    priors: ContextPriors,
    scales: AcousticScales,
    left: str,
    center: CenterState,
) -> float:
    """Diphone (left context + center state) reduction of the factored score."""
    inv = priors.inventory
    l = inv.context_index(left)
    c = inv.center_index(center)
    lp_c = priors.log_center_given_left[l, c]
    lp_l = priors.log_left[l]
    _require_priors(priors, f"({left}, center {c})", lp_c, lp_l)
    return float(
        post.log_di[l, c]
        - scales.gamma_center * lp_c
        + post.log_mono[l]
        - scales.gamma_left * lp_l
    )


def combine_monophone_score(
    post: FactoredFramePosteriors,
    priors: ContextPriors,
    scale: float,
    center: CenterState,
) -> float:
    """Context-free center-state score: marginal posterior over marginal prior."""
    c = priors.inventory.center_index(center)
    lp = priors.log_center_marginal[c]
    _require_priors(priors, f"center {c}", lp)
    return float(post.log_center_marginal[c] - scale * lp)


# ---------------------------------------------------------------------------
# batched scoring with an active-condition cache

Pair = tuple[int, int]


@dataclass
class CacheStats:
    queries: int = 0
    hits: int = 0
    misses: int = 0


class ScoreCache:
    """Per-decode cache of combined score vectors, keyed by frame and condition.

    Within a frame the backing scorer is consulted at most once per distinct
    condition; repeated queries are served from the cache.
    """

    def __init__(self):
        self._tri: dict[int, dict[Pair, np.ndarray]] = {}
        self._di: dict[int, dict[int, np.ndarray]] = {}
        self._mono: dict[int, np.ndarray] = {}
        self._raw_mono: dict[int, np.ndarray] = {}
        self._raw_di: dict[int, dict[int, np.ndarray]] = {}
        self.stats = CacheStats()

    def raw_mono(self, scorer: FactoredScorer, frame: int) -> np.ndarray:
        row = self._raw_mono.get(frame)
        if row is None:
            row = scorer.log_mono(frame)
            self._raw_mono[frame] = row
        return row

    def raw_di(self, scorer: FactoredScorer, frame: int, lefts: Iterable[int]) -> dict[int, np.ndarray]:
        rows = self._raw_di.setdefault(frame, {})
        missing = sorted(set(lefts) - rows.keys())
        if missing:
            fetched = scorer.log_di_rows(frame, missing)
            for l, row in zip(missing, fetched):
                rows[l] = row
        return rows

    def distinct_tri_conditions(self, frame: int) -> int:
        return len(self._tri.get(frame, ()))


def tri_score_vector(
    log_tri_row: np.ndarray,
    log_di_value: float,
    log_mono_value: float,
    priors: ContextPriors,
    scales: AcousticScales,
    l: int,
    c: int,
) -> np.ndarray:
    """Combined triphone scores over all right contexts for one (left, center) pair."""
    return (
        log_tri_row
        - scales.gamma_right * priors.log_right_given_left_center[l, c]
        + log_di_value
        - scales.gamma_center * priors.log_center_given_left[l, c]
        + log_mono_value
        - scales.gamma_left * priors.log_left[l]
    )


def di_score_vector(
    log_di_row: np.ndarray,
    log_mono_value: float,
    priors: ContextPriors,
    scales: AcousticScales,
    l: int,
) -> np.ndarray:
    """Combined diphone scores over all center states for one left context."""
    return (
        log_di_row
        - scales.gamma_center * priors.log_center_given_left[l]
        + log_mono_value
        - scales.gamma_left * priors.log_left[l]
    )


def mono_score_vector(
    log_center_marginal_row: np.ndarray, priors: ContextPriors, scale: float
) -> np.ndarray:
    """Combined monophone scores over all center states."""
    return log_center_marginal_row - scale * priors.log_center_marginal


def batch_score_frame(
    scorer: FactoredScorer,
    cache: ScoreCache,
    frame: int,
    active: Iterable[Pair],
    priors: ContextPriors,
    scales: AcousticScales,
) -> dict[Pair, np.ndarray]:
    """Score one frame's active (left, center) pairs in a single deduplicated batch.

    Returns, per pair, the combined score vector over all right contexts.
    Results are bit-identical to scoring each label individually and are
    cached for the remainder of the decode.
    """
    pairs = sorted(set(active))
    tri_map = cache._tri.setdefault(frame, {})
    missing = [p for p in pairs if p not in tri_map]
    cache.stats.queries += len(pairs)
    cache.stats.hits += len(pairs) - len(missing)
    cache.stats.misses += len(missing)
    if missing:
        mono = cache.raw_mono(scorer, frame)
        di_rows = cache.raw_di(scorer, frame, (l for l, _ in missing))
        tri_rows = scorer.log_tri_rows(frame, missing)
        for (l, c), row in zip(missing, tri_rows):
            tri_map[(l, c)] = tri_score_vector(row, di_rows[l][c], mono[l], priors, scales, l, c)
    return {p: tri_map[p] for p in pairs}


def naive_score_label(
    scorer: FactoredScorer,
    frame: int,
    l: int,
    c: int,
    r: int,
    priors: ContextPriors,
    scales: AcousticScales,
) -> float:
    """Score a single label with its own scorer call (the unbatched reference path)."""
    row = scorer.log_tri_rows(frame, [(l, c)])[0]
    di_row = scorer.log_di_rows(frame, [l])[0]
    mono = scorer.log_mono(frame)
    return float(tri_score_vector(row, di_row[c], mono[l], priors, scales, l, c)[r])


def checked_score(value: float, what: str) -> float:
    """Reject scores poisoned by a zero prior (+inf or NaN); -inf is legal."""
    if math.isnan(value) or value == math.inf:
        raise MissingPriorError(
            f"zero prior encountered scoring {what}; estimate priors with a positive floor"
        )
    return value


# ---------------------------------------------------------------------------
# posterior dump files


def write_posterior_dump(path: str | Path, scorer: TableScorer) -> None:
    """Serialize a table scorer: header, then per frame the mono, di and tri rows."""
    t = scorer.num_frames
    c = scorer.num_contexts
    p = c - 1
    with open(path, "wb") as fh:
        fh.write(POSTERIOR_MAGIC)
        fh.write(struct.pack("<III", POSTERIOR_VERSION, t, p))
        for i in range(t):
            fh.write(scorer.mono[i].astype("<f4").tobytes())
            fh.write(scorer.di[i].astype("<f4").tobytes())
            fh.write(scorer.tri[i].astype("<f4").tobytes())


def table_scorer_from_file(path: str | Path) -> TableScorer:
    """Load a posterior dump; distributions are checked frame by frame."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise PosteriorFileError(f"{path}: truncated header at byte {len(data)}")
    if data[:4] != POSTERIOR_MAGIC:
        raise PosteriorFileError(f"{path}: bad magic {data[:4]!r}")
    version, t, p = struct.unpack("<III", data[4:16])
    if version != POSTERIOR_VERSION:
        raise PosteriorFileError(f"{path}: unsupported version {version}")
    c = p + 1
    s = 3 * p + 1
    per_frame = c + c * s + c * s * c
    need = 16 + 4 * per_frame * t
    if len(data) != need:
        raise PosteriorFileError(
            f"{path}: truncated at byte {len(data)}, expected {need}"
        )
    raw = np.frombuffer(data[16:], dtype="<f4").astype(np.float64).reshape(t, per_frame)
    mono = raw[:, :c]
    di = raw[:, c : c + c * s].reshape(t, c, s)
    tri = raw[:, c + c * s :].reshape(t, c, s, c)
    for i in range(t):
        for name, arr in (("mono", mono[i]), ("di", di[i]), ("tri", tri[i])):
            if np.any(arr < 0) or not np.allclose(arr.sum(axis=-1), 1.0, rtol=0.0, atol=1e-4):
                raise PosteriorFileError(
                    f"{path}: frame {i}: {name} distributions malformed"
                )
    return TableScorer(mono, di, tri, validate=False)
