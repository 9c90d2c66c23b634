"""Training targets from alignments: label smoothing, chunking, masking.

Smoothing follows the center-hard scheme: the center-state output keeps its
hard one-hot target while the two context outputs are interpolated toward a
uniform distribution over the other classes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .phones import PhonemeInventory, StateSpace

if TYPE_CHECKING:
    from .align import Alignment

TARGETS_MAGIC = b"FHTG"
TARGETS_VERSION = 1


class TargetsError(ValueError):
    pass


@dataclass(frozen=True)
class LSPolicy:
    """Smoothing mass and per-output on/off switches.

    The defaults smooth only the context outputs and keep the center state
    hard, with mass 0.2.
    """

    epsilon: float = 0.2
    left: bool = True
    center: bool = False
    right: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise TargetsError(f"epsilon must be in [0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class SoftTargets:
    """Per-frame target distributions for the three outputs."""

    left: np.ndarray  # (T, C)
    center: np.ndarray  # (T, S)
    right: np.ndarray  # (T, C)

    def __post_init__(self):
        for name in ("left", "center", "right"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise TargetsError(f"{name} targets must be 2-d")
            if not np.allclose(arr.sum(axis=1), 1.0, rtol=0.0, atol=1e-6):
                raise TargetsError(f"{name} target rows must sum to 1 within 1e-6")
            object.__setattr__(self, name, arr)

    @property
    def num_frames(self) -> int:
        return self.left.shape[0]


def _target_rows(indices: list[int], k: int, smooth: bool, epsilon: float) -> np.ndarray:
    if smooth and epsilon > 0.0 and k < 2:
        raise TargetsError("cannot smooth an output with fewer than 2 classes")
    rows = np.zeros((len(indices), k))
    if smooth and epsilon > 0.0:
        rows[:] = epsilon / (k - 1)
        rows[np.arange(len(indices)), indices] = 1.0 - epsilon
    else:
        rows[np.arange(len(indices)), indices] = 1.0
    return rows


def smooth_targets(
    alignment: "Alignment", inventory: PhonemeInventory, policy: LSPolicy
) -> SoftTargets:
    """Soft targets for an alignment: true class 1-eps, eps/(K-1) elsewhere.

    Outputs with smoothing switched off stay exactly one-hot.
    """
    space = StateSpace(inventory)
    lefts, centers, rights = [], [], []
    for label in alignment.labels:
        l, c, r = space.factor_indices(label)
        lefts.append(l)
        centers.append(c)
        rights.append(r)
    c_dim, s_dim = inventory.num_contexts, inventory.num_center_states
    return SoftTargets(
        left=_target_rows(lefts, c_dim, policy.left, policy.epsilon),
        center=_target_rows(centers, s_dim, policy.center, policy.epsilon),
        right=_target_rows(rights, c_dim, policy.right, policy.epsilon),
    )


def chunk(total: int, chunk_len: int = 128, overlap: float = 0.5) -> list[tuple[int, int]]:
    """Chunk [0, total) into windows of ``chunk_len`` with the given overlap.

    Window starts advance by chunk_len * (1 - overlap); ends are clipped at
    ``total``.  A sequence no longer than one chunk yields a single window.
    """
    if total < 1:
        raise TargetsError("sequence length must be positive")
    if chunk_len < 1:
        raise TargetsError("chunk length must be positive")
    if not 0.0 <= overlap < 1.0:
        raise TargetsError("overlap must be in [0, 1)")
    if total <= chunk_len:
        return [(0, total)]
    stride = max(1, int(round(chunk_len * (1.0 - overlap))))
    return [(s, min(s + chunk_len, total)) for s in range(0, total, stride)]


@dataclass(frozen=True)
class MaskParams:
    """Band counts and maximum widths for time/feature masking.

    Defaults are placeholders, not tuned values.
    """

    max_time_masks: int = 2
    max_time_width: int = 20
    max_feat_masks: int = 1
    max_feat_width: int = 8


def time_feature_mask(
    n_frames: int, dim: int, params: MaskParams, seed: int
) -> np.ndarray:
    """Boolean (T, D) mask: union of full-height time bands and full-width feature bands.

    For each band the generator draws a width in [0, max_width] and then a
    start in [0, size - width]; the draw order (time bands first) is part of
    the contract, so a fixed seed replays exactly.
    """
    rng = np.random.default_rng(seed)
    mask = np.zeros((n_frames, dim), dtype=bool)
    for _ in range(params.max_time_masks):
        w = min(int(rng.integers(0, params.max_time_width + 1)), n_frames)
        start = int(rng.integers(0, n_frames - w + 1))
        mask[start : start + w, :] = True
    for _ in range(params.max_feat_masks):
        w = min(int(rng.integers(0, params.max_feat_width + 1)), dim)
        start = int(rng.integers(0, dim - w + 1))
        mask[:, start : start + w] = True
    return mask


def write_targets(path: str | Path, targets: SoftTargets) -> None:
    t = targets.num_frames
    with open(path, "wb") as fh:
        fh.write(TARGETS_MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                TARGETS_VERSION,
                t,
                targets.left.shape[1],
                targets.center.shape[1],
                targets.right.shape[1],
            )
        )
        for i in range(t):
            fh.write(targets.left[i].astype("<f4").tobytes())
            fh.write(targets.center[i].astype("<f4").tobytes())
            fh.write(targets.right[i].astype("<f4").tobytes())


def read_targets(path: str | Path) -> SoftTargets:
    data = Path(path).read_bytes()
    if data[:4] != TARGETS_MAGIC:
        raise TargetsError(f"{path}: bad magic {data[:4]!r}")
    version, t, c_dim, s_dim, c_dim2 = struct.unpack("<IIIII", data[4:24])
    if version != TARGETS_VERSION or c_dim != c_dim2:
        raise TargetsError(f"{path}: bad header")
    per_frame = c_dim + s_dim + c_dim2
    need = 24 + 4 * per_frame * t
    if len(data) != need:
        raise TargetsError(f"{path}: truncated at byte {len(data)}, expected {need}")
    raw = np.frombuffer(data[24:], dtype="<f4").astype(np.float64).reshape(t, per_frame)
    return SoftTargets(
        left=raw[:, :c_dim],
        center=raw[:, c_dim : c_dim + s_dim],
        right=raw[:, c_dim + s_dim :],
    )
