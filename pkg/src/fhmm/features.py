"""Acoustic feature sequences and their binary file format.

Features are opaque real vectors here; nothing downstream assumes a
particular front end.  Files carry a `FHFT` magic, a version, the frame and
dimension counts, then float32 little-endian data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"FHFT"
FEATURE_VERSION = 1


class FeatureFileError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSequence:
    """T x D matrix of acoustic features plus the nominal frame shift."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"features must be a T x D matrix with T,D >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def write_features(path: str | Path, features: FeatureSequence) -> None:
    t, d = features.frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, t, d))
        fh.write(features.frames.astype("<f4").tobytes())


def read_features(path: str | Path, frame_shift_ms: float = 10.0) -> FeatureSequence:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise FeatureFileError(f"{path}: truncated header at byte {len(data)}")
    if data[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic {data[:4]!r}")
    version, t, d = struct.unpack("<III", data[4:16])
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    need = 16 + 4 * t * d
    if len(data) < need:
        raise FeatureFileError(f"{path}: truncated at byte {len(data)}, expected {need}")
    mat = np.frombuffer(data[16:need], dtype="<f4").reshape(t, d).astype(np.float64)
    return FeatureSequence(mat, frame_shift_ms=frame_shift_ms)
