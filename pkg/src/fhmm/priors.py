"""Context-dependent label priors and their estimation from alignments.

Three tables: p(left), p(center | left), p(right | left, center), all over
the dense context / center-state axes.  They are stored in the log domain;
the text file format round-trips those log values exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .phones import PhonemeInventory, StateSpace

if TYPE_CHECKING:
    from .align import Alignment

PRIORS_HEADER = "# context priors v1"


class PriorsError(ValueError):
    pass


class MissingPriorError(PriorsError):
    """A queried condition has zero prior probability (priors were not floored)."""


def floor_distribution(probs: np.ndarray, floor: float) -> np.ndarray:
    """Clamp entries below ``floor`` and renormalize, iterating to a fixed point.

    The returned distribution sums to 1, has no entry below ``floor``, and is
    proportional to the input on the un-floored entries.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise PriorsError("expected a non-empty 1-d distribution")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise PriorsError("probabilities must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise PriorsError("distribution has zero total mass")
    if floor < 0 or floor * p.size > 1.0 + 1e-12:
        raise PriorsError(f"floor {floor} infeasible for {p.size} classes")
    q = p / total
    if floor == 0.0:
        return q
    clamped = q < floor
    while True:
        free = ~clamped
        free_mass = 1.0 - floor * np.count_nonzero(clamped)
        q = np.where(clamped, floor, 0.0)
        if free.any():
            q[free] = p[free] * (free_mass / p[free].sum())
        grown = clamped | (q < floor)
        if np.array_equal(grown, clamped):
            return q
        clamped = grown


def _floor_rows(table: np.ndarray, floor: float) -> np.ndarray:
    """Floor each distribution along the last axis; all-zero rows become uniform."""
    flat = table.reshape(-1, table.shape[-1])
    out = np.empty_like(flat, dtype=np.float64)
    k = flat.shape[1]
    for i, row in enumerate(flat):
        if row.sum() <= 0:
            out[i] = 1.0 / k
        else:
            out[i] = floor_distribution(row, floor)
    return out.reshape(table.shape)


@dataclass(frozen=True)
class ContextPriors:
    """Log-domain prior tables over (left), (center | left) and (right | left, center)."""

    inventory: PhonemeInventory
    log_left: np.ndarray  # (C,)
    log_center_given_left: np.ndarray  # (C, S)
    log_right_given_left_center: np.ndarray  # (C, S, C)
    smoothing_floor: float

    def __post_init__(self):
        c, s = self.inventory.num_contexts, self.inventory.num_center_states
        shapes = {
            "log_left": (self.log_left, (c,)),
            "log_center_given_left": (self.log_center_given_left, (c, s)),
            "log_right_given_left_center": (self.log_right_given_left_center, (c, s, c)),
        }
        for name, (arr, shape) in shapes.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise PriorsError(f"{name}: expected shape {shape}, got {arr.shape}")
            sums = np.exp(arr).sum(axis=-1)
            if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-12):
                raise PriorsError(f"{name}: distributions must sum to 1 within 1e-12")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_probs(
        cls,
        inventory: PhonemeInventory,
        p_left: np.ndarray,
        p_center_given_left: np.ndarray,
        p_right_given_left_center: np.ndarray,
        floor: float = 0.0,
    ) -> "ContextPriors":
        """Build priors from probability tables, flooring and renormalizing each row."""
        with np.errstate(divide="ignore"):
            return cls(
                inventory,
                np.log(_floor_rows(np.asarray(p_left, dtype=np.float64), floor)),
                np.log(_floor_rows(np.asarray(p_center_given_left, dtype=np.float64), floor)),
                np.log(
                    _floor_rows(np.asarray(p_right_given_left_center, dtype=np.float64), floor)
                ),
                floor,
            )

    @cached_property
    def log_center_marginal(self) -> np.ndarray:
        """log p(center), marginalized over the left context: used by monophone scoring."""
        marg = np.exp(self.log_left) @ np.exp(self.log_center_given_left)
        with np.errstate(divide="ignore"):
            return np.log(marg)

    def save(self, path: str | Path) -> None:
        inv = self.inventory
        lines = [PRIORS_HEADER, f"floor\t{self.smoothing_floor:.17g}"]
        lines.append("[left]")
        for l, sym in enumerate(inv.contexts):
            lines.append(f"{sym}\t{self.log_left[l]:.17g}")
        lines.append("[center]")
        for l, sym in enumerate(inv.contexts):
            for c, st in enumerate(inv.center_states):
                lines.append(f"{sym}\t{inv.format_center(st)}\t{self.log_center_given_left[l, c]:.17g}")
        lines.append("[right]")
        for l, lsym in enumerate(inv.contexts):
            for c, st in enumerate(inv.center_states):
                for r, rsym in enumerate(inv.contexts):
                    lines.append(
                        f"{lsym}\t{inv.format_center(st)}\t{rsym}\t"
                        f"{self.log_right_given_left_center[l, c, r]:.17g}"
                    )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, inventory: PhonemeInventory) -> "ContextPriors":
        c, s = inventory.num_contexts, inventory.num_center_states
        log_left = np.full(c, np.nan)
        log_center = np.full((c, s), np.nan)
        log_right = np.full((c, s, c), np.nan)
        floor = 0.0
        section = None
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            # data lines may begin with the boundary symbol (often `#`); only
            # `# `-prefixed lines are comments
            if not line or line.startswith("# "):
                continue
            if line in ("[left]", "[center]", "[right]"):
                section = line
                continue
            fields = line.split("\t")
            try:
                if fields[0] == "floor":
                    floor = float(fields[1])
                elif section == "[left]":
                    log_left[inventory.context_index(fields[0])] = float(fields[1])
                elif section == "[center]":
                    l = inventory.context_index(fields[0])
                    cc = inventory.center_index(inventory.parse_center(fields[1]))
                    log_center[l, cc] = float(fields[2])
                elif section == "[right]":
                    l = inventory.context_index(fields[0])
                    cc = inventory.center_index(inventory.parse_center(fields[1]))
                    r = inventory.context_index(fields[2])
                    log_right[l, cc, r] = float(fields[3])
                else:
                    raise PriorsError("entry outside any section")
            except (IndexError, ValueError) as err:
                raise PriorsError(f"{path}:{lineno}: {err}") from None
        for name, arr in (("left", log_left), ("center", log_center), ("right", log_right)):
            if np.isnan(arr).any():
                raise PriorsError(f"{path}: incomplete [{name}] section")
        return cls(inventory, log_left, log_center, log_right, floor)


def estimate_priors(
    alignments: Iterable["Alignment"],
    inventory: PhonemeInventory,
    floor: float = 1e-8,
) -> ContextPriors:
    """Relative-frequency priors over aligned frame labels, floored and renormalized.

    Conditions never observed get uniform distributions.
    """
    space = StateSpace(inventory)
    c, s = inventory.num_contexts, inventory.num_center_states
    counts = np.zeros((c, s, c), dtype=np.float64)
    n_frames = 0
    for alignment in alignments:
        for label in alignment.labels:
            l, cc, r = space.factor_indices(label)
            counts[l, cc, r] += 1.0
            n_frames += 1
    if n_frames == 0:
        raise PriorsError("no aligned frames to estimate priors from")
    p_left = counts.sum(axis=(1, 2))
    p_center = counts.sum(axis=2)
    return ContextPriors.from_probs(inventory, p_left, p_center, counts, floor=floor)
