"""Phoneme inventory, HMM center states, and the untied triphone state space.

Every phone is modeled as a three-state left-to-right HMM (substates 0-1-2,
self-loops, no skips).  Silence is a single context-independent state.  Word
and utterance edges are represented by a dedicated boundary context symbol;
silence itself never acts as a left/right context.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional

SUBSTATES_PER_PHONE = 3


class InventoryError(ValueError):
    pass


@dataclass(frozen=True)
class PhonemeInventory:
    """Ordered phoneme set plus the silence and boundary symbols.

    The ordering of ``phonemes`` is significant: it fixes the dense index of
    every context symbol, center state, and triphone label, so score tables
    and caches are reproducible run to run.
    """

    phonemes: tuple[str, ...]
    silence_symbol: str = "sil"
    boundary_symbol: str = "#"

    def __post_init__(self):
        object.__setattr__(self, "phonemes", tuple(self.phonemes))
        seen = set()
        for p in self.phonemes:
            if not p or any(ch.isspace() for ch in p):
                raise InventoryError(f"bad phoneme symbol: {p!r}")
            if p in seen:
                raise InventoryError(f"duplicate phoneme: {p!r}")
            seen.add(p)
        for role, sym in (("silence", self.silence_symbol), ("boundary", self.boundary_symbol)):
            if not sym or any(ch.isspace() for ch in sym):
                raise InventoryError(f"bad {role} symbol: {sym!r}")
            if sym in seen:
                raise InventoryError(f"{role} symbol {sym!r} collides with a phoneme")
        if self.silence_symbol == self.boundary_symbol:
            raise InventoryError("silence and boundary symbols must differ")

    @property
    def num_phonemes(self) -> int:
        return len(self.phonemes)

    @cached_property
    def contexts(self) -> tuple[str, ...]:
        """Context symbols: the phonemes, then the boundary symbol last."""
        return self.phonemes + (self.boundary_symbol,)

    @property
    def num_contexts(self) -> int:
        return self.num_phonemes + 1

    @cached_property
    def _context_index(self) -> dict[str, int]:
        return {sym: i for i, sym in enumerate(self.contexts)}

    def context_index(self, symbol: str) -> int:
        try:
            return self._context_index[symbol]
        except KeyError:
            raise InventoryError(f"unknown context symbol: {symbol!r}") from None

    @property
    def boundary_index(self) -> int:
        return self.num_phonemes

    @cached_property
    def center_states(self) -> tuple["CenterState", ...]:
        """All center states: the phone substates in order, silence last."""
        states = [
            CenterState.phone(p, s) for p in self.phonemes for s in range(SUBSTATES_PER_PHONE)
        ]
        states.append(CenterState.silence())
        return tuple(states)

    @property
    def num_center_states(self) -> int:
        return SUBSTATES_PER_PHONE * self.num_phonemes + 1

    @property
    def silence_center_index(self) -> int:
        return self.num_center_states - 1

    @cached_property
    def _phoneme_index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.phonemes)}

    def phoneme_index(self, phoneme: str) -> int:
        try:
            return self._phoneme_index[phoneme]
        except KeyError:
            raise InventoryError(f"unknown phoneme: {phoneme!r}") from None

    def center_index(self, state: "CenterState") -> int:
        if state.is_silence:
            return self.silence_center_index
        return SUBSTATES_PER_PHONE * self.phoneme_index(state.phoneme) + state.substate

    def format_center(self, state: "CenterState") -> str:
        if state.is_silence:
            return self.silence_symbol
        return f"{state.phoneme}.{state.substate}"

    def parse_center(self, text: str) -> "CenterState":
        if text == self.silence_symbol:
            return CenterState.silence()
        phoneme, dot, sub = text.rpartition(".")
        if not dot or phoneme not in self._phoneme_index or sub not in ("0", "1", "2"):
            raise InventoryError(f"cannot parse center state: {text!r}")
        return CenterState.phone(phoneme, int(sub))

    @classmethod
    def from_file(cls, path: str | Path, boundary_symbol: str = "#") -> "PhonemeInventory":
        """Read an inventory file: silence symbol on the first line, one phoneme per line after."""
        lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines:
            raise InventoryError(f"{path}: empty inventory file")
        return cls(tuple(lines[1:]), silence_symbol=lines[0], boundary_symbol=boundary_symbol)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join((self.silence_symbol,) + self.phonemes) + "\n", encoding="utf-8"
        )


@dataclass(frozen=True)
class CenterState:
    """A phone substate (phoneme, 0|1|2) or the context-independent silence state."""

    phoneme: Optional[str]
    substate: Optional[int]

    def __post_init__(self):
        if self.phoneme is None:
            if self.substate is not None:
                raise InventoryError("silence carries no substate")
        elif self.substate not in (0, 1, 2):
            raise InventoryError(f"substate must be 0, 1 or 2, got {self.substate!r}")

    @classmethod
    def phone(cls, phoneme: str, substate: int) -> "CenterState":
        return cls(phoneme, substate)

    @classmethod
    def silence(cls) -> "CenterState":
        return cls(None, None)

    @property
    def is_silence(self) -> bool:
        return self.phoneme is None


@dataclass(frozen=True)
class TriphoneLabel:
    """Untied triphone state identity: left context, center state, right context.

    The silence label is context independent: its left and right are always
    the boundary symbol.
    """

    left: str
    center: CenterState
    right: str


@dataclass(frozen=True)
class StateSpace:
    """Dense enumeration of all valid triphone labels for one inventory.

    Index layout is left-major, then center substate, then right context;
    the single silence label takes the final index.  With P phonemes and
    C = P + 1 context symbols there are C * 3P * C + 1 labels.
    """

    inventory: PhonemeInventory

    def __len__(self) -> int:
        inv = self.inventory
        n_phone_centers = SUBSTATES_PER_PHONE * inv.num_phonemes
        return inv.num_contexts * n_phone_centers * inv.num_contexts + 1

    @property
    def silence_index(self) -> int:
        return len(self) - 1

    @cached_property
    def silence_label(self) -> TriphoneLabel:
        b = self.inventory.boundary_symbol
        return TriphoneLabel(b, CenterState.silence(), b)

    def index(self, label: TriphoneLabel) -> int:
        inv = self.inventory
        if label.center.is_silence:
            if label.left != inv.boundary_symbol or label.right != inv.boundary_symbol:
                raise InventoryError(f"silence label must use boundary contexts: {label}")
            return self.silence_index
        left = inv.context_index(label.left)
        right = inv.context_index(label.right)
        center = inv.center_index(label.center)
        n_phone_centers = SUBSTATES_PER_PHONE * inv.num_phonemes
        return (left * n_phone_centers + center) * inv.num_contexts + right

    def label(self, index: int) -> TriphoneLabel:
        inv = self.inventory
        if not 0 <= index < len(self):
            raise IndexError(f"label index {index} out of range")
        if index == self.silence_index:
            return self.silence_label
        n_contexts = inv.num_contexts
        n_phone_centers = SUBSTATES_PER_PHONE * inv.num_phonemes
        right = index % n_contexts
        rest = index // n_contexts
        center = rest % n_phone_centers
        left = rest // n_phone_centers
        return TriphoneLabel(
            inv.contexts[left], inv.center_states[center], inv.contexts[right]
        )

    def labels(self) -> Iterator[TriphoneLabel]:
        for i in range(len(self)):
            yield self.label(i)

    def factor_indices(self, label: TriphoneLabel) -> tuple[int, int, int]:
        """Dense (left context, center state, right context) indices of a label."""
        inv = self.inventory
        if label.center.is_silence and (
            label.left != inv.boundary_symbol or label.right != inv.boundary_symbol
        ):
            raise InventoryError(f"silence label must use boundary contexts: {label}")
        return (
            inv.context_index(label.left),
            inv.center_index(label.center),
            inv.context_index(label.right),
        )


def build_state_space(inventory: PhonemeInventory) -> StateSpace:
    return StateSpace(inventory)
