"""Pronunciation lexicon, word-level prefix tree, and HMM expansion of pronunciations."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional

from .phones import (
    SUBSTATES_PER_PHONE,
    CenterState,
    PhonemeInventory,
    TriphoneLabel,
)

Pronunciation = tuple[str, ...]


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    """Word to pronunciation(s) map over one phoneme inventory."""

    inventory: PhonemeInventory
    entries: dict[str, tuple[Pronunciation, ...]]

    def __post_init__(self):
        if not self.entries:
            raise LexiconError("lexicon is empty")
        valid = set(self.inventory.phonemes)
        for word, prons in self.entries.items():
            if not word or any(ch.isspace() for ch in word):
                raise LexiconError(f"bad word: {word!r}")
            if not prons:
                raise LexiconError(f"word {word!r} has no pronunciation")
            for pron in prons:
                if not pron:
                    raise LexiconError(f"word {word!r} has an empty pronunciation")
                for ph in pron:
                    if ph not in valid:
                        raise LexiconError(f"word {word!r}: unknown phoneme {ph!r}")

    @cached_property
    def words(self) -> tuple[str, ...]:
        return tuple(sorted(self.entries))

    def pronunciations(self, word: str) -> tuple[Pronunciation, ...]:
        try:
            return self.entries[word]
        except KeyError:
            raise LexiconError(f"word not in lexicon: {word!r}") from None

    @classmethod
    def from_file(cls, path: str | Path, inventory: PhonemeInventory) -> "Lexicon":
        """Read ``word<TAB>phoneme phoneme ...`` lines; repeated words add pronunciations."""
        entries: dict[str, list[Pronunciation]] = {}
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            word, tab, rest = line.partition("\t")
            if not tab:
                raise LexiconError(f"{path}:{lineno}: expected word<TAB>phonemes")
            pron = tuple(rest.split())
            entries.setdefault(word.strip(), []).append(pron)
        return cls(inventory, {w: tuple(ps) for w, ps in entries.items()})

    def to_file(self, path: str | Path) -> None:
        lines = []
        for word in sorted(self.entries):
            for pron in self.entries[word]:
                lines.append(f"{word}\t{' '.join(pron)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class _TreeNode:
    phoneme: Optional[str]  # arc label into this node; None at the root
    parent: int
    children: dict[str, int] = field(default_factory=dict)
    words: tuple[str, ...] = ()


class PrefixTree:
    """Pronunciation trie: shared prefixes share nodes, words sit on their end nodes.

    Arcs out of a node are exposed in phoneme-index order, and every derived
    table (entry contexts, left contexts) is deterministic for a given
    lexicon, so decoders built on the tree are reproducible.
    """

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon
        self.inventory = lexicon.inventory
        self._nodes: list[_TreeNode] = [_TreeNode(phoneme=None, parent=-1)]
        for word in sorted(lexicon.entries):
            for pron in lexicon.entries[word]:
                self._insert(word, pron)
        self._finalize()

    def _insert(self, word: str, pron: Pronunciation) -> None:
        node = 0
        for ph in pron:
            try:
                self.inventory.phoneme_index(ph)
            except Exception:
                raise LexiconError(f"word {word!r}: unknown phoneme {ph!r}") from None
            nxt = self._nodes[node].children.get(ph)
            if nxt is None:
                nxt = len(self._nodes)
                self._nodes.append(_TreeNode(phoneme=ph, parent=node))
                self._nodes[node].children[ph] = nxt
            node = nxt
        if word not in self._nodes[node].words:
            self._nodes[node].words = tuple(sorted(self._nodes[node].words + (word,)))

    def _finalize(self) -> None:
        inv = self.inventory
        self._arcs: list[tuple[tuple[str, int], ...]] = []
        self._children_by_ctx: list[dict[int, int]] = []
        self._entry_rights: list[tuple[int, ...]] = []
        self._left_ctx: list[int] = []
        for node in self._nodes:
            arcs = tuple(
                sorted(node.children.items(), key=lambda kv: inv.phoneme_index(kv[0]))
            )
            self._arcs.append(arcs)
            self._children_by_ctx.append(
                {inv.context_index(ph): child for ph, child in arcs}
            )
            rights = [inv.context_index(ph) for ph, _ in arcs]
            if node.words:
                rights.append(inv.boundary_index)
            self._entry_rights.append(tuple(rights))
            parent = node.parent
            if parent <= 0:
                self._left_ctx.append(inv.boundary_index)
            else:
                self._left_ctx.append(inv.context_index(self._nodes[parent].phoneme))

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def root(self) -> int:
        return 0

    def arcs(self, node: int) -> tuple[tuple[str, int], ...]:
        """Outgoing (phoneme, child) arcs, ordered by phoneme index."""
        return self._arcs[node]

    def child(self, node: int, context_index: int) -> Optional[int]:
        return self._children_by_ctx[node].get(context_index)

    def words_at(self, node: int) -> tuple[str, ...]:
        return self._nodes[node].words

    def phoneme_of(self, node: int) -> Optional[str]:
        return self._nodes[node].phoneme

    def left_context_index(self, node: int) -> int:
        """Left context of the phone on this node: the parent's phoneme, or boundary."""
        return self._left_ctx[node]

    def entry_rights(self, node: int) -> tuple[int, ...]:
        """Right contexts available when entering this node's phone.

        One per outgoing arc, plus the boundary context when a word ends here.
        """
        return self._entry_rights[node]

    def nodes(self) -> Iterator[int]:
        return iter(range(len(self._nodes)))


def build_prefix_tree(lexicon: Lexicon) -> PrefixTree:
    return PrefixTree(lexicon)


def hmm_expand(
    pronunciation: Pronunciation,
    inventory: PhonemeInventory,
    context_mode: str = "within_word_boundary",
) -> tuple[TriphoneLabel, ...]:
    """Expand a pronunciation into its triphone substate labels, three per phone.

    Contexts come from the neighboring phonemes within the word; the boundary
    symbol fills both word edges.
    """
    if context_mode != "within_word_boundary":
        raise ValueError(f"unsupported context mode: {context_mode!r}")
    if not pronunciation:
        raise LexiconError("cannot expand an empty pronunciation")
    bnd = inventory.boundary_symbol
    labels = []
    for i, ph in enumerate(pronunciation):
        inventory.phoneme_index(ph)  # reject unknown symbols early
        left = pronunciation[i - 1] if i > 0 else bnd
        right = pronunciation[i + 1] if i + 1 < len(pronunciation) else bnd
        for sub in range(SUBSTATES_PER_PHONE):
            labels.append(TriphoneLabel(left, CenterState.phone(ph, sub), right))
    return tuple(labels)
