"""Back-off n-gram language model over the standard ARPA text format.

Probabilities and back-off weights are kept as the parsed log10 values so a
load / save / load round trip reproduces every score exactly; queries convert
to natural log so the decoder works in a single log base.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

LN10 = math.log(10.0)

NGram = tuple[str, ...]


class ArpaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OovError(ValueError):
    pass


@dataclass
class NGramLM:
    """N-gram probabilities with Katz-style back-off weights, log10 domain."""

    order: int
    probs: tuple[dict[NGram, float], ...]  # probs[k]: (k+1)-grams -> log10 p
    backoffs: tuple[dict[NGram, float], ...]  # backoffs[k]: (k+1)-gram histories -> log10 bow
    sentence_begin: str = "<s>"
    sentence_end: str = "</s>"
    unknown_symbol: str = "<unk>"

    @property
    def vocab(self) -> set[str]:
        return {w for (w,) in self.probs[0]}

    @property
    def has_unknown(self) -> bool:
        return (self.unknown_symbol,) in self.probs[0]

    def _map_word(self, word: str, strict: bool) -> str:
        if (word,) in self.probs[0]:
            return word
        if self.has_unknown:
            return self.unknown_symbol
        if strict:
            raise OovError(f"out-of-vocabulary word {word!r} and no {self.unknown_symbol} entry")
        return word

    def log10_score(self, history: Sequence[str], word: str) -> float:
        w = self._map_word(word, strict=True)
        hist = tuple(self._map_word(h, strict=False) for h in history)
        if self.order > 1:
            hist = hist[-(self.order - 1) :]
        else:
            hist = ()
        total = 0.0
        while True:
            entry = self.probs[len(hist)].get(hist + (w,))
            if entry is not None:
                return total + entry
            if not hist:
                # unigram must exist: _map_word guaranteed membership
                raise ArpaError(f"missing unigram for {w!r}")
            total += self.backoffs[len(hist) - 1].get(hist, 0.0)
            hist = hist[1:]


def score_word(lm: NGramLM, history: Sequence[str], word: str) -> float:
    """Natural-log probability of ``word`` after ``history`` (longest-match back-off)."""
    return LN10 * lm.log10_score(history, word)


_NGRAM_COUNT_RE = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")
_SECTION_RE = re.compile(r"^\\(\d+)-grams:$")


def load_arpa(path: str | Path) -> NGramLM:
    """Parse an ARPA file, checking the declared n-gram counts per order."""
    declared: dict[int, int] = {}
    probs: list[dict[NGram, float]] = []
    backoffs: list[dict[NGram, float]] = []
    section: int | None = None
    in_data = False
    saw_end = False
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            in_data = True
            continue
        m = _SECTION_RE.match(line)
        if m:
            n = int(m.group(1))
            if n not in declared:
                raise ArpaError(f"section \\{n}-grams: not declared in \\data\\", lineno)
            if section is not None and len(probs[section - 1]) != declared[section]:
                raise ArpaError(
                    f"\\{section}-grams: declared {declared[section]} entries, "
                    f"found {len(probs[section - 1])}",
                    lineno,
                )
            section = n
            in_data = False
            continue
        if line == "\\end\\":
            if section is not None and len(probs[section - 1]) != declared[section]:
                raise ArpaError(
                    f"\\{section}-grams: declared {declared[section]} entries, "
                    f"found {len(probs[section - 1])}",
                    lineno,
                )
            saw_end = True
            section = None
            continue
        if in_data:
            m = _NGRAM_COUNT_RE.match(line)
            if not m:
                raise ArpaError(f"unparseable \\data\\ line: {line!r}", lineno)
            order = int(m.group(1))
            declared[order] = int(m.group(2))
            while len(probs) < order:
                probs.append({})
                backoffs.append({})
            continue
        if section is None:
            raise ArpaError(f"entry outside any section: {line!r}", lineno)
        fields = line.split()
        if len(fields) not in (section + 1, section + 2):
            raise ArpaError(f"expected {section}-gram entry, got {line!r}", lineno)
        try:
            logp = float(fields[0])
        except ValueError:
            raise ArpaError(f"bad log probability {fields[0]!r}", lineno) from None
        if logp > 1e-9:
            raise ArpaError(f"positive log10 probability {logp}", lineno)
        gram = tuple(fields[1 : section + 1])
        probs[section - 1][gram] = logp
        if len(fields) == section + 2:
            try:
                backoffs[section - 1][gram] = float(fields[section + 1])
            except ValueError:
                raise ArpaError(f"bad back-off weight {fields[section + 1]!r}", lineno) from None
    if not declared:
        raise ArpaError(f"{path}: missing \\data\\ section")
    if not saw_end:
        raise ArpaError(f"{path}: missing \\end\\ marker")
    for order, count in declared.items():
        if len(probs[order - 1]) != count:
            raise ArpaError(
                f"\\{order}-grams: declared {count} entries, found {len(probs[order - 1])}"
            )
    return NGramLM(order=len(probs), probs=tuple(probs), backoffs=tuple(backoffs))


def save_arpa(lm: NGramLM, path: str | Path) -> None:
    lines = ["\\data\\"]
    for order in range(1, lm.order + 1):
        lines.append(f"ngram {order}={len(lm.probs[order - 1])}")
    for order in range(1, lm.order + 1):
        lines.append("")
        lines.append(f"\\{order}-grams:")
        for gram in sorted(lm.probs[order - 1]):
            entry = f"{lm.probs[order - 1][gram]:.17g}\t{' '.join(gram)}"
            bow = lm.backoffs[order - 1].get(gram)
            if bow is not None:
                entry += f"\t{bow:.17g}"
            lines.append(entry)
    lines.append("")
    lines.append("\\end\\")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
