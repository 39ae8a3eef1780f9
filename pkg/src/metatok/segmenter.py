"""Whitespace segmentation that keeps the exact separators, plus token cost models.

A :class:`WordSequence` is the unit every other module works on.  Words are the
maximal runs of non-whitespace characters; ``separators`` holds the whitespace
between them (and before the first / after the last word), so rendering the
sequence gives back the input byte for byte.
"""

from __future__ import annotations

import math
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

# ASCII space, tab, LF, CR, form feed, vertical tab.
WHITESPACE = " \t\n\r\f\v"

_WORD_RE = re.compile(r"[^ \t\n\r\f\v]+")


@dataclass(frozen=True)
class WordSequence:
    words: tuple[str, ...]
    separators: tuple[str, ...]

    def __post_init__(self):
        if len(self.separators) != len(self.words) + 1:
            raise ValueError(
                f"need {len(self.words) + 1} separators for {len(self.words)} words, "
                f"got {len(self.separators)}"
            )

    def __len__(self) -> int:
        return len(self.words)

    def render(self) -> str:
        return render(self)

    def span_text(self, start: int, length: int) -> str:
        """Words ``start .. start+length`` with their interior separators."""
        _check_span(self, start, length)
        if length == 0:
            return ""
        parts = [self.words[start]]
        for i in range(start + 1, start + length):
            parts.append(self.separators[i])
            parts.append(self.words[i])
        return "".join(parts)


def _check_span(seq: WordSequence, start: int, length: int) -> None:
    if start < 0 or length < 0 or start + length > len(seq.words):
        raise IndexError(f"span [{start}, {start + length}) outside sequence of {len(seq.words)} words")


def segment(text: str) -> WordSequence:
    words = []
    separators = []
    pos = 0
    for m in _WORD_RE.finditer(text):
        separators.append(text[pos:m.start()])
        words.append(m.group())
        pos = m.end()
    separators.append(text[pos:])
    return WordSequence(tuple(words), tuple(separators))


def render(seq: WordSequence) -> str:
    parts = [seq.separators[0]]
    for word, sep in zip(seq.words, seq.separators[1:]):
        parts.append(word)
        parts.append(sep)
    return "".join(parts)


def split_words(text: str) -> list[str]:
    """Word units of ``text`` under the same whitespace rule as :func:`segment`."""
    return _WORD_RE.findall(text)


# --------------------------------------------------------------------------- cost models


def _char_heuristic(word: str) -> int:
    return max(1, math.ceil(len(word.encode("utf-8", "surrogatepass")) / 4))


@dataclass(frozen=True)
class CostModel:
    """Maps a word unit to a token count; text cost is the sum over its words.

    Costs are additive over words so that per-entry savings add up to a net
    saving for the whole compressed document.  Separators are free.
    """

    name: str
    word_cost: Callable[[str], int] = field(compare=False)

    def cost(self, text: str) -> int:
        return sum(self.word_cost(w) for w in _WORD_RE.findall(text))

    def __call__(self, text: str) -> int:
        return self.cost(text)

    def cost_words(self, words: Iterable[str]) -> int:
        return sum(self.word_cost(w) for w in words)


def _one(word: str) -> int:
    return 1


WORD_UNIT = CostModel("word", _one)
CHAR_HEURISTIC = CostModel("char", _char_heuristic)


class _TableCost:
    # A class rather than a closure so external models stay picklable for
    # process pools.
    def __init__(self, table: dict[str, int]):
        self.table = table

    def __call__(self, word: str) -> int:
        n = self.table.get(word)
        return _char_heuristic(word) if n is None else n


class _CommandCost:
    def __init__(self, argv: list[str]):
        self.argv = argv
        self.cache: dict[str, int] = {}

    def prime(self, words: Iterable[str]) -> None:
        missing = sorted({w for w in words if w not in self.cache})
        if not missing:
            return
        proc = subprocess.run(
            self.argv, input="\n".join(missing) + "\n", capture_output=True, text=True, check=True
        )
        counts = proc.stdout.split()
        if len(counts) != len(missing):
            raise ValueError(
                f"token counting command returned {len(counts)} counts for {len(missing)} words"
            )
        for w, c in zip(missing, counts):
            self.cache[w] = int(c)

    def __call__(self, word: str) -> int:
        if word not in self.cache:
            self.prime([word])
        return self.cache[word]


def load_count_table(path: str | Path) -> dict[str, int]:
    """Read a ``word<TAB>count`` file.  Blank lines are skipped."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            word, sep, count = line.rpartition("\t")
            if not sep or not word:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'")
            try:
                n = int(count)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: count {count!r} is not an integer") from None
            if n < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            table[word] = n
    return table


def external_model(path: str | Path) -> CostModel:
    """Cost model backed by a precomputed count table.

    Words missing from the table fall back to the char heuristic.
    """
    return CostModel(f"external:{path}", _TableCost(load_count_table(path)))


def command_model(argv: list[str]) -> CostModel:
    """Cost model that asks an external program for counts.

    The program reads newline-separated words on stdin and prints one integer
    per word.  Results are cached, so each distinct word is counted once.
    """
    return CostModel("command:" + " ".join(argv), _CommandCost(list(argv)))


def get_cost_model(selector: str) -> CostModel:
    """Resolve a selector: ``word``, ``char``, ``external:<path>`` or ``command:<cmdline>``."""
    if selector == "word":
        return WORD_UNIT
    if selector == "char":
        return CHAR_HEURISTIC
    if selector.startswith("external:"):
        return external_model(selector.split(":", 1)[1])
    if selector.startswith("command:"):
        import shlex

        return command_model(shlex.split(selector.split(":", 1)[1]))
    raise ValueError(f"unknown cost model {selector!r} (expected word, char, external:<path>, command:<cmd>)")


def cost_of_span(seq: WordSequence, start: int, length: int, model: CostModel) -> int:
    _check_span(seq, start, length)
    return model.cost_words(seq.words[start:start + length])
