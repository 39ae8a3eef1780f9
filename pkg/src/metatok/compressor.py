"""Hierarchical meta-token compression.

Repeated word subsequences are replaced by labels ``<M1>``, ``<M2>``, ...
Lengths are processed from ``l_max`` down to ``l_min`` on a working sequence
that is rewritten after every pass, so long patterns are taken before their
fragments.  A pattern is only admitted when replacing it saves tokens once the
dictionary entry is paid for.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import accumulate

from .dictionary import META_RE, Dictionary
from .segmenter import WORD_UNIT, CostModel, WordSequence, render, segment

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaToken:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("meta-token index must be non-negative")

    @property
    def label(self) -> str:
        return f"<M{self.index}>"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class Selection:
    subsequence: str
    positions: tuple[int, ...]
    meta: MetaToken
    length: int


@dataclass(frozen=True)
class CompressionParams:
    l_max: int = 10
    f_min: int = 2
    l_min: int = 2
    cost_model: CostModel = WORD_UNIT

    def __post_init__(self):
        if self.l_min < 2:
            raise ValueError(f"l_min must be >= 2, got {self.l_min}")
        if self.l_max < self.l_min:
            raise ValueError(f"l_max ({self.l_max}) must be >= l_min ({self.l_min})")
        if self.f_min < 2:
            raise ValueError(f"f_min must be >= 2, got {self.f_min}")

    def as_dict(self) -> dict:
        return {"l_max": self.l_max, "l_min": self.l_min, "f_min": self.f_min}


@dataclass(frozen=True)
class CompressionResult:
    compressed: WordSequence
    dictionary: Dictionary
    original_tokens: int
    compressed_tokens: int
    dictionary_tokens: int
    # (label, first original word index, end original word index) per replacement
    replacements: tuple[tuple[str, int, int], ...] = field(default=(), repr=False)

    @property
    def compressed_text(self) -> str:
        return render(self.compressed)


def savings_holds(f: int, n_s: int, n_m: int) -> bool:
    """True when ``f`` replacements of a span costing ``n_s`` by a label costing
    ``n_m`` beat leaving the span alone, dictionary entry included."""
    return (1 + f) * n_m + n_s < f * n_s


def is_reserved(word: str) -> bool:
    """Words that contain a meta-token label are never part of a candidate."""
    return META_RE.search(word) is not None


def _offsets(seq: WordSequence) -> tuple[str, list[int], list[int]]:
    starts, ends = [], []
    pos = len(seq.separators[0])
    for word, sep in zip(seq.words, seq.separators[1:]):
        starts.append(pos)
        pos += len(word)
        ends.append(pos)
        pos += len(sep)
    return render(seq), starts, ends


def find_subsequences_at_length(
    seq: WordSequence,
    length: int,
    f_min: int,
    next_index: int,
    model: CostModel = WORD_UNIT,
) -> list[Selection]:
    n = len(seq.words)
    if length < 2 or n < length:
        return []
    text, starts, ends = _offsets(seq)
    blocked = [0, *accumulate(1 if is_reserved(w) else 0 for w in seq.words)]

    # Windows are keyed by their rendered text so interior whitespace is part of identity.
    occurrences: dict[str, list[int]] = {}
    for i in range(n - length + 1):
        if blocked[i + length] - blocked[i]:
            continue
        occurrences.setdefault(text[starts[i]:ends[i + length - 1]], []).append(i)

    candidates = [(s, pos) for s, pos in occurrences.items() if len(pos) >= f_min]
    candidates.sort(key=lambda c: (-len(c[1]), -len(c[0].encode("utf-8", "surrogatepass")), c[1][0]))

    used = bytearray(n)
    selected = []
    for s, positions in candidates:
        valid = []
        last_end = -1
        for p in positions:
            if p >= last_end and not any(used[p:p + length]):
                valid.append(p)
                last_end = p + length
        if len(valid) < f_min:
            continue
        meta = MetaToken(next_index)
        if not savings_holds(len(valid), model.cost(s), model.cost(meta.label)):
            continue
        selected.append(Selection(s, tuple(valid), meta, length))
        next_index += 1
        for p in valid:
            used[p:p + length] = b"\x01" * length
    return selected


def apply_replacements(seq: WordSequence, selections: list[Selection]) -> WordSequence:
    starts: dict[int, Selection] = {}
    covered = bytearray(len(seq.words))
    for sel in selections:
        for p in sel.positions:
            if any(covered[p:p + sel.length]):
                raise AssertionError(f"overlapping replacement at word {p} ({sel.meta.label})")
            covered[p:p + sel.length] = b"\x01" * sel.length
            starts[p] = sel

    words = []
    separators = [seq.separators[0]]
    i = 0
    while i < len(seq.words):
        sel = starts.get(i)
        if sel is None:
            words.append(seq.words[i])
            separators.append(seq.separators[i + 1])
            i += 1
        else:
            words.append(sel.meta.label)
            separators.append(seq.separators[i + sel.length])
            i += sel.length
    return WordSequence(tuple(words), tuple(separators))


def first_free_index(text: str) -> int:
    """Lowest meta index above every label-like string already in ``text``."""
    found = [int(m.group(1)) for m in META_RE.finditer(text)]
    return max(found) + 1 if found else 1


def compress(text: str, params: CompressionParams | None = None) -> CompressionResult:
    params = params or CompressionParams()
    model = params.cost_model
    seq = segment(text)
    if hasattr(model.word_cost, "prime"):
        model.word_cost.prime(seq.words)

    first_index = first_free_index(text)
    if first_index > 1:
        log.warning(
            "input contains meta-token-like words; they are left untouched and labels start at <M%d>",
            first_index,
        )

    # origin[i] = (start, end) of the original words the working word i stands for
    origin = [(i, i + 1) for i in range(len(seq.words))]
    entries: dict[str, str] = {}
    replacements = []
    next_index = first_index

    for length in range(params.l_max, params.l_min - 1, -1):
        selections = find_subsequences_at_length(seq, length, params.f_min, next_index, model)
        if not selections:
            continue
        new_origin = []
        starts = {p: sel for sel in selections for p in sel.positions}
        i = 0
        while i < len(origin):
            sel = starts.get(i)
            if sel is None:
                new_origin.append(origin[i])
                i += 1
            else:
                span = (origin[i][0], origin[i + sel.length - 1][1])
                new_origin.append(span)
                replacements.append((sel.meta.label, *span))
                i += sel.length
        seq = apply_replacements(seq, selections)
        origin = new_origin
        for sel in selections:
            entries[sel.meta.label] = sel.subsequence
        next_index = selections[-1].meta.index + 1

    dictionary = Dictionary(
        entries=entries,
        params=params.as_dict(),
        cost_model=model.name,
        first_index=first_index,
    )
    return CompressionResult(
        compressed=seq,
        dictionary=dictionary,
        original_tokens=model.cost(text),
        compressed_tokens=model.cost_words(seq.words),
        dictionary_tokens=dictionary.token_cost(model),
        replacements=tuple(sorted(replacements, key=lambda r: r[1])),
    )
