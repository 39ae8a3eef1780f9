"""Reconstruction-quality metrics and compression ratios.

All similarities live in [0, 1] and score 1.0 when both sides are empty.
Word-level metrics (ROUGE, BLEU) split on the same whitespace rule as the
segmenter.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from rapidfuzz.distance import LCSseq, Levenshtein

from .segmenter import split_words

SCORE_FIELDS = (
    "exact_match",
    "levenshtein",
    "hamming",
    "rouge1_recall",
    "rouge1_f1",
    "rougeL_recall",
    "rougeL_f1",
    "bleu",
    "string_presence",
)

BLEU_EPSILON = 1e-9
BLEU_MAX_ORDER = 4


# --------------------------------------------------------------------------- ratios


@dataclass(frozen=True)
class RatioReport:
    cr: float
    cr_input: float
    original_tokens: int
    compressed_tokens: int
    dictionary_tokens: int

    def as_dict(self) -> dict:
        return asdict(self)


def compression_ratio(original_tokens: int, compressed_tokens: int, dictionary_tokens: int) -> RatioReport:
    if original_tokens <= 0:
        raise ValueError("compression ratio is undefined for an empty original")
    return RatioReport(
        cr=1 - compressed_tokens / original_tokens,
        cr_input=1 - (compressed_tokens + dictionary_tokens) / original_tokens,
        original_tokens=original_tokens,
        compressed_tokens=compressed_tokens,
        dictionary_tokens=dictionary_tokens,
    )


# --------------------------------------------------------------------------- pairwise scores


def exact_match(a: str, b: str) -> int:
    return int(a == b)


def levenshtein_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1 - Levenshtein.distance(a, b) / longest


def hamming_similarity(a: str, b: str) -> float:
    # Unequal lengths: the tail of the longer string counts as mismatches.
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return sum(x == y for x, y in zip(a, b)) / longest


def _prf(overlap: int, n_cand: int, n_ref: int) -> tuple[float, float]:
    if n_cand == 0 and n_ref == 0:
        return 1.0, 1.0
    if overlap == 0:
        return 0.0, 0.0
    recall = overlap / n_ref
    precision = overlap / n_cand
    return recall, 2 * precision * recall / (precision + recall)


def rouge1(candidate: str, reference: str) -> tuple[float, float]:
    """(recall, f1) of clipped unigram overlap."""
    cand, ref = split_words(candidate), split_words(reference)
    overlap = sum((Counter(cand) & Counter(ref)).values())
    return _prf(overlap, len(cand), len(ref))


def rougeL(candidate: str, reference: str) -> tuple[float, float]:
    """(recall, f1) from the longest common word subsequence."""
    cand, ref = split_words(candidate), split_words(reference)
    return _prf(LCSseq.similarity(cand, ref), len(cand), len(ref))


def _ngrams(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def bleu(candidate: str, reference: str) -> float:
    """Sentence BLEU up to 4-grams with a brevity penalty.

    Orders longer than the candidate are dropped (so identical short texts
    score 1.0); an order with no matches contributes ``1e-9 / count``.
    """
    cand, ref = split_words(candidate), split_words(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    orders = min(BLEU_MAX_ORDER, len(cand))
    for n in range(1, orders + 1):
        c = _ngrams(cand, n)
        matched = sum((c & _ngrams(ref, n)).values())
        total = sum(c.values())
        log_sum += math.log((matched or BLEU_EPSILON) / total)
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(log_sum / orders)


def string_presence(expected: Sequence[str], output: str) -> float:
    if not expected:
        return 1.0
    return sum(s in output for s in expected) / len(expected)


# --------------------------------------------------------------------------- reports


@dataclass
class MetricReport:
    exact_match: float
    levenshtein: float
    hamming: float
    rouge1_recall: float
    rouge1_f1: float
    rougeL_recall: float
    rougeL_f1: float
    bleu: float
    string_presence: float
    n: int = 1
    dispersion: str = "none"  # "none", "sem" or "std"
    spread: dict = field(default_factory=dict)

    def scores(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in SCORE_FIELDS}

    @property
    def rouge(self) -> float:
        # the single "ROUGE" column of the reports is unigram recall
        return self.rouge1_recall

    def as_dict(self) -> dict:
        d = self.scores()
        d["n"] = self.n
        if self.dispersion != "none":
            d[self.dispersion] = dict(self.spread)
        return d


def score_pair(candidate: str, reference: str, expected: Sequence[str] | None = None) -> MetricReport:
    """Full metric suite for one reconstruction.

    ``expected`` defaults to the non-blank lines of ``reference``.
    """
    if expected is None:
        expected = [line for line in reference.splitlines() if line.strip()]
    r1 = rouge1(candidate, reference)
    rl = rougeL(candidate, reference)
    return MetricReport(
        exact_match=float(exact_match(candidate, reference)),
        levenshtein=levenshtein_similarity(candidate, reference),
        hamming=hamming_similarity(candidate, reference),
        rouge1_recall=r1[0],
        rouge1_f1=r1[1],
        rougeL_recall=rl[0],
        rougeL_f1=rl[1],
        bleu=bleu(candidate, reference),
        string_presence=string_presence(expected, candidate),
    )


def aggregate(items: Sequence[MetricReport], mode: str = "per-batch") -> MetricReport:
    """Mean of each score with SEM (``per-log``) or sample std (``per-batch``)."""
    if not items:
        raise ValueError("cannot aggregate an empty list of reports")
    if mode not in ("per-log", "per-batch"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    n = len(items)
    means, spread = {}, {}
    for name in SCORE_FIELDS:
        values = np.array([getattr(r, name) for r in items], dtype=float)
        if (values == values[0]).all():
            means[name], spread[name] = float(values[0]), 0.0
            continue
        means[name] = float(values.mean())
        std = float(values.std(ddof=1))
        spread[name] = std / math.sqrt(n) if mode == "per-log" else std
    return MetricReport(**means, n=n, dispersion="sem" if mode == "per-log" else "std", spread=spread)
