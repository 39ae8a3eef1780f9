"""Lossless meta-token dictionary compression for repetitive text sent to LLMs."""

__version__ = "0.1.0"

from .compressor import (
    CompressionParams,
    CompressionResult,
    MetaToken,
    Selection,
    apply_replacements,
    compress,
    find_subsequences_at_length,
    savings_holds,
)
from .dictionary import Dictionary, Template, decompress, parse, serialize, template_compress, template_decompress
from .metrics import MetricReport, RatioReport, aggregate, compression_ratio, score_pair
from .segmenter import CHAR_HEURISTIC, WORD_UNIT, CostModel, WordSequence, cost_of_span, render, segment

__all__ = [
    "CHAR_HEURISTIC",
    "WORD_UNIT",
    "CompressionParams",
    "CompressionResult",
    "CostModel",
    "Dictionary",
    "MetaToken",
    "MetricReport",
    "RatioReport",
    "Selection",
    "Template",
    "WordSequence",
    "aggregate",
    "apply_replacements",
    "compress",
    "compression_ratio",
    "cost_of_span",
    "decompress",
    "find_subsequences_at_length",
    "parse",
    "render",
    "savings_holds",
    "score_pair",
    "segment",
    "serialize",
    "template_compress",
    "template_decompress",
]
