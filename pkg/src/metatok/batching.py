"""Per-batch compression, L_max sweeps and the ratio-vs-quality regression."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .compressor import CompressionParams, CompressionResult, compress
from .metrics import compression_ratio
from .segmenter import WORD_UNIT, CostModel

SWEEP_COLUMNS = ("dataset", "l_max", "cr", "cr_input", "dict_entries", "levenshtein", "rouge", "bleu")
REGRESSION_METRICS = ("levenshtein", "rouge", "bleu")


# --------------------------------------------------------------------------- corpus io


def read_text(path: str | Path) -> str:
    # surrogateescape + newline="" keeps arbitrary bytes and CRLF intact
    with open(path, encoding="utf-8", errors="surrogateescape", newline="") as fh:
        return fh.read()


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="") as fh:
        fh.write(text)


def read_corpus(path: str | Path) -> list[str]:
    """Lines of a log file, each keeping its own line ending."""
    return split_lines(read_text(path))


def split_lines(text: str) -> list[str]:
    """Split on LF only, keeping the terminator; ``"".join`` restores ``text``."""
    lines = [line + "\n" for line in text.split("\n")]
    last = lines.pop()[:-1]
    if last:
        lines.append(last)
    return lines


def loghub_paths(root: str | Path, dataset: str) -> tuple[Path, Path]:
    base = Path(root) / dataset
    return base / f"{dataset}_2k.log", base / f"{dataset}_templates.csv"


def load_loghub(root: str | Path, dataset: str) -> list[str]:
    """Raw LogHub-2k lines from ``<root>/<Dataset>/<Dataset>_2k.log``."""
    log_path, _ = loghub_paths(root, dataset)
    if not log_path.exists():
        raise FileNotFoundError(f"{log_path} not found (LogHub data is not bundled)")
    return read_corpus(log_path)


def load_loghub_templates(root: str | Path, dataset: str):
    """Templates from ``<Dataset>_templates.csv`` (``EventId,EventTemplate``), labelled in file order."""
    from .dictionary import Template

    _, tpl_path = loghub_paths(root, dataset)
    with open(tpl_path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Template(f"<M{i}>", row["EventTemplate"]) for i, row in enumerate(rows, 1)]


# --------------------------------------------------------------------------- planning


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple[tuple[int, int], ...]  # half-open line ranges
    budget_tokens: int
    cost_model_name: str
    oversize: tuple[int, ...] = ()  # indices of singleton batches above budget

    def __len__(self) -> int:
        return len(self.batches)

    def texts(self, corpus: Sequence[str]) -> list[str]:
        return ["".join(corpus[a:b]) for a, b in self.batches]


def plan_batches(corpus: Sequence[str], budget_tokens: int, model: CostModel = WORD_UNIT) -> BatchPlan:
    """Greedy in-order packing of lines under a token budget."""
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be positive")
    batches, oversize = [], []
    start, used = 0, 0
    for i, line in enumerate(corpus):
        c = model.cost(line)
        if i > start and used + c > budget_tokens:
            batches.append((start, i))
            start, used = i, 0
        used += c
        if c > budget_tokens:
            # the flush above already closed the previous batch
            batches.append((i, i + 1))
            oversize.append(len(batches) - 1)
            start, used = i + 1, 0
    if start < len(corpus):
        batches.append((start, len(corpus)))
    return BatchPlan(tuple(batches), budget_tokens, model.name, tuple(oversize))


# --------------------------------------------------------------------------- compression


@dataclass
class BatchOutcome:
    index: int
    lines: tuple[int, int]
    text: str
    result: CompressionResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


def _compress_one(args):
    index, text, params = args
    try:
        return index, compress(text, params), None
    except Exception as exc:  # one failing batch must not sink the others
        return index, None, f"{type(exc).__name__}: {exc}"


def run_batch_compression(
    corpus: Sequence[str],
    params: CompressionParams,
    budget_tokens: int | None = None,
    jobs: int = 1,
    plan: BatchPlan | None = None,
) -> list[BatchOutcome]:
    """Compress each batch on its own, with its own dictionary.

    Without a budget (or plan) the whole corpus is one batch.  Results come
    back in batch order whatever the completion order.
    """
    if plan is None:
        if budget_tokens is None:
            plan = BatchPlan(((0, len(corpus)),) if corpus else (), 0, params.cost_model.name)
        else:
            plan = plan_batches(corpus, budget_tokens, params.cost_model)
    texts = plan.texts(corpus)
    work = [(i, t, params) for i, t in enumerate(texts)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_compress_one, work))
    else:
        done = [_compress_one(w) for w in work]
    return [
        BatchOutcome(i, plan.batches[i], texts[i], result, err) for i, result, err in done
    ]


# --------------------------------------------------------------------------- sweeps


@dataclass
class SweepRow:
    dataset: str
    l_max: int | None
    cr: float
    cr_input: float
    dict_entries: int
    original_tokens: int = 0
    compressed_tokens: int = 0
    dictionary_tokens: int = 0
    scores: dict[str, float] = field(default_factory=dict)

    def csv_record(self) -> list[str]:
        def fmt(x):
            return "" if x is None else f"{x:.6f}"

        return [
            self.dataset,
            "" if self.l_max is None else str(self.l_max),
            fmt(self.cr),
            fmt(self.cr_input),
            str(self.dict_entries),
            *(fmt(self.scores.get(m)) for m in REGRESSION_METRICS),
        ]


def totals_row(dataset: str, l_max: int | None, outcomes: Iterable[BatchOutcome]) -> SweepRow | None:
    results = [o.result for o in outcomes if o.ok]
    original = sum(r.original_tokens for r in results)
    if original == 0:
        return None
    compressed = sum(r.compressed_tokens for r in results)
    dict_tokens = sum(r.dictionary_tokens for r in results)
    ratio = compression_ratio(original, compressed, dict_tokens)
    return SweepRow(
        dataset=dataset,
        l_max=l_max,
        cr=ratio.cr,
        cr_input=ratio.cr_input,
        dict_entries=sum(len(r.dictionary) for r in results),
        original_tokens=original,
        compressed_tokens=compressed,
        dictionary_tokens=dict_tokens,
    )


def sweep_lmax(
    corpus: Sequence[str],
    l_range: Iterable[int],
    f_min: int = 2,
    model: CostModel = WORD_UNIT,
    budget_tokens: int | None = None,
    dataset: str = "corpus",
    jobs: int = 1,
) -> list[SweepRow]:
    """One compression run per L_max value over a fixed batch plan."""
    l_values = list(l_range)
    if not l_values:
        raise ValueError("empty L_max range")
    if any(l < 2 for l in l_values):
        raise ValueError("every L_max must be >= 2")
    if budget_tokens is None:
        plan = BatchPlan(((0, len(corpus)),) if corpus else (), 0, model.name)
    else:
        plan = plan_batches(corpus, budget_tokens, model)
    rows = []
    for l_max in l_values:
        params = CompressionParams(l_max=l_max, f_min=f_min, cost_model=model)
        row = totals_row(dataset, l_max, run_batch_compression(corpus, params, plan=plan, jobs=jobs))
        if row is not None:
            rows.append(row)
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow(row.csv_record())
    return buf.getvalue()


# --------------------------------------------------------------------------- regression


def _ols(x: np.ndarray, y: np.ndarray) -> dict:
    if np.ptp(x) == 0:
        return {"slope": None, "intercept": None, "r2": None, "undefined": True}
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        return {"slope": 0.0, "intercept": float(y[0]), "r2": 0.0, "undefined": False}
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    return {"slope": float(slope), "intercept": float(intercept), "r2": 1 - ss_res / ss_tot, "undefined": False}


def regression_report(rows: Sequence[SweepRow], metrics: Sequence[str] = REGRESSION_METRICS) -> dict:
    """Least-squares fit of each similarity metric against ``cr_input``."""
    report = {}
    for metric in metrics:
        pts = [(r.cr_input, r.scores[metric]) for r in rows if r.scores.get(metric) is not None]
        if len(pts) < 3:
            raise ValueError(f"need at least 3 scored rows for {metric}, got {len(pts)}")
        x, y = np.array(pts, dtype=float).T
        report[metric] = _ols(x, y)
    return report
