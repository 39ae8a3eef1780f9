"""Decompression round-trips through an LLM.

The dictionary goes into the system prompt, the compressed text is the user
message, and the model's answer is scored against the original.  Any HTTP
chat endpoint can be targeted through a JSON body template; the mock clients
stand in for a model in offline runs.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .batching import BatchPlan, SweepRow, plan_batches, run_batch_compression, totals_row
from .compressor import CompressionParams
from .dictionary import (
    Dictionary,
    Template,
    decompress,
    template_compress,
    template_decompress,
    templates_as_dictionary,
)
from .metrics import MetricReport, aggregate, compression_ratio, score_pair

log = logging.getLogger(__name__)

SYSTEM_PROMPT_TEMPLATE = """\
You are a PRECISE text decoder.
Replace ALL <M###> tokens with EXACT
dictionary values.

Dictionary: {dictionary}

RULES:
1. Find EVERY <M###> token and replace with its EXACT dictionary value
2. Copy ALL other text EXACTLY as written
3. NEVER modify any content except <M###> tokens
4. Output EVERY character from input

REPLACE ALL TOKENS.
PRESERVE ALL OTHER TEXT.
"""

TEMPLATE_SLOT_NOTE = """
In this input a token may be followed by values separated by the \\x1f character.
Each <*> in the token's dictionary value is filled, in order, by those values.
"""

DEFAULT_BODY_TEMPLATE = {
    "model": "{model}",
    "max_tokens": "{max_tokens}",
    "messages": [
        {"role": "system", "content": "{system}"},
        {"role": "user", "content": "{user}"},
    ],
}
DEFAULT_RESPONSE_PATH = "choices.0.message.content"


def build_system_prompt(dictionary: Dictionary, template_mode: bool = False) -> str:
    block = "".join(f"\n{label}: {value}" for label, value in dictionary.ordered())
    prompt = SYSTEM_PROMPT_TEMPLATE.replace("{dictionary}", block)
    return prompt + TEMPLATE_SLOT_NOTE if template_mode else prompt


# --------------------------------------------------------------------------- clients


class TransportError(RuntimeError):
    pass


class AuthError(TransportError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    batch_id: int = 0
    # The exact decoding of ``user``; only mock clients look at it.
    oracle: Callable[[str], str] | None = field(default=None, compare=False, repr=False)


@dataclass
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    attempts: int = 1


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class OracleClient:
    """Ideal decoder: answers with the exact decompression."""

    def describe(self) -> dict:
        return {"type": "mock-oracle"}

    def complete(self, request: ChatRequest) -> ChatResponse:
        return ChatResponse(request.oracle(request.user))


@dataclass
class ScriptedClient:
    """Oracle with deterministic damage, for exercising the scoring path.

    ``drop_last_chars`` trims the answer, ``replace`` is a list of
    ``[old, new]`` pairs applied in order, ``empty`` returns nothing and
    ``fail_batches`` raises a transport error for those batch ids.
    """

    drop_last_chars: int = 0
    replace: list = field(default_factory=list)
    empty: bool = False
    fail_batches: list = field(default_factory=list)

    def describe(self) -> dict:
        return {"type": "mock-script", **asdict(self)}

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, request: ChatRequest) -> ChatResponse:
        if request.batch_id in self.fail_batches:
            raise TransportError(f"scripted failure for batch {request.batch_id}")
        if self.empty:
            return ChatResponse("")
        text = request.oracle(request.user)
        for old, new in self.replace:
            text = text.replace(old, new)
        if self.drop_last_chars:
            text = text[: -self.drop_last_chars]
        return ChatResponse(text)


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    model: str = ""
    auth_env: str = "METATOK_API_KEY"
    max_output_tokens: int = 64000
    timeout: float = 600.0
    retries: int = 3
    backoff: float = 2.0
    body_template: dict = field(default_factory=lambda: DEFAULT_BODY_TEMPLATE)
    response_path: str = DEFAULT_RESPONSE_PATH
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("endpoint must not be empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def from_env(cls, env=None, **overrides) -> "LlmClientConfig":
        """Read ``METATOK_ENDPOINT``, ``METATOK_MODEL`` and ``METATOK_AUTH_ENV``."""
        env = os.environ if env is None else env
        kwargs = {
            "endpoint": env.get("METATOK_ENDPOINT", ""),
            "model": env.get("METATOK_MODEL", ""),
            "auth_env": env.get("METATOK_AUTH_ENV", "METATOK_API_KEY"),
        }
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


_PLACEHOLDER_RE = re.compile(r"\{(?:system|user|model|max_tokens)\}")


def _fill(node, values: dict):
    if isinstance(node, dict):
        return {k: _fill(v, values) for k, v in node.items()}
    if isinstance(node, list):
        return [_fill(v, values) for v in node]
    if isinstance(node, str):
        if node in values:
            return values[node]
        # single pass, so placeholder-like text inside the prompts stays literal
        return _PLACEHOLDER_RE.sub(lambda m: str(values.get(m.group(0), m.group(0))), node)
    return node


def _dig(obj, path: str):
    for part in path.split("."):
        if isinstance(obj, list):
            obj = obj[int(part)]
        else:
            obj = obj[part]
    return obj


SAMPLING_KEYS = ("temperature", "top_p", "top_k", "seed")


def _sampling_fields(node) -> dict:
    found = {}
    if isinstance(node, dict):
        for k, v in node.items():
            if k in SAMPLING_KEYS:
                found[k] = v
            else:
                found.update(_sampling_fields(v))
    elif isinstance(node, list):
        for v in node:
            found.update(_sampling_fields(v))
    return found


class HttpChatClient:
    """Chat-completion client for any JSON-over-HTTP endpoint."""

    def __init__(self, config: LlmClientConfig, transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._sleep = sleep

    def close(self) -> None:
        self._http.close()

    def describe(self) -> dict:
        cfg = self.config
        sent = _sampling_fields(cfg.body_template)
        return {
            "type": "http",
            "endpoint": cfg.endpoint,
            "model": cfg.model,
            "max_output_tokens": cfg.max_output_tokens,
            "sampling": sent or "provider defaults (no sampling fields sent)",
        }

    def request_body(self, request: ChatRequest) -> dict:
        cfg = self.config
        return _fill(
            cfg.body_template,
            {
                "{system}": request.system,
                "{user}": request.user,
                "{model}": cfg.model,
                "{max_tokens}": cfg.max_output_tokens,
            },
        )

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env)
        if token:
            headers[self.config.auth_header] = f"{self.config.auth_scheme} {token}".strip()
        return headers

    def complete(self, request: ChatRequest) -> ChatResponse:
        cfg = self.config
        body = json.dumps(self.request_body(request))
        last_error = None
        for attempt in range(1, cfg.retries + 2):
            try:
                resp = self._http.post(cfg.endpoint, content=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = TransportError(f"{type(exc).__name__}: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"HTTP {resp.status_code} from {cfg.endpoint}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = TransportError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        data = resp.json()
                        text = _dig(data, cfg.response_path)
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise TransportError(f"unexpected response shape: {exc}") from None
                    usage = data.get("usage", {}) if isinstance(data, dict) else {}
                    return ChatResponse(str(text), usage, attempt)
            if attempt <= cfg.retries:
                self._sleep(cfg.backoff * 2 ** (attempt - 1))
        raise TransportError(f"gave up after {cfg.retries + 1} attempts: {last_error}")


# --------------------------------------------------------------------------- runs


def normalize_response(text: str) -> str:
    """Strip a single leading and a single trailing newline."""
    if text.startswith("\n"):
        text = text[1:]
    if text.endswith("\n"):
        text = text[:-1]
    return text


@dataclass
class ValidationRun:
    batch_id: int
    mode: str
    system_prompt: str
    compressed: str
    original: str
    response: str | None = None
    status: str = "ok"
    error: str | None = None
    report: MetricReport | None = None
    normalized_report: MetricReport | None = None
    line_reports: list[MetricReport] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    attempts: int = 0
    elapsed_s: float = 0.0
    usage: dict = field(default_factory=dict)
    client: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def artifact(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "mode": self.mode,
            "status": self.status,
            "error": self.error,
            "flags": self.flags,
            "attempts": self.attempts,
            "elapsed_s": self.elapsed_s,
            "usage": self.usage,
            "client": self.client,
            "system_prompt": self.system_prompt,
            "user_prompt": self.compressed,
            "response": self.response,
            "scores": self.report.as_dict() if self.report else None,
            "normalized_scores": self.normalized_report.as_dict() if self.normalized_report else None,
        }


def _score_lines(response: str, original_lines: list[str]) -> list[MetricReport]:
    got = response.split("\n")
    return [score_pair(got[i] if i < len(got) else "", line) for i, line in enumerate(original_lines)]


def _describe(client) -> dict:
    describe = getattr(client, "describe", None)
    return describe() if describe else {"type": type(client).__name__}


def validate_batch(
    client: ChatClient,
    compressed: str,
    dictionary: Dictionary | None,
    original: str,
    *,
    batch_id: int = 0,
    templates: Sequence[Template] | None = None,
    normalize: bool = False,
) -> ValidationRun:
    """Send one compressed batch to ``client`` and score the reconstruction.

    With ``templates`` the batch is scored line by line (template mode);
    otherwise as a single text.  Transport failures produce a run with
    ``status="failed"`` instead of raising.
    """
    template_mode = templates is not None
    if template_mode:
        by_id = {t.id: t for t in templates}
        prompt_dict = templates_as_dictionary(list(templates))

        def oracle(text):
            return "\n".join(template_decompress(line, by_id) for line in text.split("\n"))

    else:
        prompt_dict = dictionary

        def oracle(text):
            return decompress(text, dictionary)

    run = ValidationRun(
        batch_id=batch_id,
        mode="template" if template_mode else "algorithmic",
        system_prompt=build_system_prompt(prompt_dict, template_mode),
        compressed=compressed,
        original=original,
        client=_describe(client),
    )
    request = ChatRequest(run.system_prompt, compressed, batch_id, oracle)
    t0 = time.perf_counter()
    try:
        response = client.complete(request)
    except TransportError as exc:
        run.status, run.error = "failed", str(exc)
        run.elapsed_s = time.perf_counter() - t0
        log.warning("batch %d failed: %s", batch_id, exc)
        return run
    run.elapsed_s = time.perf_counter() - t0
    run.response, run.usage, run.attempts = response.text, response.usage, response.attempts
    if not response.text:
        run.flags.append("empty_response")

    def score(text):
        if template_mode:
            lines = original.split("\n")
            per_line = _score_lines(text, lines)
            return aggregate(per_line, "per-log"), per_line
        return score_pair(text, original), []

    run.report, run.line_reports = score(response.text)
    if normalize:
        run.normalized_report, _ = score(normalize_response(response.text))
    return run


@dataclass
class ExperimentReport:
    mode: str
    aggregate: MetricReport | None
    rows: list[SweepRow]
    runs: list[ValidationRun]

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "aggregate": self.aggregate.as_dict() if self.aggregate else None,
            "rows": [
                {
                    "dataset": r.dataset,
                    "l_max": r.l_max,
                    "cr": r.cr,
                    "cr_input": r.cr_input,
                    "dict_entries": r.dict_entries,
                    **r.scores,
                }
                for r in self.rows
            ],
            "batches": [
                {"batch_id": r.batch_id, "status": r.status, "error": r.error, "flags": r.flags}
                for r in self.runs
            ],
        }


class PlanningError(ValueError):
    pass


def _check_plan(plan: BatchPlan, max_output_tokens: int) -> None:
    if plan.oversize:
        raise PlanningError(
            f"{len(plan.oversize)} line(s) exceed the output budget of {max_output_tokens} tokens"
        )


def run_validation_experiment(
    corpus: Sequence[str],
    params: CompressionParams,
    client: ChatClient,
    mode: str = "algorithmic",
    *,
    templates: Sequence[Template] | None = None,
    max_output_tokens: int = 64000,
    budget_tokens: int | None = None,
    dataset: str = "corpus",
    jobs: int = 1,
    artifacts_dir: str | Path | None = None,
    normalize: bool = False,
) -> ExperimentReport:
    """Compress, send and score every batch of ``corpus``.

    Algorithmic mode scores each batch as a whole (std across batches);
    template mode scores every log line (SEM across lines).
    """
    if mode not in ("algorithmic", "template"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "template" and not templates:
        raise ValueError("template mode needs a template list")
    budget = budget_tokens or max_output_tokens
    if budget > max_output_tokens:
        raise PlanningError(f"batch budget {budget} exceeds the model output limit {max_output_tokens}")
    model = params.cost_model
    plan = plan_batches(corpus, budget, model)
    _check_plan(plan, max_output_tokens)

    if mode == "algorithmic":
        outcomes = run_batch_compression(corpus, params, plan=plan)
        jobs_in = [
            (o.index, o.result.compressed_text, o.result.dictionary, o.text, None)
            for o in outcomes
            if o.ok
        ]
        row = totals_row(dataset, params.l_max, outcomes)
    else:
        templates = list(templates)
        tpl_dict = templates_as_dictionary(templates)
        jobs_in = []
        original_tokens = compressed_tokens = 0
        for i, (a, b) in enumerate(plan.batches):
            text = "".join(corpus[a:b])
            lines = [line.rstrip("\r\n") for line in corpus[a:b]]
            payload = "\n".join(template_compress(line, templates) for line in lines)
            jobs_in.append((i, payload, None, "\n".join(lines), templates))
            original_tokens += model.cost(text)
            compressed_tokens += model.cost(payload.replace("\x1f", " "))
        row = None
        if original_tokens:
            dict_tokens = tpl_dict.token_cost(model)
            ratio = compression_ratio(original_tokens, compressed_tokens, dict_tokens)
            row = SweepRow(dataset, None, ratio.cr, ratio.cr_input, len(tpl_dict),
                           original_tokens, compressed_tokens, dict_tokens)

    def work(args):
        idx, payload, dictionary, original, tpls = args
        return validate_batch(
            client, payload, dictionary, original, batch_id=idx, templates=tpls, normalize=normalize
        )

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        runs = list(pool.map(work, jobs_in))
    runs.sort(key=lambda r: r.batch_id)

    scored = [r for r in runs if r.ok]
    if not scored:
        agg = None
    elif mode == "algorithmic":
        agg = aggregate([r.report for r in scored], "per-batch")
    else:
        agg = aggregate([lr for r in scored for lr in r.line_reports], "per-log")

    rows = []
    if row is not None:
        if agg is not None:
            row.scores = {"levenshtein": agg.levenshtein, "rouge": agg.rouge, "bleu": agg.bleu}
        rows.append(row)

    if artifacts_dir is not None:
        out = Path(artifacts_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in runs:
            (out / f"batch_{r.batch_id:04d}.json").write_text(
                json.dumps(r.artifact(), indent=2) + "\n", encoding="utf-8"
            )
    return ExperimentReport(mode, agg, rows, runs)
