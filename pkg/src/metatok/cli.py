"""Command line interface.

Exit codes: 0 success, 2 usage / configuration / IO problems, 3 when a
reconstruction cannot be completed (unresolved meta-token).  JSON goes to
stdout, messages to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .batching import (
    load_loghub,
    loghub_paths,
    read_corpus,
    read_text,
    regression_report,
    sweep_csv,
    sweep_lmax,
    write_text,
)
from .compressor import CompressionParams, compress
from .dictionary import (
    DictionaryFormatError,
    Template,
    UnresolvedLabelError,
    decompress,
    load_templates,
    parse,
    read_envelope,
    write_envelope,
    write_split,
)
from .metrics import compression_ratio, score_pair
from .segmenter import get_cost_model
from .validator import (
    HttpChatClient,
    LlmClientConfig,
    OracleClient,
    PlanningError,
    ScriptedClient,
    run_validation_experiment,
)

log = logging.getLogger("metatok")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _params(args, l_max=None) -> CompressionParams:
    try:
        model = get_cost_model(args.cost_model)
        return CompressionParams(
            l_max=args.l_max if l_max is None else l_max,
            l_min=args.l_min if l_max is None else 2,
            f_min=args.f_min,
            cost_model=model,
        )
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None


def _add_compression_flags(p, sweep=False):
    if sweep:
        p.add_argument("--l-min", type=int, default=3, help="smallest L_max in the sweep (default 3)")
        p.add_argument("--l-max", type=int, default=20, help="largest L_max in the sweep (default 20)")
    else:
        p.add_argument("--l-max", type=int, default=10, help="longest subsequence, in words (default 10)")
        p.add_argument("--l-min", type=int, default=2, help="shortest subsequence, in words (default 2)")
    p.add_argument("--f-min", type=int, default=2, help="minimum frequency (default 2)")
    p.add_argument(
        "--cost-model",
        default="word",
        help="word, char, external:<count table> or command:<counting program> (default word)",
    )


def _add_client_flags(p):
    g = p.add_argument_group("LLM client")
    mock = g.add_mutually_exclusive_group()
    mock.add_argument("--mock-oracle", action="store_true", help="use an exact decoder instead of an LLM")
    mock.add_argument("--mock-script", metavar="JSON", help="scripted, damaging mock decoder")
    g.add_argument("--endpoint", help="chat endpoint URL (or $METATOK_ENDPOINT)")
    g.add_argument("--model", help="model id (or $METATOK_MODEL)")
    g.add_argument("--auth-env", help="name of the variable holding the API token (or $METATOK_AUTH_ENV)")
    g.add_argument("--max-output-tokens", type=int, default=64000)
    g.add_argument("--timeout", type=float, default=600.0)
    g.add_argument("--retries", type=int, default=3)
    g.add_argument("--backoff", type=float, default=2.0)
    g.add_argument("--body-template", metavar="JSON", help="request body with {system}/{user} placeholders")
    g.add_argument("--response-path", help="dotted path to the answer text in the response JSON")
    g.add_argument("--normalize", action="store_true", help="also score with one leading/trailing newline stripped")
    g.add_argument("--budget-tokens", type=int, help="batch budget (default: --max-output-tokens)")
    g.add_argument("--artifacts", metavar="DIR", help="write one JSON file per batch here")


def _client(args):
    if args.mock_oracle:
        return OracleClient()
    if args.mock_script:
        try:
            return ScriptedClient.from_file(args.mock_script)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"bad mock script: {exc}") from None
    overrides = {
        "endpoint": args.endpoint,
        "model": args.model,
        "auth_env": args.auth_env,
        "max_output_tokens": args.max_output_tokens,
        "timeout": args.timeout,
        "retries": args.retries,
        "backoff": args.backoff,
        "response_path": args.response_path,
    }
    if args.body_template:
        try:
            overrides["body_template"] = json.loads(Path(args.body_template).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"bad body template: {exc}") from None
    try:
        return HttpChatClient(LlmClientConfig.from_env(**overrides))
    except ValueError as exc:
        raise UsageError(f"LLM client: {exc} (use --endpoint or --mock-oracle)") from None


def _corpus(args) -> tuple[list[str], str]:
    if args.loghub:
        return load_loghub(args.loghub, args.input), args.input
    return read_corpus(args.input), args.dataset or Path(args.input).stem


def _templates(args) -> list[Template] | None:
    path = args.templates
    if path is None and args.loghub:
        candidate = loghub_paths(args.loghub, args.input)[1]
        path = candidate if candidate.exists() else None
    if path is None:
        return None
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [Template(f"<M{i}>", row["EventTemplate"]) for i, row in enumerate(rows, 1)]
    return load_templates(path)


# --------------------------------------------------------------------------- commands


def cmd_compress(args) -> int:
    params = _params(args)
    text = read_text(args.input)
    result = compress(text, params)
    compressed = result.compressed_text
    if args.split:
        stem = args.output or args.input
        cmp_path, dict_path = write_split(stem, compressed, result.dictionary)
        print(f"wrote {cmp_path} and {dict_path}", file=sys.stderr)
    else:
        out = args.output or f"{args.input}.mtk.json"
        write_envelope(out, compressed, result.dictionary)
        print(f"wrote {out}", file=sys.stderr)
    if result.original_tokens:
        ratio = compression_ratio(result.original_tokens, result.compressed_tokens, result.dictionary_tokens)
        report = ratio.as_dict()
    else:
        report = {"cr": None, "cr_input": None, "original_tokens": 0, "compressed_tokens": 0, "dictionary_tokens": 0}
    report["dict_entries"] = len(result.dictionary)
    report["cost_model"] = params.cost_model.name
    _emit(report)
    return EXIT_OK


def cmd_decompress(args) -> int:
    if args.dict:
        compressed = read_text(args.input)
        dictionary = parse(Path(args.dict).read_bytes())
    else:
        compressed, dictionary = read_envelope(args.input)
    try:
        text = decompress(compressed, dictionary)
    except UnresolvedLabelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    if args.output:
        write_text(args.output, text)
    else:
        sys.stdout.flush()
        sys.stdout.buffer.write(text.encode("utf-8", "surrogateescape"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.l_min < 2 or args.l_max < args.l_min:
        raise UsageError("need 2 <= --l-min <= --l-max")
    corpus, dataset = _corpus(args)
    model = _params(args, l_max=args.l_min).cost_model
    l_values = range(args.l_min, args.l_max + 1)
    if args.validate:
        client = _client(args)
        rows = []
        for l_max in l_values:
            exp = run_validation_experiment(
                corpus,
                _params(args, l_max=l_max),
                client,
                "algorithmic",
                max_output_tokens=args.max_output_tokens,
                budget_tokens=args.budget_tokens,
                dataset=dataset,
                jobs=args.jobs,
                artifacts_dir=Path(args.artifacts) / f"l_max_{l_max}" if args.artifacts else None,
                normalize=args.normalize,
            )
            rows.extend(exp.rows)
    else:
        rows = sweep_lmax(corpus, l_values, args.f_min, model, args.budget_tokens, dataset, args.jobs)
    table = sweep_csv(rows)
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    if args.validate and args.regression_json:
        try:
            reg = regression_report(rows)
        except ValueError as exc:
            print(f"warning: no regression report: {exc}", file=sys.stderr)
        else:
            Path(args.regression_json).write_text(json.dumps(reg, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_score(args) -> int:
    original = read_text(args.original)
    candidate = read_text(args.candidate)
    _emit(score_pair(candidate, original).as_dict())
    return EXIT_OK


def cmd_validate(args) -> int:
    templates = _templates(args)
    if args.mode == "template" and not templates:
        raise UsageError("template mode needs --templates (or a LogHub templates file)")
    client = _client(args)
    corpus, dataset = _corpus(args)
    params = _params(args)
    try:
        report = run_validation_experiment(
            corpus,
            params,
            client,
            args.mode,
            templates=templates,
            max_output_tokens=args.max_output_tokens,
            budget_tokens=args.budget_tokens,
            dataset=dataset,
            jobs=args.jobs,
            artifacts_dir=args.artifacts,
            normalize=args.normalize,
        )
    except PlanningError as exc:
        raise UsageError(str(exc)) from None
    out = report.as_dict()
    if args.output:
        Path(args.output).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    failed = [r.batch_id for r in report.runs if not r.ok]
    if failed:
        print(f"warning: {len(failed)} batch(es) failed: {failed}", file=sys.stderr)
    _emit(out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metatok", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a text file")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="envelope file, or path stem with --split")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--split", action="store_true", help="write <stem>.cmp and <stem>.dict")
    fmt.add_argument("--envelope", action="store_true", help="write one JSON envelope (default)")
    _add_compression_flags(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="restore the original text")
    p.add_argument("input", help="envelope JSON, or a .cmp file together with --dict")
    p.add_argument("--dict", help="dictionary file for split inputs")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("sweep", help="compression ratios over a range of L_max values")
    p.add_argument("input", help="log file, or dataset name with --loghub")
    p.add_argument("-o", "--output", help="CSV output (default stdout)")
    p.add_argument("--dataset", help="dataset id for the CSV (default: file stem)")
    p.add_argument("--loghub", metavar="ROOT", help="read <ROOT>/<input>/<input>_2k.log")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--validate", action="store_true", help="also run LLM decompression per L_max")
    p.add_argument("--regression-json", metavar="PATH", help="with --validate: metric-vs-ratio fits")
    _add_compression_flags(p, sweep=True)
    _add_client_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("score", help="score a reconstruction against the original")
    p.add_argument("original")
    p.add_argument("candidate")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("validate", help="LLM decompression experiment")
    p.add_argument("input", help="log file, or dataset name with --loghub")
    p.add_argument("--mode", choices=("algorithmic", "template"), default="algorithmic")
    p.add_argument("--templates", help="label<TAB>pattern file or EventId,EventTemplate CSV")
    p.add_argument("--dataset")
    p.add_argument("--loghub", metavar="ROOT")
    p.add_argument("--jobs", type=int, default=1, help="concurrent requests")
    p.add_argument("-o", "--output", help="also write the report JSON here")
    _add_compression_flags(p)
    _add_client_flags(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (OSError, DictionaryFormatError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
