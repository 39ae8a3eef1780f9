"""Compression dictionaries: decoding, file formats and template mode.

Dictionary file (UTF-8 JSON)::

    {"params": {...}, "cost_model": "word", "first_index": 1,
     "entries": {"<M1>": "...", "<M2>": "..."}}

``first_index`` is the first label index the compressor was allowed to use.
Label-like strings with a smaller index were already present in the source
text and are copied through untouched by :func:`decompress`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

META_RE = re.compile(r"<M([0-9]+)>")
LABEL_RE = re.compile(r"<M[0-9]+>\Z")

UNIT_SEP = "\x1f"
WILDCARD = "<*>"


class UnresolvedLabelError(KeyError):
    def __init__(self, label: str):
        super().__init__(label)
        self.label = label

    def __str__(self) -> str:
        return f"unresolved meta-token {self.label}"


class DictionaryFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


class ReconstructionError(ValueError):
    pass


def label_index(label: str) -> int:
    return int(label[2:-1])


@dataclass(frozen=True)
class Dictionary:
    entries: dict[str, str] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    cost_model: str = "word"
    first_index: int = 1

    def __post_init__(self):
        for label, value in self.entries.items():
            if not LABEL_RE.match(label):
                raise ValueError(f"bad meta-token label {label!r}")
            if not value:
                raise ValueError(f"empty value for {label}")
            if META_RE.search(value):
                raise ValueError(f"value of {label} contains a meta-token")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, label: str) -> str:
        return self.entries[label]

    def ordered(self) -> list[tuple[str, str]]:
        return sorted(self.entries.items(), key=lambda kv: label_index(kv[0]))

    def token_cost(self, model) -> int:
        return sum(model.cost(label) + model.cost(value) for label, value in self.entries.items())

    def to_json_obj(self) -> dict:
        return {
            "params": dict(self.params),
            "cost_model": self.cost_model,
            "first_index": self.first_index,
            "entries": dict(self.ordered()),
        }


def decompress(compressed_text: str, dictionary: Dictionary) -> str:
    entries = dictionary.entries

    def expand(m: re.Match) -> str:
        if int(m.group(1)) < dictionary.first_index:
            return m.group(0)
        try:
            return entries[m.group(0)]
        except KeyError:
            raise UnresolvedLabelError(m.group(0)) from None

    return META_RE.sub(expand, compressed_text)


# --------------------------------------------------------------------------- files


def _no_duplicates(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise DictionaryFormatError(f"duplicate key {key!r}")
        obj[key] = value
    return obj


def _loads(data: bytes | str):
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DictionaryFormatError(f"not UTF-8: {exc}") from None
    try:
        return json.loads(data, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise DictionaryFormatError(exc.msg, exc.lineno, exc.colno) from None


def serialize(dictionary: Dictionary) -> bytes:
    return (json.dumps(dictionary.to_json_obj(), indent=2) + "\n").encode("utf-8")


def _from_obj(obj) -> Dictionary:
    if not isinstance(obj, dict) or not isinstance(obj.get("entries"), dict):
        raise DictionaryFormatError("expected an object with an 'entries' object")
    entries = obj["entries"]
    for label, value in entries.items():
        if not isinstance(value, str):
            raise DictionaryFormatError(f"value of {label!r} is not a string")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise DictionaryFormatError("'params' must be an object")
    first_index = obj.get("first_index", 1)
    if not isinstance(first_index, int) or first_index < 0:
        raise DictionaryFormatError("'first_index' must be a non-negative integer")
    try:
        return Dictionary(
            entries=dict(entries),
            params=params,
            cost_model=str(obj.get("cost_model", "word")),
            first_index=first_index,
        )
    except ValueError as exc:
        raise DictionaryFormatError(str(exc)) from None


def parse(data: bytes | str) -> Dictionary:
    return _from_obj(_loads(data))


def write_envelope(path: str | Path, compressed: str, dictionary: Dictionary) -> None:
    obj = {"dictionary": dictionary.to_json_obj(), "compressed": compressed}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_envelope(path: str | Path) -> tuple[str, Dictionary]:
    obj = _loads(Path(path).read_bytes())
    if not isinstance(obj, dict) or "compressed" not in obj or "dictionary" not in obj:
        raise DictionaryFormatError("envelope needs 'dictionary' and 'compressed' keys")
    if not isinstance(obj["compressed"], str):
        raise DictionaryFormatError("'compressed' must be a string")
    return obj["compressed"], _from_obj(obj["dictionary"])


def write_split(stem: str | Path, compressed: str, dictionary: Dictionary) -> tuple[Path, Path]:
    cmp_path = Path(f"{stem}.cmp")
    dict_path = Path(f"{stem}.dict")
    with open(cmp_path, "w", encoding="utf-8", errors="surrogateescape", newline="") as fh:
        fh.write(compressed)
    dict_path.write_bytes(serialize(dictionary))
    return cmp_path, dict_path


# --------------------------------------------------------------------------- templates


@dataclass(frozen=True)
class Template:
    id: str
    pattern: str

    def __post_init__(self):
        if not LABEL_RE.match(self.id):
            raise ValueError(f"bad template label {self.id!r}")

    @property
    def slot_count(self) -> int:
        return self.pattern.count(WILDCARD)

    @property
    def regex(self) -> re.Pattern:
        return _compile_template(self.pattern)


_template_cache: dict[str, re.Pattern] = {}


def _compile_template(pattern: str) -> re.Pattern:
    rx = _template_cache.get(pattern)
    if rx is None:
        rx = re.compile("(.+?)".join(re.escape(part) for part in pattern.split(WILDCARD)), re.DOTALL)
        _template_cache[pattern] = rx
    return rx


def template_compress(line: str, templates: list[Template]) -> str:
    """Encode ``line`` as its template label followed by the slot values.

    Slots are joined with U+001F.  Lines no template matches come back
    unchanged, as do lines containing U+001F (they could not be decoded).
    """
    if UNIT_SEP in line:
        return line
    for tpl in templates:
        m = tpl.regex.fullmatch(line)
        if m:
            return tpl.id + "".join(UNIT_SEP + g for g in m.groups())
    return line


def template_decompress(line: str, templates: list[Template] | dict[str, Template]) -> str:
    by_id = templates if isinstance(templates, dict) else {t.id: t for t in templates}
    head, *slots = line.split(UNIT_SEP)
    tpl = by_id.get(head)
    if tpl is None:
        if slots:
            raise ReconstructionError(f"unknown template label {head!r}")
        return line
    if len(slots) != tpl.slot_count:
        raise ReconstructionError(
            f"{tpl.id} expects {tpl.slot_count} slot value(s), got {len(slots)}"
        )
    parts = tpl.pattern.split(WILDCARD)
    out = [parts[0]]
    for value, literal in zip(slots, parts[1:]):
        out.append(value)
        out.append(literal)
    return "".join(out)


def templates_as_dictionary(templates: list[Template]) -> Dictionary:
    """Template patterns as dictionary entries (used for the decoder prompt)."""
    entries = {t.id: t.pattern for t in templates}
    return Dictionary(entries=entries, cost_model="template")


def load_templates(path: str | Path) -> list[Template]:
    """Read a ``label<TAB>pattern`` file."""
    templates = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            label, sep, pattern = line.partition("\t")
            if not sep:
                raise DictionaryFormatError("expected 'label<TAB>pattern'", lineno, 1)
            if label in seen:
                raise DictionaryFormatError(f"duplicate template label {label!r}", lineno, 1)
            try:
                templates.append(Template(label, pattern))
            except ValueError as exc:
                raise DictionaryFormatError(str(exc), lineno, 1) from None
            seen.add(label)
    return templates


def write_templates(path: str | Path, templates: list[Template]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in templates:
            fh.write(f"{t.id}\t{t.pattern}\n")
