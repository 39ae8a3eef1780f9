import pytest
from hypothesis import given
from hypothesis import strategies as st

from metatok.segmenter import (
    CHAR_HEURISTIC,
    WORD_UNIT,
    WHITESPACE,
    WordSequence,
    command_model,
    cost_of_span,
    external_model,
    get_cost_model,
    render,
    segment,
)

ws_text = st.text(alphabet=st.sampled_from(list("ab<M1>é") + list(WHITESPACE)), max_size=60)


@pytest.mark.parametrize(
    "text, words, seps",
    [
        ("a  b", ["a", "b"], ["", "  ", ""]),
        ("", [], [""]),
        (" x\ny ", ["x", "y"], [" ", "\n", " "]),
        ("\t\r\n", [], ["\t\r\n"]),
    ],
)
def test_segment_examples(text, words, seps):
    seq = segment(text)
    assert list(seq.words) == words
    assert list(seq.separators) == seps
    assert render(seq) == text


@given(ws_text)
def test_roundtrip(text):
    seq = segment(text)
    assert render(seq) == text
    assert len(seq.separators) == len(seq.words) + 1
    for w in seq.words:
        assert w and not any(c in WHITESPACE for c in w)
    for sep in seq.separators[1:-1]:
        assert sep and all(c in WHITESPACE for c in sep)


def test_non_ascii_whitespace_is_part_of_words():
    # only the six ASCII whitespace characters split words
    assert segment("a\u00a0b c").words == ("a\u00a0b", "c")


def test_wordsequence_rejects_bad_separator_count():
    with pytest.raises(ValueError):
        WordSequence(("a",), ("",))


def test_cost_of_span():
    seq = segment("a b c d")
    assert cost_of_span(seq, 0, 3, WORD_UNIT) == 3
    assert cost_of_span(seq, 2, 0, WORD_UNIT) == 0
    assert cost_of_span(segment("abcdefgh"), 0, 1, CHAR_HEURISTIC) == 2
    with pytest.raises(IndexError):
        cost_of_span(seq, 3, 2, WORD_UNIT)
    with pytest.raises(IndexError):
        cost_of_span(seq, -1, 1, WORD_UNIT)


@given(ws_text, st.data())
def test_word_model_is_additive(text, data):
    seq = segment(text)
    start = data.draw(st.integers(0, len(seq)))
    length = data.draw(st.integers(0, len(seq) - start))
    assert cost_of_span(seq, start, length, WORD_UNIT) == length


def test_char_heuristic():
    assert CHAR_HEURISTIC.cost("") == 0
    assert CHAR_HEURISTIC.cost("a") == 1
    assert CHAR_HEURISTIC.cost("abcd abcde") == 1 + 2
    assert CHAR_HEURISTIC.cost("<M1>") == 1
    assert CHAR_HEURISTIC.cost("<M10>") == 2
    assert CHAR_HEURISTIC.cost("éé") == 1  # 4 bytes


def test_external_table(tmp_path):
    table = tmp_path / "counts.tsv"
    table.write_text("hello\t3\n<M1>\t2\n\nworld\t1\n", encoding="utf-8")
    model = external_model(table)
    assert model.cost("hello world") == 4
    assert model.cost("<M1>") == 2
    # unknown word falls back to ceil(bytes / 4)
    assert model.cost("unknownword") == 3
    assert model.cost("") == 0
    assert get_cost_model(f"external:{table}").cost("hello") == 3


def test_external_table_malformed(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("hello 3\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad.tsv:1"):
        external_model(bad)


def test_command_model(tmp_path):
    script = tmp_path / "count.py"
    script.write_text(
        "import sys\nfor w in sys.stdin.read().split('\\n'):\n    w and print(len(w))\n",
        encoding="utf-8",
    )
    import sys

    model = command_model([sys.executable, str(script)])
    assert model.cost("ab abc") == 5
    assert model.cost("ab") == 2


def test_get_cost_model_rejects_unknown():
    assert get_cost_model("word") is WORD_UNIT
    assert get_cost_model("char") is CHAR_HEURISTIC
    with pytest.raises(ValueError):
        get_cost_model("bpe")
