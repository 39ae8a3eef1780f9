"""Shared generators of repetitive, whitespace-rich synthetic logs."""

import random

from hypothesis import strategies as st

VOCAB = ["GET", "/index.html", "200", "INFO", "user", "login", "ok", "a", "b", "é", "x=1"]
RESERVED = ["<M1>", "<M3>", "<M12>", "x<M2>y", "<M0>", "<M>", "<M007>"]
SEPARATORS = [" ", " ", " ", "  ", "\t", "\n", "\r\n", " \n "]


def _render(words, seps):
    out = [seps[0]]
    for w, s in zip(words, seps[1:]):
        out.append(w)
        out.append(s)
    return "".join(out)


@st.composite
def log_texts(draw, max_words=60):
    vocab = draw(st.lists(st.sampled_from(VOCAB + RESERVED), min_size=1, max_size=6, unique=True))
    phrases = draw(st.lists(st.lists(st.sampled_from(vocab), min_size=1, max_size=5), min_size=1, max_size=4))
    words = []
    while len(words) < draw(st.integers(0, max_words)):
        words.extend(draw(st.sampled_from(phrases)))
    seps = [draw(st.sampled_from(["", "\n", " "]))]
    seps += [draw(st.sampled_from(SEPARATORS)) for _ in range(max(len(words) - 1, 0))]
    if words:
        seps.append(draw(st.sampled_from(["", "\n"])))
    return _render(words, seps)


def random_log_text(rng: random.Random, max_words=80, reserved_rate=0.05):
    """Plain-``random`` version of :func:`log_texts` for large seeded batches."""
    vocab = rng.sample(VOCAB, rng.randint(2, 6))
    phrases = [[rng.choice(vocab) for _ in range(rng.randint(1, 6))] for _ in range(rng.randint(1, 5))]
    n = rng.randint(0, max_words)
    words = []
    while len(words) < n:
        if rng.random() < reserved_rate:
            words.append(rng.choice(RESERVED))
        else:
            words.extend(rng.choice(phrases))
    seps = [rng.choice(["", "", " ", "\n"])]
    seps += [rng.choice(SEPARATORS) for _ in range(max(len(words) - 1, 0))]
    if words:
        seps.append(rng.choice(["", "\n", "\r\n"]))
    return _render(words, seps)
