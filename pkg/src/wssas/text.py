"""Tokenization, sentence splitting and stopword handling shared by every stage."""

from __future__ import annotations

import re
from collections import Counter
from collections.abc import Iterable
from functools import lru_cache
from importlib import resources
from pathlib import Path

_PUNCT = re.compile(r"[^\w\s]|_")
_SENTENCE_END = re.compile(r"(?<=[.!?])(?:\s+|$)")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation and split on whitespace."""
    return _PUNCT.sub("", text.lower()).split()


def content_tokens(text: str, stopwords: frozenset[str]) -> list[str]:
    return [t for t in tokenize(text) if t not in stopwords]


def sentences(text: str) -> list[str]:
    """Split on '.', '!' or '?' followed by whitespace or end of text.

    Terminal punctuation stays attached to its sentence.
    """
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def first_sentence(text: str) -> str:
    parts = sentences(text)
    return parts[0] if parts else ""


def ranked_terms(tokens: Iterable[str]) -> list[tuple[str, int]]:
    """Terms by descending frequency, ties broken lexicographically."""
    counts = Counter(tokens)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def parse_stopwords(lines: Iterable[str]) -> frozenset[str]:
    words = set()
    for line in lines:
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    path = resources.files("wssas") / "data" / "stopwords.txt"
    return parse_stopwords(path.read_text(encoding="utf-8").splitlines())


def load_stopwords(path: str | Path | None) -> frozenset[str]:
    if path is None or str(path) == "":
        return default_stopwords()
    return parse_stopwords(Path(path).read_text(encoding="utf-8").splitlines())
