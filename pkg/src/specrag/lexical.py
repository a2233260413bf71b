"""Sentence splitting, tokenization, and the lexical support rule.

These primitives back the deterministic fact-check guardrail and the
offline evaluation metrics, so they must stay cheap and stable.
"""

from __future__ import annotations

import re
from typing import Iterable

SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
TOKEN_RE = re.compile(r"[a-z0-9']+")

# Function words ignored when measuring overlap; kept deliberately small.
STOPWORDS = frozenset(
    """
    a an the and or but if then else when while of to in on at by for with
    from as is are was were be been being am do does did have has had having
    it its this that these those there here he she they them his her their
    we you i me my your our us not no nor so than too very can will just
    should would could may might must shall about into over under between
    """.split()
)


def split_sentences(text: str) -> list[str]:
    """Split on whitespace that follows ., !, or ?; drops empty pieces."""
    return [s for s in (p.strip() for p in SENTENCE_SPLIT_RE.split(text)) if s]


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric-and-apostrophe runs, in order."""
    return TOKEN_RE.findall(text.lower())


def content_words(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


def vocabulary(texts: Iterable[str]) -> frozenset[str]:
    """All tokens (stopwords included) across the given texts."""
    vocab: set[str] = set()
    for text in texts:
        vocab.update(tokenize(text))
    return frozenset(vocab)


def support_basis(sentence: str) -> list[str]:
    """Tokens a sentence is judged on: content words, or all tokens if none."""
    tokens = tokenize(sentence)
    content = [t for t in tokens if t not in STOPWORDS]
    return content if content else tokens


def support_ratio(sentence: str, vocab: frozenset[str]) -> float:
    """Fraction of the sentence's basis tokens present in vocab; 1.0 if no tokens."""
    basis = support_basis(sentence)
    if not basis:
        return 1.0
    distinct = set(basis)
    return len(distinct & vocab) / len(distinct)


def sentence_supported(sentence: str, vocab: frozenset[str], theta: float = 0.5) -> bool:
    return support_ratio(sentence, vocab) >= theta
