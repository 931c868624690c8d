"""Quote similarity shared by corpus search and citation verification.

The score answers "how much of the quote is present in the source":

* ``lcs_coverage`` - longest common subsequence of content words divided by the
  quote's content-word count (stopwords only count when the quote has nothing else)
* ``content_overlap`` - fraction of the quote's content words found in the source

``similarity`` is the max of the two. A quote that is a verbatim fragment of a
long verse scores 1.0, identical strings score 1.0, disjoint token sets score 0.0.
``dice`` (symmetric LCS) is exposed separately and only used to order ties.
"""
from __future__ import annotations

import re
import unicodedata
from functools import lru_cache

STOPWORDS = frozenset(
    """a an and are as at be been but by do does for from had has have he her his
    i if in into is it its me my no not of on or our she so that the their them
    then there these they this those to upon us was we were which who whom will
    with you your""".split()
)

_BRACKETS = str.maketrans({c: " " for c in "[](){}<>"})
_NON_WORD = re.compile(r"[^\w]+", re.UNICODE)


def strip_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


@lru_cache(maxsize=65536)
def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, strip diacritics and punctuation, split on whitespace."""
    text = strip_diacritics(text).lower().translate(_BRACKETS)
    # apostrophes inside words are dropped rather than split on ("bid`ah" -> "bidah")
    text = re.sub(r"[‘’'`ʼʿʾ]", "", text)
    text = _NON_WORD.sub(" ", text).replace("_", " ")
    return tuple(text.split())


def normalize_text(text: str) -> str:
    return " ".join(tokenize(text))


def content_words(tokens: tuple[str, ...]) -> frozenset[str]:
    words = frozenset(t for t in tokens if t not in STOPWORDS)
    return words or frozenset(tokens)


def lcs_length(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    """Token LCS length, bit-parallel over ``a`` (Hyyro's formulation)."""
    if not a or not b:
        return 0
    masks: dict[str, int] = {}
    for i, tok in enumerate(a):
        masks[tok] = masks.get(tok, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for tok in b:
        u = v & masks.get(tok, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def content_sequence(tokens: tuple[str, ...]) -> tuple[str, ...]:
    seq = tuple(t for t in tokens if t not in STOPWORDS)
    return seq or tokens


def lcs_coverage(quote: tuple[str, ...], source: tuple[str, ...]) -> float:
    if not quote:
        return 0.0
    q = content_sequence(quote)
    s = content_sequence(source) if q is not quote else source
    return lcs_length(q, s) / len(q)


def content_overlap(quote: tuple[str, ...], source: tuple[str, ...]) -> float:
    if not quote:
        return 0.0
    q = content_words(quote)
    return len(q & frozenset(source)) / len(q)


def dice(quote: tuple[str, ...], source: tuple[str, ...]) -> float:
    if not quote and not source:
        return 1.0
    return 2 * lcs_length(quote, source) / (len(quote) + len(source))


def token_similarity(quote: tuple[str, ...], source: tuple[str, ...]) -> float:
    if not quote or not source:
        return 0.0
    if quote == source:
        return 1.0
    return max(lcs_coverage(quote, source), content_overlap(quote, source))


def similarity(quote: str, source: str) -> float:
    """Similarity in [0, 1] of ``quote`` against ``source`` text."""
    return token_similarity(tokenize(quote), tokenize(source))
