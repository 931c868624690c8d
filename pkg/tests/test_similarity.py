from hypothesis import given, settings, strategies as st

from faithcheck.similarity import (content_words, dice, lcs_length, normalize_text, similarity, tokenize,
                                   token_similarity)

WORDS = st.sampled_from(["allah", "mercy", "the", "of", "prayer", "day", "light", "and", "guide", "people"])
SEQ = st.lists(WORDS, max_size=12).map(tuple)


def lcs_dp(a, b):
    # textbook O(nm) table, the oracle for the bit-parallel version
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i][j] = t[i - 1][j - 1] + 1 if a[i - 1] == b[j - 1] else max(t[i - 1][j], t[i][j - 1])
    return t[-1][-1]


@given(SEQ, SEQ)
def test_lcs_matches_dynamic_programming(a, b):
    assert lcs_length(a, b) == lcs_dp(a, b)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 3).map(str), min_size=60, max_size=90).map(tuple),
       st.lists(st.integers(0, 3).map(str), max_size=90).map(tuple))
def test_lcs_long_inputs_beyond_one_machine_word(a, b):
    assert lcs_length(a, b) == lcs_dp(a, b)


@given(SEQ, SEQ)
def test_similarity_bounds(a, b):
    s = token_similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert 0.0 <= dice(a, b) <= 1.0


@given(SEQ.filter(bool))
def test_identical_scores_one(a):
    assert token_similarity(a, a) == 1.0


@given(SEQ.filter(bool), SEQ, SEQ)
def test_verbatim_fragment_of_longer_source_scores_one(q, pre, post):
    assert token_similarity(q, pre + q + post) == 1.0


def test_disjoint_scores_zero():
    assert similarity("mercy light", "prayer day") == 0.0


def test_tokenize_normalises_case_punctuation_diacritics():
    assert tokenize("Ṣalāh, the PRAYER!") == ("salah", "the", "prayer")
    assert tokenize("bid`ah [innovation]") == ("bidah", "innovation")
    assert normalize_text("  A  b ") == "a b"


def test_content_words_fall_back_to_stopwords():
    assert content_words(("the", "of")) == {"the", "of"}
    assert content_words(("the", "mercy")) == {"mercy"}


def test_documented_cross_match_pair():
    quote = "There is no compulsion in religion. The right course is clear from the wrong."
    src = ("There shall be no compulsion in [acceptance of] the religion. "
           "The right course has become clear from the wrong.")
    assert similarity(quote, src) >= 0.85
