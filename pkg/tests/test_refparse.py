import pytest
import yaml
from hypothesis import given, settings, strategies as st

from conftest import ESSAYS, FIXTURES, essay
from faithcheck.corpus import AyahRef, HadithRef
from faithcheck.errors import RefParseError
from faithcheck.refparse import (SourceType, extract_citations, fold, format_quran_ref, parse_scripture_url,
                                 parse_textual_quran_ref)

LABELS = yaml.safe_load((FIXTURES / "parser_labels.yaml").read_text())


def _ref(c):
    if c.source_type is SourceType.WEB:
        return c.url
    return str(c.target_ref) if c.target_ref is not None else None


@pytest.mark.parametrize("item", LABELS, ids=[f"label{i:02d}" for i in range(len(LABELS))])
def test_labelled_strings(item, corpus):
    got = [(c.snippet, c.source_type.value, _ref(c)) for c in extract_citations(item["text"], corpus)]
    assert got == [(e["snippet"], e["type"], e["ref"]) for e in item["expect"]]


def test_label_corpus_size():
    assert len(LABELS) >= 30


@pytest.mark.parametrize("text,expected", [
    ("Surah Al-Baqarah (2:256)", (2, 256)),
    ("Surah Al-`Ankabût (29:46)", (29, 46)),
    ("Quran 2:62", (2, 62)),
    ("Qur'an 49:13", (49, 13)),
    ("(65:2)", (65, 2)),
    ("Al-Baqarah 2:282", (2, 282)),
    ("Surah Al-Baqarah, verse 255", (2, 255)),
])
def test_parse_textual_forms(corpus, text, expected):
    assert parse_textual_quran_ref(text, corpus).ref == AyahRef(*expected)


def test_range_anchors_on_first_ayah(corpus):
    p = parse_textual_quran_ref("Quran 2:282-283", corpus)
    assert p.ref == AyahRef(2, 282) and p.range_end == 283


def test_unparseable_and_unknown_name(corpus):
    with pytest.raises(RefParseError):
        parse_textual_quran_ref("chapter two", corpus)
    with pytest.raises(RefParseError):
        parse_textual_quran_ref("Surah Nowhere, verse 3", corpus)


def test_nonexistent_number_is_kept_for_verification(corpus):
    # well-formed but outside the canon: verification reports it, the parser does not drop it
    assert parse_textual_quran_ref("Quran 115:1", corpus).ref == AyahRef(115, 1)


def test_name_number_disagreement_keeps_number(corpus):
    p = parse_textual_quran_ref("Surah Al-Baqarah 3:7", corpus)
    assert p.ref == AyahRef(3, 7) and "surah 2" in p.note


def test_textual_round_trip_over_whole_corpus(corpus):
    for ref in corpus.order:
        assert parse_textual_quran_ref(format_quran_ref(ref), corpus).ref == ref


@pytest.mark.parametrize("url,expected", [
    ("https://quran.com/65/2", AyahRef(65, 2)),
    ("https://quran.com/2/256", AyahRef(2, 256)),
    ("https://sunnah.com/bukhari:1166", HadithRef("bukhari", "1166")),
    ("https://islamweb.net/en/article/171933/all-about-udh-hiyah", None),
    ("https://islamqa.info/en/answers/1027", None),
])
def test_parse_scripture_url(corpus, url, expected):
    assert parse_scripture_url(url, corpus) == expected


def test_documented_mislinked_citation(corpus):
    [c] = extract_citations("as affirmed in [Surah Al-Baqarah 2:282](https://quran.com/65/2).", corpus)
    assert c.quran_ref == AyahRef(2, 282) and c.url_ref == AyahRef(65, 2)


@pytest.mark.parametrize("name", sorted(p.name for p in ESSAYS.glob("*.md")))
def test_snippets_sit_at_their_spans(corpus, name):
    text = essay(name)
    cands = extract_citations(text, corpus)
    for c in cands:
        assert text[c.span[0]:c.span[1]] == c.snippet
        assert c.quran_ref or c.hadith_ref or c.url or c.quoted_text
        assert (c.quran_ref is not None) == (c.source_type is SourceType.QURAN and c.quran_ref is not None)
    assert extract_citations(text, corpus) == cands


PIECES = st.sampled_from([
    "Mercy is central. ", "(Qur'an 2:255) ", "\"Indeed, with hardship [will be] ease.\" (94:6) ",
    "See https://quran.com/2/286 now. ", "(Sahih Muslim 2594) ", "The Prophet taught: \"Be kind to others always.\" ",
    "\n\n", "Surah Yusuf 12:2 ", "at 2:30 pm ",
])


@settings(max_examples=60, deadline=None)
@given(st.lists(PIECES, max_size=8))
def test_extraction_deterministic_and_span_exact(corpus, parts):
    text = "".join(parts)
    a = extract_citations(text, corpus)
    assert a == extract_citations(text, corpus)
    for c in a:
        assert text[c.span[0]:c.span[1]] == c.snippet
        assert 0 <= c.span[0] < c.span[1] <= len(text)


@given(st.text(max_size=40))
def test_fold_preserves_length(s):
    assert len(fold(s)) == len(s)
