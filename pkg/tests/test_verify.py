import itertools

import pytest
from hypothesis import given, strategies as st

from conftest import essay
from faithcheck.config import Thresholds
from faithcheck.corpus import AyahRef, HadithRef
from faithcheck.errors import MixedPromptIds
from faithcheck.refparse import CitationCandidate, SourceType, extract_citations
from faithcheck.retrieval import OfflineRetriever
from faithcheck.verify import (CONSISTENT, MISMATCH, NOT_APPLICABLE, RELATIONS, Checks, EssayContext,
                               VerificationFlag as F, VerificationRecord, assign_flag, check_url_consistency,
                               compile_log, render_log, verify_essay)

TH = Thresholds()


def oracle(located, sim, cross, url, rel, unused):
    """Hand-written decision table, independent of the implementation's control flow."""
    if cross is not None and cross >= TH.confirm:
        return F.REFUTED
    if unused or located == "none":
        return F.UNVERIFIED
    if rel in ("unrelated", "contradicts"):
        return F.REFUTED
    if sim is None:
        base = {"supports": F.CONFIRMED, "partially_supports": F.PARTIALLY_CONFIRMED, None: F.UNVERIFIED}[rel]
    elif sim >= TH.confirm:
        base = F.CONFIRMED
    elif sim >= TH.partial or rel is not None:
        base = F.PARTIALLY_CONFIRMED
    else:
        base = F.REFUTED if located == "address" else F.UNVERIFIED
    downgrade = rel == "partially_supports" or url == MISMATCH
    return F.PARTIALLY_CONFIRMED if base is F.CONFIRMED and downgrade else base


SIMS = (None, 0.0, 0.3, 0.55, 0.7, 0.85, 1.0)
CROSS = (None, 0.5, 0.85, 1.0)
GRID = list(itertools.product(("address", "search", "none"), SIMS, CROSS,
                              (NOT_APPLICABLE, CONSISTENT, MISMATCH), (None,) + RELATIONS, (False, True)))


def test_assign_flag_matches_decision_table_exhaustively():
    assert len(GRID) == 3 * 7 * 4 * 3 * 5 * 2
    for located, sim, cross, url, rel, unused in GRID:
        checks = Checks(located=located, quote_similarity=sim,
                        cross_match=None if cross is None else (AyahRef(2, 256), cross),
                        url_consistency=url, semantic_relation=rel, unused_link=unused)
        assert assign_flag(checks) is oracle(located, sim, cross, url, rel, unused), checks


@given(st.sampled_from(GRID))
def test_confident_cross_match_always_refutes(row):
    located, sim, _, url, rel, unused = row
    checks = Checks(located, sim, (AyahRef(1, 1), 0.9), url, rel, unused)
    assert assign_flag(checks) is F.REFUTED


@given(st.sampled_from(GRID))
def test_url_mismatch_never_confirms(row):
    located, sim, cross, _, rel, unused = row
    checks = Checks(located, sim, None if cross is None else (AyahRef(1, 1), cross), MISMATCH, rel, unused)
    assert assign_flag(checks) is not F.CONFIRMED


def test_thresholds_are_respected():
    strict = Thresholds(confirm=0.95, partial=0.6)
    c = Checks(located="address", quote_similarity=0.9, semantic_relation="supports")
    assert assign_flag(c) is F.CONFIRMED
    assert assign_flag(c, strict) is F.PARTIALLY_CONFIRMED


def _cand(**kw):
    return CitationCandidate(span=(0, 1), snippet="x", source_type=SourceType.QURAN, **kw)


@pytest.mark.parametrize("kw,status", [
    (dict(quran_ref=AyahRef(2, 282), url_ref=AyahRef(65, 2)), MISMATCH),
    (dict(quran_ref=AyahRef(2, 282), url_ref=AyahRef(2, 282)), CONSISTENT),
    (dict(quran_ref=AyahRef(2, 282), range_end=283, url_ref=AyahRef(2, 283)), CONSISTENT),
    (dict(quran_ref=AyahRef(2, 282)), NOT_APPLICABLE),
    (dict(url_ref=AyahRef(65, 2)), NOT_APPLICABLE),
    (dict(hadith_ref=HadithRef("bukhari", "1"), url_ref=AyahRef(1, 1)), MISMATCH),
])
def test_url_consistency(kw, status):
    assert check_url_consistency(_cand(**kw)).status == status


# ---------------------------------------------------------------- documented essays

def _verify(name, corpus, retriever, judge, pid=1):
    return verify_essay(essay(name), corpus, retriever, judge, ctx=EssayContext(pid, "Fiqh"))


def test_mislinked_ayah_yields_records_for_both_verses(corpus, retriever, acceptance_judge):
    recs = _verify("p09_fanar_testimony.md", corpus, retriever, acceptance_judge)
    by_ref = {r.source_reference: r for r in recs}
    assert [r.flag for r in recs if "49:13" in r.source_reference] == [F.CONFIRMED]
    mism = [r for r in recs if r.checks.url_consistency == MISMATCH]
    assert {r.checks.role for r in mism} == {"cited", "url_referent"}
    refs = " ".join(r.source_reference for r in mism)
    assert "2:282" in refs and "65:2" in refs
    assert all(r.flag is F.REFUTED for r in mism)
    assert len(by_ref) == len(recs)


def test_misnumbered_quote_reports_cross_match(corpus, retriever, acceptance_judge):
    recs = _verify("p12_religious_freedom.md", corpus, retriever, acceptance_judge)
    wrong = [r for r in recs if "(Quran 2:62)" in r.content_snippet]
    assert len(wrong) == 1 and wrong[0].flag is F.REFUTED
    # the record points at the verse the text actually comes from
    assert wrong[0].source_reference == "Surah Al-Baqarah (2:256)"
    assert wrong[0].checks.cross_match[0] == AyahRef(2, 256)
    assert wrong[0].checks.cross_match[1] >= TH.confirm
    assert "2:256" in wrong[0].comment


def test_offline_never_confirms_hadith_or_web(corpus):
    for path in ("p01_birthdays.md", "p06_istikhara.md", "p18_basmala.md", "p04_udhiyyah.md"):
        for r in verify_essay(essay(path), corpus, OfflineRetriever(), None):
            if r.source_type in (SourceType.HADITH, SourceType.WEB):
                assert r.flag is F.UNVERIFIED


def test_verification_is_deterministic(corpus, retriever, acceptance_judge):
    a = compile_log(_verify("p09_fanar_testimony.md", corpus, retriever, acceptance_judge)).to_json()
    b = compile_log(_verify("p09_fanar_testimony.md", corpus, retriever, acceptance_judge)).to_json()
    assert a == b


def test_no_judge_leaves_quran_decided_by_similarity(corpus):
    text = 'God says: "O mankind, indeed We have created you from male and female and made you peoples and tribes that you may know one another." (49:13)'
    [r] = verify_essay(text, corpus)
    assert r.flag is F.CONFIRMED and r.checks.semantic_relation is None


def test_nonexistent_ayah_is_refuted_or_unverified(corpus):
    [r] = verify_essay('As stated in Quran 115:3, "mercy wins".', corpus)
    assert r.flag in (F.REFUTED, F.UNVERIFIED)
    assert "does not exist" in r.comment


# ---------------------------------------------------------------- log

def _rec(flag, pid=3, span=(0, 1), st_=SourceType.QURAN, role="cited", ref="Quran 1:1"):
    return VerificationRecord(pid, "Tafsir", "s", st_, ref, "", "", "c", flag, Checks(located="address", span=span, role=role))


def test_compile_log_groups_and_counts():
    recs = [_rec(F.CONFIRMED, span=(5, 6)), _rec(F.REFUTED, span=(9, 10)), _rec(F.UNVERIFIED, span=(1, 2), st_=SourceType.WEB),
            _rec(F.REFUTED, span=(9, 10), role="url_referent", ref="Quran 65:2")]
    log = compile_log(recs)
    assert [r.flag for r in log.records] == [F.REFUTED, F.REFUTED, F.UNVERIFIED, F.CONFIRMED]
    assert log.records[1].checks.role == "url_referent"
    assert log.counts == {"Refuted": 2, "Unverified": 1, "PartiallyConfirmed": 0, "Confirmed": 1}
    assert log.reference_totals["quran"] == 2 and log.reference_totals["web"] == 1
    assert log.prompt_id == 3


def test_compile_log_rejects_mixed_prompts():
    with pytest.raises(MixedPromptIds):
        compile_log([_rec(F.CONFIRMED, pid=1), _rec(F.CONFIRMED, pid=2)])
    with pytest.raises(MixedPromptIds):
        compile_log([_rec(F.CONFIRMED, pid=1)], prompt_id=2)


def test_empty_log():
    log = compile_log([], prompt_id=4)
    assert log.records == () and log.prompt_id == 4
    assert set(log.counts.values()) == {0}
    assert log.summary == "No references detected."


@given(st.permutations([_rec(f, span=(i, i + 1)) for i, f in enumerate(F)]))
def test_log_order_ignores_input_order(perm):
    assert compile_log(perm).to_json() == compile_log(list([_rec(f, span=(i, i + 1)) for i, f in enumerate(F)])).to_json()


def test_log_json_round_trip(corpus, retriever, acceptance_judge):
    log = compile_log(_verify("p12_religious_freedom.md", corpus, retriever, acceptance_judge, pid=12))
    from faithcheck.verify import AccuracyVerificationLog
    import json
    assert AccuracyVerificationLog.from_dict(json.loads(log.to_json())).to_json() == log.to_json()


def test_render_log_sections():
    text = render_log([_rec(F.CONFIRMED), _rec(F.REFUTED, span=(4, 5))])
    heads = [l for l in text.splitlines() if l.endswith("):")]
    assert heads == ["REFUTED Sources (1):", "UNVERIFIED Sources (0):", "PARTIALLY CONFIRMED Sources (0):",
                     "CONFIRMED Sources (1):"]
    assert "Verification Comment: c" in text
    assert "Source URL: n/a" in text
