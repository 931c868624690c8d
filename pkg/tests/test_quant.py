import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from conftest import essay, make_gateway
from faithcheck.config import ScoringConfig
from faithcheck.errors import QuantError, SchemaViolation
from faithcheck.judge import Judge
from faithcheck.refparse import SourceType
from faithcheck.verify import Checks, EssayContext, VerificationFlag as F, VerificationRecord, compile_log, verify_essay
from faithcheck.quant import (CRITERIA, CriterionScores, citation_score, evaluate_essay, score_essay,
                              segment_essay)

WORSENING = (F.CONFIRMED, F.PARTIALLY_CONFIRMED, F.UNVERIFIED, F.REFUTED)
COST = {F.CONFIRMED: 0, F.PARTIALLY_CONFIRMED: Fraction(1, 2), F.UNVERIFIED: 1, F.REFUTED: 2}


def _log(flags, st_=SourceType.QURAN):
    recs = [VerificationRecord(1, "Fiqh", f"s{i}", st_, f"Quran 1:{i + 1}", "", "", "", f, Checks(span=(i, i + 1)))
            for i, f in enumerate(flags)]
    return compile_log(recs, 1)


def formula(flags, step=1):
    if not flags:
        return 2.0
    v = max(Fraction(1), min(Fraction(5), 5 - sum(COST[f] for f in flags)))
    return float((v // Fraction(step)) * Fraction(step))


def test_documented_citation_scores(corpus, retriever, acceptance_judge):
    recs = verify_essay(essay("p09_fanar_testimony.md"), corpus, retriever, acceptance_judge, ctx=EssayContext(9, "Fiqh"))
    assert citation_score(compile_log(recs)) == 1
    assert citation_score(_log([F.CONFIRMED] * 3)) == 5
    assert citation_score(_log([])) == 2


def test_all_flag_combinations_against_formula_and_monotone():
    combos = list(itertools.product(WORSENING, repeat=3))
    assert len(combos) == 64
    scores = {c: citation_score(_log(c)) for c in combos}
    for combo, s in scores.items():
        assert s == formula(combo)
        assert 1 <= s <= 5
        for i in range(3):
            k = WORSENING.index(combo[i])
            if k + 1 < len(WORSENING):
                worse = combo[:i] + (WORSENING[k + 1],) + combo[i + 1:]
                assert scores[worse] <= s


@given(st.lists(st.sampled_from(WORSENING), max_size=8))
def test_half_point_granularity_floors(flags):
    cfg = ScoringConfig(granularity=0.5)
    assert citation_score(_log(flags), cfg) == formula(flags, Fraction(1, 2))
    assert citation_score(_log(flags)) == formula(flags)


def test_no_reference_cap_binds_only_when_empty():
    assert citation_score(_log([])) == 2
    assert citation_score(_log([F.CONFIRMED])) == 5
    assert citation_score(_log([F.PARTIALLY_CONFIRMED])) == 4  # 4.5 floors to 4 on the integer scale


# ---------------------------------------------------------------- segmentation

def test_heading_split():
    text = "# Patience\n\n## Introduction\n\nOpening.\n\n## Core\n\nMiddle part.\n\n## Conclusion\n\nClosing words."
    seg = segment_essay(text)
    assert seg.method == "headings"
    assert seg.introduction.endswith("Opening.") and "Middle part." in seg.body and seg.conclusion.endswith("Closing words.")


def test_three_paragraphs():
    seg = segment_essay("First one.\n\nSecond one.\n\nThird one.")
    assert (seg.introduction, seg.body, seg.conclusion) == ("First one.", "Second one.", "Third one.")


def test_one_paragraph_is_all_body():
    seg = segment_essay("Just a single paragraph of text.")
    assert (seg.introduction, seg.conclusion) == ("", "") and seg.body == "Just a single paragraph of text."


def test_empty_essay_rejected():
    with pytest.raises(QuantError):
        segment_essay("  \n ")


def _judge(entries, tmp_path):
    return Judge(make_gateway({"entries": entries}, tmp_path), "judge")


def test_judge_fallback_only_for_four_or_more_headingless_paragraphs(tmp_path):
    judge = _judge([{"schema_id": "segment/1", "output": {"introduction_paragraphs": 2, "conclusion_paragraphs": 1}}], tmp_path)
    seg = segment_essay("A.\n\nB.\n\nC.\n\nD.", judge)
    assert seg.method == "judge" and seg.introduction == "A.\n\nB." and seg.body == "C." and seg.conclusion == "D."
    assert segment_essay("A.\n\nB.\n\nC.", judge).method == "paragraphs"
    assert len(judge.transcripts) == 1


def test_judge_segmentation_keeps_a_body(tmp_path):
    judge = _judge([{"schema_id": "segment/1", "output": {"introduction_paragraphs": 3, "conclusion_paragraphs": 3}}], tmp_path)
    seg = segment_essay("A.\n\nB.\n\nC.\n\nD.", judge)
    assert seg.body


@given(st.lists(st.text(alphabet="abc .#\n", min_size=1, max_size=20), min_size=1, max_size=7))
def test_segments_cover_the_essay(paras):
    text = "\n\n".join(paras)
    if not text.strip():
        return
    seg = segment_essay(text)
    joined = "".join((seg.introduction + seg.body + seg.conclusion).split())
    assert joined == "".join(text.split())


# ---------------------------------------------------------------- scoring

def _scores(vals):
    return dict(zip(("structure", "theme", "clarity", "originality", "islamic_accuracy"), vals))


def test_documented_composites(tmp_path):
    judge = _judge([{"schema_id": "quant_scores/1", "output": _scores((4, 4, 4, 3, 4))}], tmp_path)
    seg = segment_essay("a.\n\nb.\n\nc.")
    r = score_essay("", seg, _log([]), judge)
    assert r.scores.citation == 2
    s = r.scores
    assert abs(s.style_content - (s.structure + s.theme + s.clarity + s.originality) / 4) < 1e-12
    assert abs(s.islamic_content - (s.islamic_accuracy + s.citation) / 2) < 1e-12
    assert r.composites == (3.75, 3.0)


def test_maximal_case(tmp_path):
    judge = _judge([{"schema_id": "quant_scores/1", "output": _scores((5,) * 5)}], tmp_path)
    r = score_essay("", segment_essay("x"), _log([F.CONFIRMED]), judge)
    assert r.scores.citation == 5 and r.scores.islamic_content == 5.0


def test_refuted_scripture_caps_islamic_accuracy(tmp_path):
    judge = _judge([{"schema_id": "quant_scores/1", "output": _scores((4, 4, 4, 3, 5))}], tmp_path)
    r = score_essay("", segment_essay("x"), _log([F.REFUTED]), judge)
    assert r.scores.islamic_accuracy == 2 and r.islamic_accuracy_capped


def test_out_of_range_scores_are_clamped_with_warning(tmp_path, caplog):
    judge = _judge([{"schema_id": "quant_scores/1", "output": _scores((7, 0, 4.4, 3.6, 4))}], tmp_path)
    r = score_essay("", segment_essay("x"), _log([F.CONFIRMED]), judge)
    assert (r.scores.structure, r.scores.theme, r.scores.clarity, r.scores.originality) == (5, 1, 4, 4)
    assert len(r.warnings) == 2 and "clamped" in caplog.text


def test_schema_violation_retried_once_then_fails(tmp_path):
    bad = {"schema_id": "quant_scores/1", "times": 1, "output": {"structure": 4}}
    good = {"schema_id": "quant_scores/1", "output": _scores((3,) * 5)}
    r = score_essay("", segment_essay("x"), _log([]), _judge([bad, good], tmp_path))
    assert r.scores.structure == 3
    with pytest.raises(SchemaViolation):
        score_essay("", segment_essay("x"), _log([]), _judge([{"schema_id": "quant_scores/1", "output": {"structure": 4}}], tmp_path))


def test_scores_reject_out_of_range():
    with pytest.raises(QuantError):
        CriterionScores(5, 5, 5, 5, 5, 0)


def test_evaluate_is_reproducible(corpus, retriever, tmp_path):
    entries = [{"schema_id": "quant_scores/1", "output": _scores((4, 3, 4, 3, 4))},
               {"schema_id": "semantic_relation/1", "output": {"relation": "supports", "rationale": "ok"}},
               {"schema_id": "detect_references/1", "output": {"references": []}},
               {"schema_id": "segment/1", "output": {"introduction_paragraphs": 1, "conclusion_paragraphs": 1}}]
    outs = [evaluate_essay(essay("p12_religious_freedom.md"), corpus, _judge(entries, tmp_path / str(i)), retriever,
                           prompt_id=12, model="Fanar", category="Tafsir").to_dict() for i in range(2)]
    assert outs[0] == outs[1]
    assert outs[0]["scores"]["islamic_accuracy"] == 2  # both citations are refuted scripture
    assert set(outs[0]["scores"]) == set(CRITERIA)
