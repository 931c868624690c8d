import itertools
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from conftest import FIXTURES, make_gateway
from faithcheck.errors import QualError, SchemaViolation, VerdictValidationError
from faithcheck.judge import Judge
from faithcheck.qual import (TAGS, VERDICT_DIMENSIONS, BlindAssignment, QualDimension, Verdict, VerdictSet,
                             blind_assignment, build_comparison_prompt, compare_responses, load_verdicts,
                             parse_comparison_prompt, parse_verdicts, tally_verdicts)

MODELS = ("ChatGPT", "Ansari", "Fanar")
RESPONSES = [("ChatGPT", "Patience is a virtue.\nIt is praised."), ("Ansari", "Sabr means <steadfastness> & more."),
             ("Fanar", "Patience is good.")]


def test_blinding_is_deterministic_and_bijective():
    a = blind_assignment(3, 7, MODELS)
    assert a == blind_assignment(3, 7, list(reversed(MODELS)))
    assert sorted(a.mapping.values()) == list(TAGS) and set(a.mapping) == set(MODELS)


def test_blinding_is_roughly_uniform():
    perms = Counter(tuple(blind_assignment(p, 7, MODELS).by_tag[t] for t in TAGS) for p in range(1, 51))
    expected = 50 / 6
    chi2 = sum((perms.get(p, 0) - expected) ** 2 / expected for p in itertools.permutations(MODELS))
    assert chi2 < 20.52  # 5 degrees of freedom, p = 0.001
    # pooled over many seeds every permutation is close to a sixth
    pooled = Counter(tuple(blind_assignment(p, s, MODELS).by_tag[t] for t in TAGS)
                     for p in range(1, 51) for s in range(40))
    assert len(pooled) == 6 and all(abs(n / 2000 - 1 / 6) < 0.03 for n in pooled.values())


def test_seed_change_moves_some_mapping():
    for s1, s2 in itertools.combinations(range(6), 2):
        assert any(blind_assignment(p, s1, MODELS).mapping != blind_assignment(p, s2, MODELS).mapping for p in range(1, 51))


def test_blinding_needs_three_distinct_models():
    with pytest.raises(QualError):
        blind_assignment(1, 1, ["a", "a", "b"])


@given(st.lists(st.text(max_size=60), min_size=3, max_size=3))
def test_prompt_embedding_round_trips(texts):
    responses = list(zip(MODELS, texts))
    a = blind_assignment(1, 3, MODELS)
    back = parse_comparison_prompt(build_comparison_prompt(responses, a, "Patience"))
    assert {a.by_tag[t]: v for t, v in back.items()} == dict(responses)


def test_prompt_lists_tags_in_order_without_model_names():
    a = blind_assignment(2, 7, MODELS)
    prompt = build_comparison_prompt(RESPONSES, a)
    assert prompt.index("<R1>") < prompt.index("<R2>") < prompt.index("<R3>")
    for m in MODELS:
        assert m not in prompt


def _output(best="R2", worst="R3", skip=None, **extra):
    out = {d.value: {"best": best, "worst": worst, "best_excerpt": "", "worst_excerpt": ""}
           for d in VERDICT_DIMENSIONS if d.value != skip}
    out["ComparativeReflection"] = {"narrative": "R2 is the most grounded."}
    out.update(extra)
    return out


ASSIGN = BlindAssignment(5, 0, {"ChatGPT": "R1", "Ansari": "R2", "Fanar": "R3"})


def test_documented_deblinding():
    vs = parse_verdicts(_output(), ASSIGN)
    t = tally_verdicts([vs], MODELS)
    assert t.total_best("Ansari") == 4 and t.total_worst("Fanar") == 4
    assert vs.reflection == "R2 is the most grounded."


def test_validation_errors():
    with pytest.raises(VerdictValidationError, match="ToneAppropriateness"):
        parse_verdicts(_output(skip="ToneAppropriateness"), ASSIGN)
    bad = _output()
    bad["IslamicAccuracy"] = {"best": "R1", "worst": "R1"}
    with pytest.raises(VerdictValidationError):
        parse_verdicts(bad, ASSIGN)
    bad["IslamicAccuracy"] = {"best": "R4", "worst": "R1"}
    with pytest.raises(VerdictValidationError):
        parse_verdicts(bad, ASSIGN)


def test_unlocated_excerpt_only_warns():
    out = _output()
    out["IslamicAccuracy"]["best_excerpt"] = "means   <steadfastness>"
    out["IslamicAccuracy"]["worst_excerpt"] = "not in the text"
    vs = parse_verdicts(out, ASSIGN, dict(RESPONSES))
    assert vs.warnings == ("IslamicAccuracy worst excerpt not found in Fanar response",)
    assert vs.verdicts[QualDimension.ISLAMIC_ACCURACY].worst == "Fanar"


def test_judge_missing_dimension_retries_then_fails(tmp_path):
    bad = {"schema_id": "qual_verdicts/1", "output": _output(skip="ToneAppropriateness")}
    gw = make_gateway({"entries": [bad]}, tmp_path)
    with pytest.raises(SchemaViolation):
        compare_responses(1, RESPONSES, Judge(gw, "judge"), seed=7)
    assert gw.mock_script.calls == 2


def test_compare_responses_deblinds(tmp_path):
    gw = make_gateway({"entries": [{"schema_id": "qual_verdicts/1", "output": _output("R1", "R2")}]}, tmp_path)
    vs = compare_responses(9, RESPONSES, Judge(gw, "judge"), seed=7)
    a = blind_assignment(9, 7, MODELS)
    assert all(v.best == a.by_tag["R1"] and v.worst == a.by_tag["R2"] for v in vs.verdicts.values())
    assert vs.assignment == a and vs.transcript_id


# ---------------------------------------------------------------- tallies

def _set(pid, best, worst):
    return VerdictSet(pid, {d: Verdict(best, worst) for d in VERDICT_DIMENSIONS})


def test_hand_counted_two_prompt_tally():
    t = tally_verdicts([_set(1, "Ansari", "Fanar"), _set(2, "ChatGPT", "Fanar")], MODELS)
    assert (t.total_best("Ansari"), t.total_best("ChatGPT"), t.total_best("Fanar")) == (4, 4, 0)
    assert t.total_worst("Fanar") == 8
    assert t.signed()["Fanar"]["IslamicAccuracy"] == (0, -2)
    t.check()


def test_duplicate_prompt_and_unknown_model():
    with pytest.raises(QualError):
        tally_verdicts([_set(1, "Ansari", "Fanar"), _set(1, "Ansari", "Fanar")])
    with pytest.raises(QualError):
        tally_verdicts([_set(1, "Gemini", "Fanar")], MODELS)


FIXTURE = load_verdicts(FIXTURES / "verdicts_50.jsonl")


def test_fixture_tally_invariants():
    t = tally_verdicts(FIXTURE, MODELS)
    t.check()
    assert t.prompts == 50
    assert sum(t.total_best(m) for m in MODELS) == sum(t.total_worst(m) for m in MODELS) == 200
    assert [t.worst["Fanar"][d] for d in VERDICT_DIMENSIONS] == [50, 46, 47, 50]


@settings(max_examples=25, deadline=None)
@given(st.permutations(FIXTURE))
def test_tally_ignores_order(perm):
    assert tally_verdicts(perm, MODELS).to_dict() == tally_verdicts(FIXTURE, MODELS).to_dict()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_tally_invariant_under_reblinding(seed):
    # re-blind each de-blinded verdict under a new seed, then parse it back
    resets = []
    for vs in FIXTURE:
        a = blind_assignment(vs.prompt_id, seed, MODELS)
        out = {d.value: {"best": a.mapping[v.best], "worst": a.mapping[v.worst], "best_excerpt": "", "worst_excerpt": ""}
               for d, v in vs.verdicts.items()}
        resets.append(parse_verdicts(out, a))
    assert tally_verdicts(resets, MODELS).to_dict() == tally_verdicts(FIXTURE, MODELS).to_dict()


def test_verdict_set_round_trip():
    for vs in FIXTURE[:5]:
        assert VerdictSet.from_dict(vs.to_dict()) == vs
