"""Qualitative agent: blinded three-way comparison, best/worst verdicts, tallies."""
from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import QualError, VerdictValidationError
from .judge import QUAL_RUBRIC, Judge, rubric_version

logger = logging.getLogger(__name__)

TAGS = ("R1", "R2", "R3")


class QualDimension(str, Enum):
    CLARITY_STRUCTURE = "ClarityStructure"
    ISLAMIC_ACCURACY = "IslamicAccuracy"
    TONE_APPROPRIATENESS = "ToneAppropriateness"
    DEPTH_ORIGINALITY = "DepthOriginality"
    COMPARATIVE_REFLECTION = "ComparativeReflection"

    def __str__(self) -> str:
        return self.value

    @property
    def label(self) -> str:
        return {"ClarityStructure": "Clarity & Structure", "IslamicAccuracy": "Islamic Accuracy",
                "ToneAppropriateness": "Tone & Appropriateness", "DepthOriginality": "Depth & Originality",
                "ComparativeReflection": "Comparative Reflection"}[self.value]


VERDICT_DIMENSIONS = tuple(d for d in QualDimension if d is not QualDimension.COMPARATIVE_REFLECTION)


@dataclass(frozen=True)
class BlindAssignment:
    prompt_id: int
    seed: int
    mapping: Mapping[str, str]  # model -> tag

    def __post_init__(self):
        if sorted(self.mapping.values()) != list(TAGS) or len(self.mapping) != 3:
            raise QualError(f"assignment must map three models onto {TAGS}: {dict(self.mapping)}")

    @property
    def by_tag(self) -> dict[str, str]:
        return {t: m for m, t in self.mapping.items()}

    def to_dict(self) -> dict:
        return {"prompt_id": self.prompt_id, "seed": self.seed, "mapping": dict(sorted(self.mapping.items()))}


def blind_assignment(prompt_id: int, seed: int, models: Sequence[str]) -> BlindAssignment:
    """Uniform random bijection models -> tags, reproducible from (prompt_id, seed)."""
    if len(models) != 3 or len(set(models)) != 3:
        raise QualError(f"need three distinct models, got {list(models)}")
    tags = list(TAGS)
    random.Random(f"blind:{seed}:{prompt_id}").shuffle(tags)
    return BlindAssignment(prompt_id, seed, dict(zip(sorted(models), tags)))


def identity_assignment(prompt_id: int, models: Sequence[str]) -> BlindAssignment:
    return BlindAssignment(prompt_id, -1, dict(zip(models, TAGS)))


# ---------------------------------------------------------------- prompt

def escape_response(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;")


def unescape_response(text: str) -> str:
    return text.replace("&lt;", "<").replace("&amp;", "&")


def build_comparison_prompt(responses: Sequence[tuple[str, str]], assignment: BlindAssignment, title: str | None = None) -> str:
    """The judge's user message: the three responses under their tags, in R1..R3 order."""
    if len(responses) != 3:
        raise QualError(f"comparison needs exactly three responses, got {len(responses)}")
    texts = dict(responses)
    if set(texts) != set(assignment.mapping):
        raise QualError(f"responses {sorted(texts)} do not match assignment {sorted(assignment.mapping)}")
    parts = []
    if title:
        parts.append(f"Prompt topic: {title.strip()}\n")
    for tag in TAGS:
        model = assignment.by_tag[tag]
        parts.append(f"<{tag}>\n{escape_response(texts[model])}\n</{tag}>")
    return "\n".join(parts) + "\n"


_BLOCK = re.compile(r"^<(R[123])>\n(.*?)\n</\1>$", re.S | re.M)


def parse_comparison_prompt(prompt: str) -> dict[str, str]:
    """Recover each tagged response exactly; the inverse of the embedding above."""
    return {m.group(1): unescape_response(m.group(2)) for m in _BLOCK.finditer(prompt)}


# ---------------------------------------------------------------- verdicts

@dataclass(frozen=True)
class Verdict:
    best: str
    worst: str
    best_excerpt: str = ""
    worst_excerpt: str = ""


@dataclass(frozen=True)
class VerdictSet:
    prompt_id: int
    verdicts: Mapping[QualDimension, Verdict]
    reflection: str = ""
    assignment: BlindAssignment | None = None
    transcript_id: str | None = None
    warnings: tuple[str, ...] = ()
    review_status: str = "not_reviewed"
    rubric_version: str = ""

    def __post_init__(self):
        if set(self.verdicts) != set(VERDICT_DIMENSIONS):
            raise VerdictValidationError(f"prompt {self.prompt_id}: verdict dimensions must be exactly "
                                         f"{[d.value for d in VERDICT_DIMENSIONS]}")
        for d, v in self.verdicts.items():
            if v.best == v.worst:
                raise VerdictValidationError(f"prompt {self.prompt_id}: {d.value} best and worst are both {v.best}")

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "verdicts": {d.value: {"best": v.best, "worst": v.worst, "best_excerpt": v.best_excerpt,
                                   "worst_excerpt": v.worst_excerpt}
                         for d, v in sorted(self.verdicts.items(), key=lambda kv: VERDICT_DIMENSIONS.index(kv[0]))},
            "reflection": self.reflection,
            "assignment": self.assignment.to_dict() if self.assignment else None,
            "judge_transcript": self.transcript_id,
            "warnings": list(self.warnings),
            "review_status": self.review_status,
            "rubric_version": self.rubric_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerdictSet":
        a = d.get("assignment")
        return cls(
            prompt_id=d["prompt_id"],
            verdicts={QualDimension(k): Verdict(v["best"], v["worst"], v.get("best_excerpt", ""), v.get("worst_excerpt", ""))
                      for k, v in d["verdicts"].items()},
            reflection=d.get("reflection", ""),
            assignment=BlindAssignment(a["prompt_id"], a["seed"], a["mapping"]) if a else None,
            transcript_id=d.get("judge_transcript"),
            warnings=tuple(d.get("warnings", ())),
            review_status=d.get("review_status", "not_reviewed"),
            rubric_version=d.get("rubric_version", ""),
        )


def _norm(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().casefold()


def parse_verdicts(output: Mapping, assignment: BlindAssignment, responses: Mapping[str, str] | None = None,
                   transcript_id: str | None = None) -> VerdictSet:
    """De-blind a judge answer and validate it. Excerpts that cannot be found only warn."""
    by_tag = assignment.by_tag
    verdicts = {}
    warnings = []
    for dim in VERDICT_DIMENSIONS:
        raw = output.get(dim.value)
        if not isinstance(raw, Mapping):
            raise VerdictValidationError(f"prompt {assignment.prompt_id}: missing dimension {dim.value}")
        best, worst = raw.get("best"), raw.get("worst")
        if best not in by_tag or worst not in by_tag:
            raise VerdictValidationError(f"prompt {assignment.prompt_id}: {dim.value} names unknown tags {best!r}/{worst!r}")
        if best == worst:
            raise VerdictValidationError(f"prompt {assignment.prompt_id}: {dim.value} best and worst are both {best}")
        v = Verdict(by_tag[best], by_tag[worst], raw.get("best_excerpt", ""), raw.get("worst_excerpt", ""))
        if responses is not None:
            for which, model, excerpt in (("best", v.best, v.best_excerpt), ("worst", v.worst, v.worst_excerpt)):
                if excerpt and _norm(excerpt) not in _norm(responses.get(model, "")):
                    warnings.append(f"{dim.value} {which} excerpt not found in {model} response")
        verdicts[dim] = v
    for w in warnings:
        logger.warning("prompt %s: %s", assignment.prompt_id, w)
    refl = output.get(QualDimension.COMPARATIVE_REFLECTION.value) or {}
    return VerdictSet(assignment.prompt_id, verdicts, refl.get("narrative", "") if isinstance(refl, Mapping) else str(refl),
                      assignment, transcript_id, tuple(warnings), rubric_version=rubric_version(QUAL_RUBRIC))


def compare_responses(prompt_id: int, responses: Sequence[tuple[str, str]], judge: Judge, seed: int,
                      title: str | None = None) -> VerdictSet:
    assignment = blind_assignment(prompt_id, seed, [m for m, _ in responses])
    result = judge.compare(build_comparison_prompt(responses, assignment, title))
    return parse_verdicts(result.output, assignment, dict(responses), result.transcript_id)


# ---------------------------------------------------------------- tallies

@dataclass(frozen=True)
class Tally:
    models: tuple[str, ...]
    prompts: int
    best: Mapping[str, Mapping[QualDimension, int]]
    worst: Mapping[str, Mapping[QualDimension, int]]

    def total_best(self, model: str) -> int:
        return sum(self.best[model].values())

    def total_worst(self, model: str) -> int:
        return sum(self.worst[model].values())

    def signed(self) -> dict[str, dict[str, tuple[int, int]]]:
        """Chart data: per model and dimension, (+best, -worst)."""
        return {m: {d.value: (self.best[m][d], -self.worst[m][d]) for d in VERDICT_DIMENSIONS} for m in self.models}

    def check(self) -> None:
        for d in VERDICT_DIMENSIONS:
            for side, table in (("best", self.best), ("worst", self.worst)):
                n = sum(table[m][d] for m in self.models)
                if n != self.prompts:
                    raise QualError(f"{d.value} {side} counts sum to {n}, expected {self.prompts}")

    def to_dict(self) -> dict:
        return {
            "prompts": self.prompts,
            "models": {m: {"best": {d.value: self.best[m][d] for d in VERDICT_DIMENSIONS},
                           "worst": {d.value: self.worst[m][d] for d in VERDICT_DIMENSIONS},
                           "total_best": self.total_best(m), "total_worst": self.total_worst(m)}
                       for m in self.models},
            "signed": {m: {d: list(v) for d, v in dims.items()} for m, dims in self.signed().items()},
        }


def tally_verdicts(sets: Iterable[VerdictSet], models: Sequence[str] | None = None) -> Tally:
    sets = list(sets)
    seen = set()
    for s in sets:
        if s.prompt_id in seen:
            raise QualError(f"duplicate verdict set for prompt {s.prompt_id}")
        seen.add(s.prompt_id)
    names = set(models or ())
    for s in sets:
        for v in s.verdicts.values():
            names.update((v.best, v.worst))
    order = tuple(models) if models else tuple(sorted(names))
    stray = names - set(order)
    if stray:
        raise QualError(f"verdicts name models outside {list(order)}: {sorted(stray)}")
    best = {m: {d: 0 for d in VERDICT_DIMENSIONS} for m in order}
    worst = {m: {d: 0 for d in VERDICT_DIMENSIONS} for m in order}
    for s in sets:
        for d, v in s.verdicts.items():
            best[v.best][d] += 1
            worst[v.worst][d] += 1
    return Tally(order, len(sets), best, worst)


def load_verdicts(path: str | Path) -> list[VerdictSet]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(VerdictSet.from_dict(json.loads(line)))
        except (ValueError, KeyError) as exc:
            raise QualError(f"{path}:{n}: {exc}") from None
    return out


def save_verdicts(sets: Iterable[VerdictSet], path: str | Path) -> None:
    lines = [json.dumps(s.to_dict(), ensure_ascii=False, sort_keys=True) for s in sorted(sets, key=lambda s: s.prompt_id)]
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
