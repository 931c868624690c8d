"""Quantitative agent: segment, verify, score six criteria, derive composites."""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction

from .config import ScoringConfig, Thresholds
from .corpus import CorpusIndex
from .errors import QuantError
from .judge import QUANT_RUBRIC, Judge, rubric_version
from .refparse import SourceType
from .retrieval import EvidenceRetriever
from .verify import (AccuracyVerificationLog, EssayContext, VerificationFlag, compile_log,
                     verify_essay)

logger = logging.getLogger(__name__)

JUDGED = ("structure", "theme", "clarity", "originality", "islamic_accuracy")
CRITERIA = JUDGED + ("citation",)
STYLE = ("structure", "theme", "clarity", "originality")
ISLAMIC = ("islamic_accuracy", "citation")


@dataclass(frozen=True)
class EssaySegments:
    introduction: str
    body: str
    conclusion: str
    method: str = "heuristic"


@dataclass(frozen=True)
class CriterionScores:
    structure: float
    theme: float
    clarity: float
    originality: float
    islamic_accuracy: float
    citation: float

    def __post_init__(self):
        for name in CRITERIA:
            v = getattr(self, name)
            if not 1 <= v <= 5:
                raise QuantError(f"{name} score {v} outside [1, 5]")

    @property
    def style_content(self) -> float:
        return float(sum(Fraction(getattr(self, c)) for c in STYLE) / len(STYLE))

    @property
    def islamic_content(self) -> float:
        return float(sum(Fraction(getattr(self, c)) for c in ISLAMIC) / len(ISLAMIC))

    @property
    def overall(self) -> Fraction:
        return sum(Fraction(getattr(self, c)) for c in CRITERIA) / len(CRITERIA)


def _num(v: float):
    return int(v) if float(v).is_integer() else v


@dataclass(frozen=True)
class QuantResult:
    prompt_id: int
    model: str
    category: str
    scores: CriterionScores
    log: AccuracyVerificationLog
    transcript_id: str | None
    rubric_version: str
    segmentation: str = "heuristic"
    warnings: tuple[str, ...] = ()
    islamic_accuracy_capped: bool = False

    @property
    def composites(self) -> tuple[float, float]:
        return self.scores.style_content, self.scores.islamic_content

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "model": self.model,
            "category": self.category,
            "scores": {c: _num(getattr(self.scores, c)) for c in CRITERIA},
            "composites": {"style_content": self.scores.style_content, "islamic_content": self.scores.islamic_content},
            "rubric_version": self.rubric_version,
            "segmentation": self.segmentation,
            "judge_transcript": self.transcript_id,
            "warnings": list(self.warnings),
            "islamic_accuracy_capped": self.islamic_accuracy_capped,
            # the cap is an extension beyond citation deductions, so say so in every result
            "extensions": ["islamic_accuracy_refuted_cap"],
            "verification_log": self.log.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantResult":
        return cls(d["prompt_id"], d["model"], d.get("category", ""), CriterionScores(**d["scores"]),
                   AccuracyVerificationLog.from_dict(d["verification_log"]), d.get("judge_transcript"),
                   d["rubric_version"], d.get("segmentation", "heuristic"), tuple(d.get("warnings", ())),
                   d.get("islamic_accuracy_capped", False))


# ---------------------------------------------------------------- segmentation

_PARA = re.compile(r"\n[ \t]*\n\s*")
_HEADING = re.compile(r"^(?:#{1,6}[ \t]+(?P<md>[^\n]+)|\*\*(?P<bold>[^*\n]{1,80})\*\*[ \t]*:?|(?P<plain>[A-Z][^\n.!?]{0,60}):)[ \t]*$", re.M)
_INTRO = re.compile(r"^\W*(?:an?\s+)?introduction\b|^\W*intro\b|^\W*overview\s*$", re.I)
_CONCL = re.compile(r"^\W*(?:in\s+)?conclu(?:sion|ding)|^\W*(?:final|closing|concluding)\s+(?:thoughts|reflections?|words|remarks)"
                    r"|^\W*summary\b|^\W*wrapping up", re.I)


def _paragraph_starts(essay: str) -> list[int]:
    starts = [len(essay) - len(essay.lstrip())]
    starts += [m.end() for m in _PARA.finditer(essay) if m.end() < len(essay)]
    return starts


def _split(essay: str, b1: int, b2: int, method: str) -> EssaySegments:
    return EssaySegments(essay[:b1].strip(), essay[b1:b2].strip(), essay[b2:].strip(), method)


def segment_essay(essay: str, judge: Judge | None = None) -> EssaySegments:
    """Split into introduction/body/conclusion; the three parts are contiguous slices."""
    if not essay or not essay.strip():
        raise QuantError("cannot segment an empty essay")
    heads = [(m.start(), (m.group("md") or m.group("bold") or m.group("plain")).strip()) for m in _HEADING.finditer(essay)]
    intro_h = next((i for i, (_, t) in enumerate(heads) if _INTRO.search(t)), None)
    concl_h = next((i for i, (_, t) in enumerate(heads) if _CONCL.search(t)), None)
    if intro_h is not None or concl_h is not None:
        if intro_h is not None:
            b1 = heads[intro_h + 1][0] if intro_h + 1 < len(heads) else len(essay)
        else:
            # text before the first section heading (a leading title heading does not count)
            first = 1 if heads and heads[0][0] == _paragraph_starts(essay)[0] and len(heads) > 1 else 0
            b1 = heads[first][0]
        b2 = heads[concl_h][0] if concl_h is not None else len(essay)
        if b2 < b1:
            b2 = b1
        return _split(essay, b1, b2, "headings")

    starts = _paragraph_starts(essay)
    n = len(starts)
    if n == 1:
        return EssaySegments("", essay.strip(), "", "single-paragraph")
    if n == 2:
        return _split(essay, starts[1], len(essay), "paragraphs")
    intro_n, concl_n = 1, 1
    method = "paragraphs"
    if n >= 4 and judge is not None:
        paras = [essay[s:e].strip() for s, e in zip(starts, starts[1:] + [len(essay)])]
        out = judge.segment(paras)
        intro_n = max(0, int(out["introduction_paragraphs"]))
        concl_n = max(0, int(out["conclusion_paragraphs"]))
        # leave at least one body paragraph
        while intro_n + concl_n > n - 1:
            if concl_n >= intro_n and concl_n > 0:
                concl_n -= 1
            else:
                intro_n -= 1
        method = "judge"
    b1 = starts[intro_n] if intro_n < n else len(essay)
    b2 = starts[n - concl_n] if concl_n > 0 else len(essay)
    return _split(essay, b1, b2, method)


# ---------------------------------------------------------------- scoring

def _to_granularity(value: Fraction, step: float, mode: str = "floor") -> float:
    step = Fraction(step).limit_denominator(4)
    units = value / step
    k = math.floor(units) if mode == "floor" else math.floor(units + Fraction(1, 2))
    return float(k * step)


def citation_score(log: AccuracyVerificationLog, config: ScoringConfig = ScoringConfig()) -> float:
    """5 minus per-record deductions; capped when nothing was cited; clamped to [1, 5].

    Off-grid results (a half-point deduction on the integer scale) round down, so a
    deduction is never rounded away.
    """
    F = VerificationFlag
    ded = {F.REFUTED: config.refuted_deduction, F.UNVERIFIED: config.unverified_deduction,
           F.PARTIALLY_CONFIRMED: config.partial_deduction, F.CONFIRMED: 0}
    score = Fraction(5) - sum((Fraction(ded[r.flag]).limit_denominator(100) for r in log.records), Fraction(0))
    if not log.records:
        score = min(score, Fraction(config.no_reference_cap).limit_denominator(100))
    score = min(Fraction(5), max(Fraction(1), score))
    return _to_granularity(score, config.granularity, "floor")


def _log_digest(log: AccuracyVerificationLog) -> str:
    if not log.records:
        return "No references were detected in this essay."
    lines = [f"{log.summary}"]
    for r in log.records:
        lines.append(f"[{r.flag.value}] {r.source_type.value}: {r.content_snippet} -> {r.source_reference}. {r.comment}")
    return "\n".join(lines)


def build_score_request(segments: EssaySegments, log: AccuracyVerificationLog, config: ScoringConfig) -> str:
    scale = "half points allowed" if config.granularity == 0.5 else "whole numbers only"
    return (f"Scale: 1-5, {scale}.\n\n"
            f"<introduction>\n{segments.introduction}\n</introduction>\n"
            f"<body>\n{segments.body}\n</body>\n"
            f"<conclusion>\n{segments.conclusion}\n</conclusion>\n\n"
            f"Verification log:\n{_log_digest(log)}\n")


def has_refuted_scripture(log: AccuracyVerificationLog) -> bool:
    return any(r.flag is VerificationFlag.REFUTED and r.source_type in (SourceType.QURAN, SourceType.HADITH)
               for r in log.records)


def score_essay(
    essay: str,
    segments: EssaySegments,
    log: AccuracyVerificationLog,
    judge: Judge,
    config: ScoringConfig = ScoringConfig(),
    prompt_id: int | None = None,
    model: str = "",
    category: str = "",
) -> QuantResult:
    result = judge.score(build_score_request(segments, log, config))
    raw = result.output
    warnings = []
    values = {}
    for c in JUDGED:
        v = Fraction(raw[c]).limit_denominator(1000)
        if not 1 <= v <= 5:
            warnings.append(f"judge returned {c}={raw[c]} outside [1,5]; clamped")
            logger.warning(warnings[-1])
            v = min(Fraction(5), max(Fraction(1), v))
        values[c] = _to_granularity(v, config.granularity, "nearest")
    capped = False
    if has_refuted_scripture(log) and values["islamic_accuracy"] > config.refuted_accuracy_cap:
        values["islamic_accuracy"] = float(config.refuted_accuracy_cap)
        capped = True
    values["citation"] = citation_score(log, config)
    scores = CriterionScores(**values)
    pid = log.prompt_id if prompt_id is None else prompt_id
    return QuantResult(pid if pid is not None else 0, model, category, scores, log, result.transcript_id,
                       rubric_version(QUANT_RUBRIC),
                       segments.method, tuple(warnings), capped)


def evaluate_essay(
    essay: str,
    corpus: CorpusIndex,
    judge: Judge,
    retriever: EvidenceRetriever | None = None,
    thresholds: Thresholds = Thresholds(),
    config: ScoringConfig = ScoringConfig(),
    prompt_id: int = 0,
    model: str = "",
    category: str = "",
) -> QuantResult:
    """Full quantitative pass over one archived essay."""
    records = verify_essay(essay, corpus, retriever, judge, thresholds, EssayContext(prompt_id, category))
    vlog = compile_log(records, prompt_id)
    segments = segment_essay(essay, judge)
    return score_essay(essay, segments, vlog, judge, config, prompt_id, model, category)
