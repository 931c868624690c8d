"""Aggregation of scores and verdicts into tables, chart data and digests."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import CATEGORIES, PromptRecord
from .errors import ReportError
from .qual import VERDICT_DIMENSIONS, Tally
from .quant import CRITERIA, ISLAMIC, STYLE, CriterionScores
from .verify import VerificationRecord, render_log

CRITERION_LABELS = {"structure": "Structure", "theme": "Theme", "clarity": "Clarity", "originality": "Originality",
                    "islamic_accuracy": "Islamic Accuracy", "citation": "Citation"}


def round_half_up(value: Fraction | float, places: int = 2) -> str:
    """Exact half-up rounding (ties away from zero) of a rational; floats are taken at their exact binary value."""
    q = Fraction(value) * 10 ** places
    n = math.floor(abs(q) + Fraction(1, 2))
    sign = "-" if q < 0 and n else ""
    whole, frac = divmod(n, 10 ** places)
    return f"{sign}{whole}.{frac:0{places}d}" if places else f"{sign}{whole}"


def render_std(value: float | None, places: int = 3) -> str:
    if value is None:
        return "n/a"
    return str(Decimal(repr(value)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def mean(values: Sequence[Fraction]) -> Fraction:
    return sum(values, Fraction(0)) / len(values)


def std(values: Sequence[Fraction], estimator: str = "sample") -> float | None:
    n = len(values)
    ddof = 1 if estimator == "sample" else 0
    if n - ddof <= 0:
        return None
    m = mean(values)
    var = sum(((v - m) ** 2 for v in values), Fraction(0)) / (n - ddof)
    return math.sqrt(var)


def essay_overall(scores: CriterionScores) -> Fraction:
    return mean([Fraction(getattr(scores, c)) for c in CRITERIA])


@dataclass(frozen=True)
class Cell:
    mean: Fraction
    n: int

    @property
    def rendered(self) -> str:
        return round_half_up(self.mean)


@dataclass
class ModelSummary:
    model: str
    n: int
    criteria: dict[str, Cell]
    criteria_std: dict[str, float | None]
    overall: Cell
    overall_std: float | None
    style_content: Cell
    islamic_content: Cell


@dataclass
class QuantAggregate:
    models: tuple[str, ...]
    categories: tuple[str, ...]
    by_category: dict[tuple[str, str], dict[str, Cell]]
    by_model: dict[str, ModelSummary]
    expected: dict[tuple[str, str], int]
    std_estimator: str = "sample"
    gaps: list[str] = field(default_factory=list)


def aggregate_quant(results: Iterable, manifest: Sequence[PromptRecord], models: Sequence[str] | None = None,
                    std_estimator: str = "sample") -> QuantAggregate:
    """``results`` are objects with prompt_id, model and scores (QuantResult or fixture rows)."""
    prompts = {p.id: p for p in manifest}
    rows = list(results)
    seen = set()
    for r in rows:
        if r.prompt_id not in prompts:
            raise ReportError(f"result for unknown prompt_id {r.prompt_id}")
        key = (r.prompt_id, r.model)
        if key in seen:
            raise ReportError(f"duplicate result for prompt {r.prompt_id} / {r.model}")
        seen.add(key)
    order = tuple(models) if models else tuple(sorted({r.model for r in rows}))
    cats = tuple(c for c in CATEGORIES if any(p.category == c for p in manifest))

    groups: dict[tuple[str, str], list] = {}
    for r in sorted(rows, key=lambda r: (r.prompt_id, r.model)):
        groups.setdefault((prompts[r.prompt_id].category, r.model), []).append(r.scores)
    expected = {(c, m): sum(1 for p in manifest if p.category == c) for c in cats for m in order}

    by_cat = {}
    gaps = []
    for c in cats:
        for m in order:
            scores = groups.get((c, m), [])
            if len(scores) < expected[(c, m)]:
                gaps.append(f"{c} / {m}: {len(scores)} of {expected[(c, m)]} essays")
            if scores:
                by_cat[(c, m)] = {k: Cell(mean([Fraction(getattr(s, k)) for s in scores]), len(scores))
                                  for k in CRITERIA}

    by_model = {}
    for m in order:
        scores = [r.scores for r in sorted(rows, key=lambda r: r.prompt_id) if r.model == m]
        if not scores:
            continue
        crit = {k: [Fraction(getattr(s, k)) for s in scores] for k in CRITERIA}
        overall = [essay_overall(s) for s in scores]
        style = [mean([Fraction(getattr(s, k)) for k in STYLE]) for s in scores]
        isl = [mean([Fraction(getattr(s, k)) for k in ISLAMIC]) for s in scores]
        by_model[m] = ModelSummary(
            m, len(scores),
            {k: Cell(mean(v), len(v)) for k, v in crit.items()},
            {k: std(v, std_estimator) for k, v in crit.items()},
            Cell(mean(overall), len(overall)), std(overall, std_estimator),
            Cell(mean(style), len(style)), Cell(mean(isl), len(isl)),
        )
    return QuantAggregate(order, cats, by_cat, by_model, expected, std_estimator, gaps)


def render_verification_digest(records: Iterable[VerificationRecord]) -> str:
    return render_log(records)


# ---------------------------------------------------------------- emission

@dataclass(frozen=True)
class ReportMeta:
    config_hash: str
    rubric_versions: Mapping[str, str]

    def line(self) -> str:
        rub = ", ".join(f"{k}={v}" for k, v in sorted(self.rubric_versions.items()))
        return f"config_hash={self.config_hash}; rubric={rub}"

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "rubric_versions": dict(sorted(self.rubric_versions.items()))}


def aggregate_to_dict(agg: QuantAggregate) -> dict:
    return {
        "std_estimator": agg.std_estimator,
        "per_category": [
            {"category": c, "model": m, "n": cells["structure"].n,
             "means": {k: cells[k].rendered for k in CRITERIA},
             "exact": {k: f"{cells[k].mean.numerator}/{cells[k].mean.denominator}" for k in CRITERIA}}
            for (c, m), cells in sorted(agg.by_category.items(),
                                        key=lambda kv: (agg.categories.index(kv[0][0]), agg.models.index(kv[0][1])))
        ],
        "per_model": [
            {"model": s.model, "n": s.n,
             "overall_mean": s.overall.rendered, "overall_std": render_std(s.overall_std),
             "overall_exact": f"{s.overall.mean.numerator}/{s.overall.mean.denominator}",
             "criteria_mean": {k: s.criteria[k].rendered for k in CRITERIA},
             "criteria_std": {k: render_std(s.criteria_std[k]) for k in CRITERIA},
             "style_content": s.style_content.rendered, "islamic_content": s.islamic_content.rendered}
            for s in (agg.by_model[m] for m in agg.models if m in agg.by_model)
        ],
        "coverage_gaps": list(agg.gaps),
    }


def _csv(rows: list[list], meta: ReportMeta) -> str:
    buf = io.StringIO()
    buf.write(f"# {meta.line()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def category_table_rows(agg: QuantAggregate) -> list[list]:
    rows = [["category", "model", "n"] + [CRITERION_LABELS[k] for k in CRITERIA]]
    for c in agg.categories:
        for m in agg.models:
            cells = agg.by_category.get((c, m))
            if cells is None:
                rows.append([c, m, 0] + ["" for _ in CRITERIA])
            else:
                rows.append([c, m, cells["structure"].n] + [cells[k].rendered for k in CRITERIA])
    return rows


def model_table_rows(agg: QuantAggregate) -> list[list]:
    rows = [["model", "n", "overall_mean", "overall_std", "style_content", "islamic_content"]
            + [f"{CRITERION_LABELS[k]} mean" for k in CRITERIA] + [f"{CRITERION_LABELS[k]} std" for k in CRITERIA]]
    for m in agg.models:
        s = agg.by_model.get(m)
        if s is None:
            continue
        rows.append([m, s.n, s.overall.rendered, render_std(s.overall_std), s.style_content.rendered,
                     s.islamic_content.rendered] + [s.criteria[k].rendered for k in CRITERIA]
                    + [render_std(s.criteria_std[k]) for k in CRITERIA])
    return rows


def tally_rows(tally: Tally) -> list[list]:
    rows = [["model", "dimension", "best", "worst_signed"]]
    for m in tally.models:
        for d in VERDICT_DIMENSIONS:
            rows.append([m, d.value, tally.best[m][d], -tally.worst[m][d]])
    return rows


def _md_table(rows: list[list]) -> str:
    head, *body = rows
    out = ["| " + " | ".join(str(h) for h in head) + " |", "|" + "---|" * len(head)]
    out += ["| " + " | ".join(str(x) for x in r) + " |" for r in body]
    return "\n".join(out)


def render_markdown(agg: QuantAggregate | None, tally: Tally | None, meta: ReportMeta) -> str:
    parts = ["# Evaluation report", "", f"`{meta.line()}`", ""]
    if agg is not None:
        parts += ["## Scores by model", "",
                  f"Standard deviation: {agg.std_estimator} estimator, over per-essay overall scores.", "",
                  _md_table(model_table_rows(agg)), "",
                  "## Scores by category", "", _md_table(category_table_rows(agg)), ""]
        if agg.gaps:
            parts += ["Coverage gaps:", ""] + [f"- {g}" for g in agg.gaps] + [""]
    if tally is not None:
        rows = [["model"] + [d.label for d in VERDICT_DIMENSIONS] + ["total best", "total worst"]]
        for m in tally.models:
            rows.append([m] + [f"+{tally.best[m][d]} / -{tally.worst[m][d]}" for d in VERDICT_DIMENSIONS]
                        + [tally.total_best(m), tally.total_worst(m)])
        parts += ["## Best/worst verdicts", "", f"{tally.prompts} prompts.", "", _md_table(rows), ""]
    return "\n".join(parts).rstrip() + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def emit(out_dir: str | Path, meta: ReportMeta, agg: QuantAggregate | None = None, tally: Tally | None = None,
         records: Sequence[VerificationRecord] | None = None,
         formats: Sequence[str] = ("structured", "delimited", "document")) -> list[Path]:
    """Write report files. Output depends only on the inputs, so reruns are byte-identical."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {out}: {exc}") from None
    written: list[Path] = []
    try:
        if "structured" in formats:
            doc = {"meta": meta.to_dict()}
            if agg is not None:
                doc["quantitative"] = aggregate_to_dict(agg)
            if tally is not None:
                tally.check()
                doc["qualitative"] = tally.to_dict()
            written.append(_write(out / "report.json", json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n"))
        if "delimited" in formats:
            if agg is not None:
                written.append(_write(out / "scores_by_category.csv", _csv(category_table_rows(agg), meta)))
                written.append(_write(out / "scores_by_model.csv", _csv(model_table_rows(agg), meta)))
            if tally is not None:
                written.append(_write(out / "verdict_chart.csv", _csv(tally_rows(tally), meta)))
        if "document" in formats:
            written.append(_write(out / "report.md", render_markdown(agg, tally, meta)))
            if records is not None:
                written.append(_write(out / "verification_digest.txt",
                                      f"# {meta.line()}\n" + render_verification_digest(records)))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from None
    return written
