"""Citation verification: candidate -> VerificationRecord -> accuracy verification log.

Flag assignment is a pure function of the ``Checks`` sub-record and the thresholds
(``assign_flag``); everything else in this module is gathering evidence for it.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Protocol, Sequence

from .config import Thresholds
from .corpus import AyahRef, CorpusIndex, HadithRef, lookup_ayah, search_quote
from .errors import CorpusError, EmptyQuoteError, MixedPromptIds, VerificationError
from .refparse import CitationCandidate, SourceType, extract_citations
from .retrieval import Document, EvidenceRetriever, OfflineRetriever, RetrieverError
from .similarity import similarity, tokenize


class VerificationFlag(str, Enum):
    CONFIRMED = "Confirmed"
    PARTIALLY_CONFIRMED = "PartiallyConfirmed"
    UNVERIFIED = "Unverified"
    REFUTED = "Refuted"

    def __str__(self) -> str:
        return self.value

    @property
    def heading(self) -> str:
        return {"Confirmed": "CONFIRMED", "PartiallyConfirmed": "PARTIALLY CONFIRMED",
                "Unverified": "UNVERIFIED", "Refuted": "REFUTED"}[self.value]


# log presentation order
FLAG_ORDER = (VerificationFlag.REFUTED, VerificationFlag.UNVERIFIED,
              VerificationFlag.PARTIALLY_CONFIRMED, VerificationFlag.CONFIRMED)

RELATIONS = ("supports", "partially_supports", "unrelated", "contradicts")
_SUPPORTIVE = ("supports", "partially_supports")

_RELATION_PHRASE = {
    "supports": "The source supports the claim.",
    "partially_supports": "The source only partly supports the claim.",
    "unrelated": "The source is unrelated to the claim.",
    "contradicts": "The source contradicts the claim.",
}


def _verdict_text(verdict: "SemanticVerdict") -> str:
    rationale = verdict.rationale.strip()
    if rationale and rationale[-1] not in ".!?":
        rationale += "."
    return _join(_RELATION_PHRASE[verdict.relation], rationale)


CONSISTENT, MISMATCH, NOT_APPLICABLE = "consistent", "mismatch", "not_applicable"


@dataclass(frozen=True)
class SemanticVerdict:
    relation: str
    rationale: str = ""

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise VerificationError(f"unknown semantic relation {self.relation!r}")


class EvidenceJudge(Protocol):
    """What verification needs from the judge. ``faithcheck.judge.Judge`` implements it."""

    def semantic_relation(self, claim: str, evidence: str, reference: str) -> SemanticVerdict: ...

    def detect_references(self, essay: str, known: Sequence[str]) -> list[dict]: ...


@dataclass(frozen=True)
class UrlConsistency:
    status: str
    textual_ref: AyahRef | HadithRef | None = None
    url_ref: AyahRef | HadithRef | None = None


@dataclass(frozen=True)
class Checks:
    """Evidence gathered for one record; the flag is derived from this alone."""

    located: str = "none"  # address | search | none
    quote_similarity: float | None = None
    cross_match: tuple[AyahRef, float] | None = None
    url_consistency: str = NOT_APPLICABLE
    semantic_relation: str | None = None
    unused_link: bool = False
    role: str = "cited"  # cited | url_referent
    span: tuple[int, int] = (0, 0)
    provenance: str = "parser"
    notes: tuple[str, ...] = ()

    @property
    def url_consistent(self) -> bool | None:
        if self.url_consistency == NOT_APPLICABLE:
            return None
        return self.url_consistency == CONSISTENT

    def to_dict(self) -> dict:
        return {
            "located": self.located,
            "quote_similarity": None if self.quote_similarity is None else round(self.quote_similarity, 6),
            "cross_match": None if self.cross_match is None
            else {"ref": str(self.cross_match[0]), "similarity": round(self.cross_match[1], 6)},
            "url_consistent": self.url_consistent,
            "url_consistency": self.url_consistency,
            "semantic_relation": self.semantic_relation,
            "unused_link": self.unused_link,
            "role": self.role,
            "span": list(self.span),
            "provenance": self.provenance,
            "notes": list(self.notes),
        }


def assign_flag(checks: Checks, thresholds: Thresholds = Thresholds()) -> VerificationFlag:
    """Map checks to a flag. Rules are applied in order; the first that fires wins."""
    F = VerificationFlag
    # a confident match on another ayah means the citation is misnumbered
    if checks.cross_match is not None and checks.cross_match[1] >= thresholds.confirm:
        return F.REFUTED
    if checks.unused_link or checks.located == "none":
        return F.UNVERIFIED
    rel = checks.semantic_relation
    if rel in ("unrelated", "contradicts"):
        return F.REFUTED
    sim = checks.quote_similarity
    if sim is not None:
        if sim >= thresholds.confirm:
            flag = F.CONFIRMED
        elif sim >= thresholds.partial:
            flag = F.PARTIALLY_CONFIRMED
        elif rel in _SUPPORTIVE:
            flag = F.PARTIALLY_CONFIRMED  # paraphrase-level support
        elif checks.located == "address":
            flag = F.REFUTED  # the cited source does not say this
        else:
            flag = F.UNVERIFIED
    elif rel == "supports":
        flag = F.CONFIRMED
    elif rel == "partially_supports":
        flag = F.PARTIALLY_CONFIRMED
    else:
        flag = F.UNVERIFIED
    if flag is F.CONFIRMED and (rel == "partially_supports" or checks.url_consistency == MISMATCH):
        flag = F.PARTIALLY_CONFIRMED
    return flag


@dataclass(frozen=True)
class VerificationRecord:
    prompt_id: int
    category: str
    content_snippet: str
    source_type: SourceType
    source_reference: str
    source_text: str
    source_url: str
    comment: str
    flag: VerificationFlag
    checks: Checks = field(default_factory=Checks)

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "category": self.category,
            "content_snippet": self.content_snippet,
            "source_type": self.source_type.value,
            "source_reference": self.source_reference,
            "source_text": self.source_text,
            "source_url": self.source_url,
            "verification_comment": self.comment,
            "flag": self.flag.value,
            "checks": self.checks.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationRecord":
        c = d["checks"]
        cm = c.get("cross_match")
        checks = Checks(
            located=c["located"],
            quote_similarity=c.get("quote_similarity"),
            cross_match=(AyahRef.parse(cm["ref"]), cm["similarity"]) if cm else None,
            url_consistency=c.get("url_consistency", NOT_APPLICABLE),
            semantic_relation=c.get("semantic_relation"),
            unused_link=c.get("unused_link", False),
            role=c.get("role", "cited"),
            span=tuple(c.get("span", (0, 0))),
            provenance=c.get("provenance", "parser"),
            notes=tuple(c.get("notes", ())),
        )
        return cls(d["prompt_id"], d["category"], d["content_snippet"], SourceType(d["source_type"]),
                   d["source_reference"], d["source_text"], d["source_url"], d["verification_comment"],
                   VerificationFlag(d["flag"]), checks)


@dataclass(frozen=True)
class EssayContext:
    prompt_id: int = 0
    category: str = ""


# ---------------------------------------------------------------- helpers

def _claim(c: CitationCandidate) -> str:
    return c.context or c.snippet


def _ask(judge: EvidenceJudge | None, claim: str, evidence: str, reference: str) -> SemanticVerdict | None:
    if judge is None or not evidence:
        return None
    return judge.semantic_relation(claim, evidence, reference)


def _surah_label(corpus: CorpusIndex, ref: AyahRef) -> str:
    meta = corpus.surah(ref.surah)
    return f"Surah {meta.transliterated_name} ({ref})"


def _excerpt(text: str, limit: int = 240) -> str:
    text = re.sub(r"\s+", " ", text).strip()
    return text if len(text) <= limit else text[: limit - 1].rstrip() + "…"


def _quran_text(corpus: CorpusIndex, ref: AyahRef, range_end: int | None) -> dict[str, str]:
    """Translations of ref (through range_end if given), keyed by translator."""
    last = range_end if range_end and range_end > ref.ayah else ref.ayah
    last = min(last, corpus.surah(ref.surah).ayah_count)
    out: dict[str, list[str]] = {}
    for a in range(ref.ayah, last + 1):
        for tid, text in lookup_ayah(corpus, AyahRef(ref.surah, a)).translations.items():
            out.setdefault(tid, []).append(text)
    return {k: " ".join(v) for k, v in out.items()}


def _finish(ctx: EssayContext, cand: CitationCandidate, checks: Checks, thresholds: Thresholds, *,
            source_reference: str, source_text: str, source_url: str, comment: str) -> VerificationRecord:
    return VerificationRecord(
        prompt_id=ctx.prompt_id,
        category=ctx.category,
        content_snippet=cand.snippet,
        source_type=cand.source_type,
        source_reference=source_reference,
        source_text=source_text,
        source_url=source_url,
        comment=comment,
        flag=assign_flag(checks, thresholds),
        checks=checks,
    )


def _join(*parts: str | None) -> str:
    return " ".join(p.strip() for p in parts if p and p.strip())


# ---------------------------------------------------------------- url consistency

def check_url_consistency(candidate: CitationCandidate) -> UrlConsistency:
    textual = candidate.quran_ref or candidate.hadith_ref
    if textual is None or candidate.url_ref is None:
        return UrlConsistency(NOT_APPLICABLE, textual, candidate.url_ref)
    if type(textual) is not type(candidate.url_ref):
        return UrlConsistency(MISMATCH, textual, candidate.url_ref)
    if isinstance(textual, AyahRef) and candidate.range_end and textual.surah == candidate.url_ref.surah \
            and textual.ayah <= candidate.url_ref.ayah <= candidate.range_end:
        return UrlConsistency(CONSISTENT, textual, candidate.url_ref)
    status = CONSISTENT if textual == candidate.url_ref else MISMATCH
    return UrlConsistency(status, textual, candidate.url_ref)


# ---------------------------------------------------------------- quran

def verify_quran_citation(
    candidate: CitationCandidate,
    corpus: CorpusIndex,
    judge: EvidenceJudge | None = None,
    thresholds: Thresholds = Thresholds(),
    ctx: EssayContext = EssayContext(),
    *,
    ref: AyahRef | None = None,
    role: str = "cited",
) -> VerificationRecord:
    """Verify one Qur'anic citation against the corpus.

    ``ref`` overrides the address to check (used for the URL referent of a mismatch).
    """
    if corpus is None:
        raise VerificationError("a corpus is required for Qur'an verification")
    if ref is None:
        ref = candidate.quran_ref or (candidate.url_ref if isinstance(candidate.url_ref, AyahRef) else None)
    if ref is None:
        raise VerificationError("candidate carries no Qur'an reference")
    consistency = check_url_consistency(candidate).status
    notes = list(candidate.notes)
    base = Checks(span=candidate.span, provenance=candidate.provenance, role=role, url_consistency=consistency)
    range_end = candidate.range_end if role == "cited" else None

    try:
        texts = _quran_text(corpus, ref, range_end)
    except CorpusError as exc:
        texts = {}
        notes.append(str(exc))
    located = "address" if texts else "none"
    quote = candidate.quoted_text if role == "cited" else None

    sim = None
    if quote and texts:
        sim = max(similarity(quote, t) for t in texts.values())
    cross = None
    if quote and (sim is None or sim < thresholds.confirm):
        try:
            hits = search_quote(corpus, quote, limit=5)
        except EmptyQuoteError:
            hits = []
        for h in hits:
            if h.ref != ref:
                cross = (h.ref, h.similarity)
                break
    checks = replace(base, located=located, quote_similarity=sim, cross_match=cross, notes=tuple(notes))
    evidence = next(iter(texts.values()), "") if texts else ""
    url = f"API fetch Qur'an {ref}"

    if cross and cross[1] >= thresholds.confirm:
        hit = cross[0]
        hit_text = lookup_ayah(corpus, hit).text()
        comment = f"Quote text matches {hit}, not {ref}. Verse number is wrong."
        return _finish(ctx, candidate, checks, thresholds, source_reference=_surah_label(corpus, hit),
                       source_text=_excerpt(hit_text), source_url=f"API fetch Qur'an {hit}", comment=comment)
    if located == "none":
        comment = _join(f"Cited verse {ref} does not exist in the corpus.", notes[-1] if notes else None)
        if quote and cross:
            comment = _join(comment, f"Closest verse by quoted text is {cross[0]} (similarity {cross[1]:.2f}).")
        return _finish(ctx, candidate, checks, thresholds, source_reference=f"Invalid reference {ref}",
                       source_text="", source_url="", comment=comment)

    verdict = _ask(judge, _claim(candidate), evidence, f"Qur'an {ref}")
    if verdict:
        checks = replace(checks, semantic_relation=verdict.relation)
    record = _finish(ctx, candidate, checks, thresholds, source_reference=_surah_label(corpus, ref),
                     source_text=_excerpt(evidence), source_url=url, comment="")
    return replace(record, comment=_quran_comment(record, ref, verdict, thresholds))


def _quran_comment(rec: VerificationRecord, ref: AyahRef, verdict: SemanticVerdict | None, th: Thresholds) -> str:
    c = rec.checks
    parts: list[str] = []
    if c.role == "url_referent":
        parts.append(f"Linked URL resolves to {ref}, which differs from the cited verse; checked it as well.")
    elif c.url_consistency == MISMATCH:
        parts.append("The attached link points to a different verse than the one cited.")
    if c.quote_similarity is not None:
        s = c.quote_similarity
        if s >= th.confirm:
            parts.append(f"Quoted text matches {ref} (similarity {s:.2f}).")
        elif s >= th.partial:
            parts.append(f"Quoted text is a loose rendering of {ref} (similarity {s:.2f}).")
        else:
            parts.append(f"The text of {ref} does not contain the quoted wording (similarity {s:.2f}).")
            if c.cross_match:
                parts.append(f"Nearest verse by wording is {c.cross_match[0]} ({c.cross_match[1]:.2f}), also below the confirm threshold.")
    if verdict:
        parts.append(_verdict_text(verdict))
    elif c.quote_similarity is None:
        parts.append(f"Verse {ref} exists but no quote or judge was available to check the claim against it.")
    if rec.flag is VerificationFlag.REFUTED and c.quote_similarity is not None and c.quote_similarity < th.partial:
        parts.append("Misquotation.")
    return _join(*parts)


# ---------------------------------------------------------------- retrieval-backed sources

def _fetch(retriever: EvidenceRetriever, url: str, notes: list[str]) -> str:
    try:
        return retriever.extract(url)
    except RetrieverError as exc:
        notes.append(f"fetch failed: {exc}")
        return ""


def _search(retriever: EvidenceRetriever, query: str, notes: list[str]) -> list[Document]:
    try:
        return retriever.search(query)
    except RetrieverError as exc:
        notes.append(f"search failed: {exc}")
        return []


def _best_document(docs: list[Document], quote: str | None) -> Document | None:
    if not docs:
        return None
    if not quote:
        return docs[0]
    # pick the document the quote fits best; retriever order breaks ties
    scored = [(similarity(quote, d.snippet), -i, d) for i, d in enumerate(docs)]
    return max(scored, key=lambda x: (x[0], x[1]))[2]


def _offline_note(retriever: EvidenceRetriever) -> str | None:
    return "offline mode: no retrieval performed" if isinstance(retriever, OfflineRetriever) else None


def verify_hadith_citation(
    candidate: CitationCandidate,
    retriever: EvidenceRetriever,
    corpus: CorpusIndex | None = None,
    judge: EvidenceJudge | None = None,
    thresholds: Thresholds = Thresholds(),
    ctx: EssayContext = EssayContext(),
) -> VerificationRecord:
    notes = list(candidate.notes)
    href = candidate.hadith_ref or (candidate.url_ref if isinstance(candidate.url_ref, HadithRef) else None)
    coll = corpus.hadith_collection(href.collection) if (href and corpus) else None
    label = f"{coll.display_name} {href.number}" if coll else (str(href) if href else "")
    quote = candidate.quoted_text

    text, url, title, located = "", "", "", "none"
    if href is not None:
        url = candidate.url if candidate.url and candidate.url_ref == href else (
            f"{coll.url_stem}:{href.number}" if coll else "")
        text = _fetch(retriever, url, notes) if url else ""
        if not text:
            docs = _search(retriever, label, notes)
            doc = _best_document(docs, quote)
            if doc:
                text, url, title = doc.snippet, doc.url, doc.title
        if text:
            located, title = "address", title or label
    else:
        doc = _best_document(_search(retriever, quote or _claim(candidate), notes), quote)
        if doc:
            text, url, title, located = doc.snippet, doc.url, doc.title, "search"
    offline = _offline_note(retriever)
    if offline:
        notes.append(offline)

    sim = similarity(quote, text) if (quote and text) else None
    verdict = _ask(judge, _claim(candidate), text, title or label) if located != "none" else None
    checks = Checks(located=located, quote_similarity=sim, semantic_relation=verdict.relation if verdict else None,
                    span=candidate.span, provenance=candidate.provenance, notes=tuple(notes),
                    url_consistency=check_url_consistency(candidate).status)
    flag = assign_flag(checks, thresholds)

    if located == "none":
        ref_text = f"{label} (not retrievable)" if label else "No hadith located"
        comment = _join(
            "No matching narration was found by the available search." if not offline else None,
            "Statement remains unverified.", offline, *[n for n in notes if n.startswith(("fetch", "search"))])
        return _finish(ctx, candidate, checks, thresholds, source_reference=ref_text, source_text="",
                       source_url="", comment=comment)
    paraphrase = sim is not None and sim < thresholds.partial and flag is VerificationFlag.PARTIALLY_CONFIRMED
    reference = f"Paraphrase of {title}" if paraphrase else title
    parts = []
    if sim is not None:
        if sim >= thresholds.confirm:
            parts.append(f"Quoted wording matches {title} (similarity {sim:.2f}).")
        elif paraphrase:
            parts.append(f"Wording is not verbatim (similarity {sim:.2f}) but the meaning corresponds to {title}.")
        else:
            parts.append(f"Quoted wording only loosely matches {title} (similarity {sim:.2f}).")
    if located == "search" and href is None:
        parts.append("The essay gave no reference; the narration was located by search.")
    if verdict:
        parts.append(_verdict_text(verdict))
    if paraphrase:
        parts.append("Treated as a paraphrase.")
    return _finish(ctx, candidate, checks, thresholds, source_reference=reference,
                   source_text=_excerpt(text), source_url=url, comment=_join(*parts))


_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])?\s*")
_REFS_HEADING = re.compile(r"^\s*(?:#+\s*)?\**\s*(?:references|sources|further reading|bibliography|links)\s*:?\**\s*$",
                           re.I | re.M)


def is_listed_only(candidate: CitationCandidate, essay: str | None = None) -> bool:
    """True when a link is merely listed: a line of its own, or under a references heading."""
    if not candidate.url or candidate.quoted_text or candidate.attribution:
        return False
    if essay is not None:
        head = None
        for m in _REFS_HEADING.finditer(essay, 0, candidate.span[0]):
            head = m
        if head is not None:
            return True
        line_start = essay.rfind("\n", 0, candidate.span[0]) + 1
        line_end = essay.find("\n", candidate.span[1])
        line = essay[line_start: line_end if line_end >= 0 else len(essay)]
    else:
        line = candidate.context or candidate.snippet
    rest = _LIST_MARKER.sub("", line.replace(candidate.url, " "), count=1)
    return len(tokenize(rest)) <= 3


def verify_web_citation(
    candidate: CitationCandidate,
    retriever: EvidenceRetriever,
    judge: EvidenceJudge | None = None,
    thresholds: Thresholds = Thresholds(),
    ctx: EssayContext = EssayContext(),
    essay: str | None = None,
    source_label: str | None = None,
) -> VerificationRecord:
    """Verify a web link, an attributed quotation, or an unsourced claim."""
    notes = list(candidate.notes)
    quote = candidate.quoted_text
    text, url, title, located = "", candidate.url or "", "", "none"
    unused = candidate.url is not None and is_listed_only(candidate, essay)
    if candidate.url:
        text = _fetch(retriever, candidate.url, notes)
        located = "address" if text else "none"
        title = source_label or _page_label(candidate.url)
    else:
        doc = _best_document(_search(retriever, quote or _claim(candidate), notes), quote)
        if doc:
            text, url, title, located = doc.snippet, doc.url, doc.title, "search"
    offline = _offline_note(retriever)
    if offline:
        notes.append(offline)

    sim = similarity(quote, text) if (quote and text) else None
    verdict = None
    if located != "none" and not unused:
        verdict = _ask(judge, _claim(candidate), text, title)
    checks = Checks(located=located, quote_similarity=sim, semantic_relation=verdict.relation if verdict else None,
                    unused_link=unused, span=candidate.span, provenance=candidate.provenance, notes=tuple(notes))
    failures = [n for n in notes if n.startswith(("fetch", "search"))]

    if unused:
        comment = _join("Link is reachable." if text else "Link could not be fetched.",
                        "The essay only lists it and draws no material from it. Treated as unused reference.",
                        offline, *failures)
        return _finish(ctx, candidate, checks, thresholds, source_reference=title or url,
                       source_text=_excerpt(text) if text else "", source_url=url, comment=comment)
    if located == "none":
        who = candidate.attribution
        ref_text = f"Claimed {who} quotation (source unspecified)" if who else (title or "No source located")
        comment = _join("No source containing this statement could be located.", "Statement remains unverified.",
                        offline, *failures)
        return _finish(ctx, candidate, checks, thresholds, source_reference=ref_text, source_text="",
                       source_url=url, comment=comment)
    parts = []
    if sim is not None:
        parts.append(f"Quoted wording vs source: similarity {sim:.2f}.")
    if verdict:
        parts.append(_verdict_text(verdict))
    else:
        parts.append("No judge available to compare the claim with the page.")
    return _finish(ctx, candidate, checks, thresholds, source_reference=title, source_text=_excerpt(text),
                   source_url=url, comment=_join(*parts))


def _page_label(url: str) -> str:
    host = re.sub(r"^https?://(?:www\.)?", "", url).split("/", 1)[0]
    return f"{host} page"


# ---------------------------------------------------------------- dispatch

def verify_candidate(
    candidate: CitationCandidate,
    corpus: CorpusIndex,
    retriever: EvidenceRetriever | None = None,
    judge: EvidenceJudge | None = None,
    thresholds: Thresholds = Thresholds(),
    ctx: EssayContext = EssayContext(),
    essay: str | None = None,
) -> list[VerificationRecord]:
    """Verify one candidate. A URL/text mismatch yields a second record for the URL referent."""
    retriever = retriever or OfflineRetriever()
    has_quran = candidate.quran_ref is not None or isinstance(candidate.url_ref, AyahRef)
    if candidate.source_type is SourceType.QURAN or (has_quran and candidate.hadith_ref is None):
        records = [verify_quran_citation(candidate, corpus, judge, thresholds, ctx)]
        cons = check_url_consistency(candidate)
        if cons.status == MISMATCH and isinstance(cons.url_ref, AyahRef) and candidate.quran_ref is not None:
            records.append(verify_quran_citation(candidate, corpus, judge, thresholds, ctx,
                                                 ref=cons.url_ref, role="url_referent"))
        return records
    if candidate.source_type is SourceType.HADITH:
        return [verify_hadith_citation(candidate, retriever, corpus, judge, thresholds, ctx)]
    return [verify_web_citation(candidate, retriever, judge, thresholds, ctx, essay)]


def _locate(essay: str, snippet: str) -> tuple[int, int] | None:
    i = essay.find(snippet)
    if i >= 0:
        return i, i + len(snippet)
    words = snippet.split()
    if not words:
        return None
    pat = r"\s+".join(re.escape(w) for w in words)
    m = re.search(pat, essay)
    return (m.start(), m.end()) if m else None


def judge_candidates(essay: str, parsed: Sequence[CitationCandidate], judge: EvidenceJudge) -> list[CitationCandidate]:
    """References the judge reports that the parser missed, tagged with provenance 'judge'."""
    out = []
    for item in judge.detect_references(essay, [c.snippet for c in parsed]):
        snippet = item.get("snippet", "").strip()
        if not snippet:
            continue
        span = _locate(essay, snippet)
        notes = ("judge-detected",)
        if span is None:
            span = (len(essay), len(essay))
            notes += ("snippet not found verbatim in essay",)
        if any(c.span[0] < span[1] and span[0] < c.span[1] for c in parsed):
            continue
        try:
            st = SourceType(item.get("source_type", "unknown"))
        except ValueError:
            st = SourceType.UNKNOWN
        ref = item.get("reference")
        out.append(CitationCandidate(
            span=span, snippet=snippet, source_type=st,
            quran_ref=AyahRef.parse(ref) if (st is SourceType.QURAN and ref) else None,
            hadith_ref=HadithRef.parse(ref) if (st is SourceType.HADITH and ref) else None,
            quoted_text=item.get("quoted_text") or None, context=item.get("claim") or snippet,
            notes=notes, provenance="judge"))
    return out


def verify_essay(
    essay: str,
    corpus: CorpusIndex,
    retriever: EvidenceRetriever | None = None,
    judge: EvidenceJudge | None = None,
    thresholds: Thresholds = Thresholds(),
    ctx: EssayContext = EssayContext(),
    candidates: Sequence[CitationCandidate] | None = None,
) -> list[VerificationRecord]:
    parsed = list(candidates) if candidates is not None else extract_citations(essay, corpus)
    if judge is not None:
        parsed += judge_candidates(essay, parsed, judge)
    records: list[VerificationRecord] = []
    for cand in parsed:
        records.extend(verify_candidate(cand, corpus, retriever, judge, thresholds, ctx, essay))
    return records


# ---------------------------------------------------------------- log

@dataclass(frozen=True)
class AccuracyVerificationLog:
    prompt_id: int | None
    records: tuple[VerificationRecord, ...]
    counts: dict[str, int]
    reference_totals: dict[str, int]
    summary: str

    def group(self, flag: VerificationFlag) -> tuple[VerificationRecord, ...]:
        return tuple(r for r in self.records if r.flag is flag)

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "counts": self.counts,
            "reference_totals": self.reference_totals,
            "summary": self.summary,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AccuracyVerificationLog":
        return compile_log([VerificationRecord.from_dict(r) for r in d["records"]], d.get("prompt_id"))


def _record_key(r: VerificationRecord):
    return (FLAG_ORDER.index(r.flag), r.prompt_id, r.checks.span, r.checks.role != "cited", r.source_reference)


def compile_log(records: Iterable[VerificationRecord], prompt_id: int | None = None) -> AccuracyVerificationLog:
    records = list(records)
    ids = {r.prompt_id for r in records}
    if prompt_id is not None:
        ids.add(prompt_id)
    if len(ids) > 1:
        raise MixedPromptIds(f"records from several prompts in one log: {sorted(ids)}")
    pid = next(iter(ids)) if ids else prompt_id
    ordered = tuple(sorted(records, key=_record_key))
    counts = {f.value: sum(1 for r in ordered if r.flag is f) for f in FLAG_ORDER}

    # references are counted per cited occurrence; URL-referent records are extra evidence
    cited = [r for r in ordered if r.checks.role == "cited"]
    totals = {t.value: sum(1 for r in cited if r.source_type is t) for t in SourceType}
    accurate = {t.value: sum(1 for r in cited if r.source_type is t and r.flag is VerificationFlag.CONFIRMED)
                for t in SourceType}
    return AccuracyVerificationLog(pid, ordered, counts, totals, _summary(totals, accurate, ordered))


def _summary(totals: dict[str, int], accurate: dict[str, int], records: Sequence[VerificationRecord]) -> str:
    if not records:
        return "No references detected."
    names = {"quran": "Qur'anic reference", "hadith": "hadith citation", "web": "web source", "unknown": "other attributed quotation"}
    parts = []
    for key, name in names.items():
        n = totals[key]
        if n == 0:
            if key in ("hadith", "web"):
                parts.append(f"No {name}s.")
            continue
        plural = name if n == 1 else name + "s"
        parts.append(f"{n} {plural}, {accurate[key]} confirmed.")
    mism = sum(1 for r in records if r.checks.role == "url_referent")
    if mism:
        parts.append(f"{mism} link(s) point to a different reference than cited.")
    unused = sum(1 for r in records if r.checks.unused_link)
    if unused:
        parts.append(f"{unused} link(s) listed without use.")
    return " ".join(parts)


# ---------------------------------------------------------------- rendering

_FIELDS = (("Prompt ID", "prompt_id"), ("Category", "category"), ("Content Snippet", "content_snippet"),
           ("Source Type", "source_type"), ("Source Reference", "source_reference"), ("Source Text", "source_text"),
           ("Source URL", "source_url"), ("Verification Comment", "comment"))


def render_record(r: VerificationRecord) -> str:
    lines = []
    for label, attr in _FIELDS:
        value = getattr(r, attr)
        value = value.value if isinstance(value, Enum) else value
        lines.append(f"{label}: {value if value not in ('', None) else 'n/a'}")
    return "\n".join(lines)


def render_log(records: Iterable[VerificationRecord], title: str = "Verification Results Summary") -> str:
    """Plain-text digest grouped by flag, entries ordered by (prompt_id, span)."""
    records = list(records)
    out = [title, "=" * len(title), ""]
    for flag in FLAG_ORDER:
        group = sorted((r for r in records if r.flag is flag),
                       key=lambda r: (r.prompt_id, r.checks.span, r.checks.role != "cited"))
        out.append(f"{flag.heading} Sources ({len(group)}):")
        out.append("")
        for r in group:
            out.append(render_record(r))
            out.append("-" * 12)
        out.append("")
    return "\n".join(out).rstrip() + "\n"
