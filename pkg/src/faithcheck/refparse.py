"""Citation extraction: textual Qur'an/hadith references, scripture URLs, quotes and attributions.

All matching runs over a diacritic-folded copy of the essay that has the same length as
the original, so every span indexes the original text directly.

Supported textual Qur'an forms (case-insensitive)::

    Surah NAME (S:A)      Surah NAME S:A      Surah S:A      Surah NAME, verse A
    Quran S:A             Qur'an, S:A         verse S:A      ayah S:A
    NAME S:A              NAME (S:A)          (S:A)

``S:A-B`` ranges resolve to ``S:A`` with ``range_end=B``. Hadith references are
"<collection phrase> [No.|#|hadith] N" using the phrases of the collection table; short
forms such as "Muslim" are only read inside parentheses or after "narrated by".
"""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple
from urllib.parse import urlsplit

from .corpus import AyahRef, CorpusIndex, HadithRef, load_corpus, normalize_surah_name, resolve_surah_name
from .errors import RefParseError, UnknownSurahName

QUOTE_WINDOW = 200


class SourceType(str, Enum):
    QURAN = "quran"
    HADITH = "hadith"
    WEB = "web"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CitationCandidate:
    span: tuple[int, int]
    snippet: str
    source_type: SourceType
    quran_ref: AyahRef | None = None
    hadith_ref: HadithRef | None = None
    url: str | None = None
    url_ref: AyahRef | HadithRef | None = None
    quoted_text: str | None = None
    range_end: int | None = None
    attribution: str | None = None
    context: str = ""
    notes: tuple[str, ...] = ()
    provenance: str = "parser"

    @property
    def target_ref(self) -> AyahRef | HadithRef | None:
        """The reference verification should check first: textual wins over URL."""
        return self.quran_ref or self.hadith_ref or self.url_ref

    def to_dict(self) -> dict:
        return {
            "span": list(self.span),
            "snippet": self.snippet,
            "source_type": self.source_type.value,
            "quran_ref": str(self.quran_ref) if self.quran_ref else None,
            "hadith_ref": str(self.hadith_ref) if self.hadith_ref else None,
            "url": self.url,
            "url_ref": str(self.url_ref) if self.url_ref else None,
            "quoted_text": self.quoted_text,
            "range_end": self.range_end,
            "attribution": self.attribution,
            "notes": list(self.notes),
            "provenance": self.provenance,
        }


class ParsedQuranRef(NamedTuple):
    ref: AyahRef
    range_end: int | None = None
    note: str | None = None


# ---------------------------------------------------------------- folding

def fold(text: str) -> str:
    """Strip diacritics one character at a time so offsets are preserved."""
    out = []
    for ch in text:
        if ch.isascii():
            out.append(ch)
            continue
        bases = [c for c in unicodedata.normalize("NFKD", ch) if not unicodedata.combining(c)]
        out.append(bases[0] if len(bases) == 1 else ch)
    folded = "".join(out)
    assert len(folded) == len(text)
    return folded


# ---------------------------------------------------------------- patterns

_APOS = r"['’`ʿʾ‘]"
_NUM = r"(?<![\d:])(?P<s>\d{1,3})\s*:\s*(?P<a>\d{1,3})(?:\s*[-–]\s*(?P<e>\d{1,3}))?(?![\d:])"
_QURAN_WORD = rf"(?:the\s+)?(?:holy\s+|noble\s+|glorious\s+)?(?:qur{_APOS}?a{_APOS}?n|koran)"
_SURAH_WORD = r"(?:surah|surat|sura|soorah)"
_VERSE_WORD = r"(?:verses?|ayahs?|ayat|aya)"
_NAME_WORD = rf"[A-Za-z]+(?:{_APOS}[A-Za-z]+)*|{_APOS}[A-Za-z]+"
_NAME = rf"(?:{_NAME_WORD})(?:[ \-](?:{_NAME_WORD})){{0,3}}"

_FORMS: list[tuple[str, re.Pattern]] = [
    ("surah", re.compile(rf"\b{_SURAH_WORD}\s+(?:(?P<name>{_NAME})\s*,?\s*)?(?P<open>\()?\s*{_NUM}(?(open)\s*\))", re.I)),
    ("surah_verse", re.compile(rf"\b{_SURAH_WORD}\s+(?P<name>{_NAME})\s*[,:]?\s*{_VERSE_WORD}\s+(?P<a>\d{{1,3}})(?:\s*[-–]\s*(?P<e>\d{{1,3}}))?(?!\d)", re.I)),
    ("quran", re.compile(rf"\b{_QURAN_WORD}\s*[,:]?\s*(?:{_SURAH_WORD}\s+)?{_NUM}", re.I)),
    ("verse", re.compile(rf"\b{_VERSE_WORD}\s+{_NUM}", re.I)),
    ("paren", re.compile(rf"\(\s*{_NUM}\s*\)")),
]
_NAME_FULL = re.compile(rf"(?P<name>{_NAME})\s*,?\s*(?P<open>\()?\s*{_NUM}(?(open)\s*\))", re.I)
_BARE_NUM = re.compile(_NUM)
_WORD_BEFORE = re.compile(rf"(?:{_NAME_WORD})", re.I)

_URL = re.compile(r"https?://[^\s<>\"“”\]]+", re.I)
_MD_LINK = re.compile(r"\[(?P<anchor>[^\]\n]{1,200})\]\((?P<url>https?://[^\s)]+)\)", re.I)
_QUOTE = re.compile(r"\"(?P<a>[^\"\n]{6,}?)\"|“(?P<b>[^”\n]{6,}?)”|«(?P<c>[^»\n]{6,}?)»")
_PARA_BREAK = re.compile(r"\n\s*\n")

_PROPHET = re.compile(
    r"\b(?:prophet|messenger\s+of\s+(?:allah|god)|rasul\s*allah|rasulullah)\b|ﷺ|\(\s*(?:pbuh|saw|saws|s\.a\.w\.?)\s*\)|peace\s+be\s+upon\s+him",
    re.I,
)
_SPEECH = re.compile(r"\b(?:said|says|stated|taught|declared|advised|instructed|remarked|reminded us|narrated)\b", re.I)
_NARRATED_AFTER = re.compile(r"^\s*[,(]?\s*(?:as\s+)?(?:narrated|reported|recorded|related)\s+(?:by|in)\b", re.I)
_DASH_ATTRIBUTION = re.compile(r"^\s*[–—-]{1,2}\s*(?P<who>[A-Z][^\n.;:\"“”()]{1,80}?)\s*(?=[\n.;]|$)")
_SAID_BEFORE = re.compile(
    r"(?:^|[\s(])(?P<who>(?:[A-Z][\w'’`.\-]*\s+){0,4}[A-Z][\w'’`.\-]*)\s+(?:once\s+)?(?:said|wrote|writes|notes|noted|observed|remarked)\s*[:,]?\s*$"
)


@dataclass(frozen=True)
class SitePattern:
    hosts: frozenset[str]
    source_type: SourceType
    patterns: tuple[re.Pattern, ...]


def load_site_patterns(path: str | Path | None = None) -> tuple[SitePattern, ...]:
    if path is None:
        raw = (resources.files("faithcheck") / "data" / "site_patterns.json").read_text()
    else:
        raw = Path(path).read_text()
    doc = json.loads(raw)
    return tuple(
        SitePattern(frozenset(h.lower() for h in s["hosts"]), SourceType(s["source_type"]), tuple(re.compile(p, re.I) for p in s["patterns"]))
        for s in doc["sites"]
    )


@lru_cache(maxsize=1)
def _default_sites() -> tuple[SitePattern, ...]:
    return load_site_patterns()


@lru_cache(maxsize=1)
def _default_corpus() -> CorpusIndex:
    return load_corpus()


def _phrase_regex(phrase: str) -> str:
    words = [w for w in re.split(r"[\s\-'’`ʿ]+", fold(phrase)) if w]
    return r"[\s\-'’`ʿ]*".join(re.escape(w) for w in words)


@lru_cache(maxsize=8)
def _hadith_patterns(corpus: CorpusIndex) -> tuple[re.Pattern, re.Pattern]:
    long_alts: list[str] = []
    short_alts: list[str] = []
    for coll in corpus.collections.values():
        for phrase in coll.phrases:
            long_alts.append(_phrase_regex(phrase))
        for phrase in coll.short_phrases:
            short_alts.append(_phrase_regex(phrase))
    long_alts.sort(key=len, reverse=True)
    short_alts.sort(key=len, reverse=True)
    num = r"(?:(?:hadith|no\.?|number)\s*)?#?\s*(?P<num>\d{1,5}[a-z]?)(?![\w:])"
    long_re = re.compile(rf"(?<!\w)(?P<coll>{'|'.join(long_alts)})(?!\w)\s*[,:]?\s*{num}", re.I)
    short_re = re.compile(
        rf"(?:(?<=\()\s*|(?:narrated|reported|recorded|related)\s+by\s+)(?P<coll>{'|'.join(short_alts) or '(?!)'})(?!\w)\s*[,:]?\s*{num}",
        re.I,
    )
    return long_re, short_re


# ---------------------------------------------------------------- textual quran refs

def _resolve_name(corpus: CorpusIndex, name: str) -> int | None:
    try:
        return resolve_surah_name(corpus, name)
    except UnknownSurahName:
        return None


def _english_alias(corpus: CorpusIndex, surah: int, name: str) -> bool:
    meta = corpus.surahs[surah - 1]
    key = normalize_surah_name(name)
    return key == normalize_surah_name(meta.english_name) and key != normalize_surah_name(meta.transliterated_name)


def _from_match(m: re.Match, corpus: CorpusIndex, form: str) -> ParsedQuranRef:
    name = m.groupdict().get("name")
    surah = int(m.group("s")) if m.groupdict().get("s") else None
    ayah = int(m.group("a"))
    end = int(m.group("e")) if m.group("e") else None
    note = None
    if name:
        named = _resolve_name(corpus, name)
        if surah is None:
            if named is None:
                raise RefParseError(f"unknown surah name {name!r}")
            surah = named
        elif named is None:
            note = f"surah name {name.strip()!r} not recognised; numeric reference {surah}:{ayah} kept"
        elif named != surah:
            note = f"surah name {name.strip()!r} is surah {named} but the number says {surah}; numeric reference {surah}:{ayah} kept"
    if end is not None and end <= ayah:
        end = None
    return ParsedQuranRef(AyahRef(surah, ayah), end, note)


def parse_textual_quran_ref(fragment: str, corpus: CorpusIndex | None = None) -> ParsedQuranRef:
    """Parse one reference fragment such as ``"Surah Al-Baqarah (2:256)"``."""
    corpus = corpus or _default_corpus()
    text = fold(fragment.strip())
    if text.startswith("(") and text.endswith(")") and not _FORMS[-1][1].fullmatch(text):
        text = text[1:-1].strip()
    for form, pattern in _FORMS:
        m = pattern.fullmatch(text)
        if m:
            return _from_match(m, corpus, form)
    m = _NAME_FULL.fullmatch(text)
    if m and _resolve_name(corpus, m.group("name")) is not None:
        return _from_match(m, corpus, "name")
    raise RefParseError(f"unparseable Qur'an reference {fragment!r}")


def format_quran_ref(ref: AyahRef) -> str:
    return f"Quran {ref.surah}:{ref.ayah}"


# ---------------------------------------------------------------- url parsing

def parse_scripture_url(
    url: str,
    corpus: CorpusIndex | None = None,
    sites: Iterable[SitePattern] | None = None,
) -> AyahRef | HadithRef | None:
    """Map a scripture-site URL to the reference it addresses; ``None`` means ordinary web."""
    corpus = corpus or _default_corpus()
    sites = _default_sites() if sites is None else sites
    try:
        parts = urlsplit(url.strip())
    except ValueError:
        return None
    host = (parts.hostname or "").lower()
    target = parts.path or "/"
    if parts.query:
        target += "?" + parts.query
    if parts.fragment:
        target += "#" + parts.fragment
    for site in sites:
        if host not in site.hosts:
            continue
        for pattern in site.patterns:
            m = pattern.search(target)
            if not m:
                continue
            g = m.groupdict()
            if site.source_type is SourceType.HADITH:
                coll = corpus.hadith_collection(g["collection"])
                if coll is not None:
                    return HadithRef(coll.id, g["number"].lower())
                continue
            ayah = int(g["ayah"])
            if g.get("surah"):
                return AyahRef(int(g["surah"]), ayah)
            surah = _resolve_name(corpus, g["name"].replace("-", " "))
            if surah is not None:
                return AyahRef(surah, ayah)
    return None


# ---------------------------------------------------------------- extraction

@dataclass
class _Item:
    start: int
    end: int
    kind: str  # quran | hadith | url
    quran: ParsedQuranRef | None = None
    hadith: HadithRef | None = None
    url: str | None = None
    quote: tuple[int, int, str] | None = None  # outer span + inner text
    notes: list[str] = field(default_factory=list)

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end


def _widen_parens(text: str, start: int, end: int) -> tuple[int, int]:
    if start > 0 and end < len(text) and text[start - 1] == "(" and text[end] == ")":
        return start - 1, end + 1
    return start, end


def _find_quran_refs(folded: str, corpus: CorpusIndex) -> list[_Item]:
    items: list[_Item] = []

    def taken(s: int, e: int) -> bool:
        return any(it.overlaps(s, e) for it in items)

    for form, pattern in _FORMS:
        for m in pattern.finditer(folded):
            if taken(m.start(), m.end()):
                continue
            try:
                parsed = _from_match(m, corpus, form)
            except RefParseError:
                continue
            s, e = m.span()
            if form != "paren":
                s, e = _widen_parens(folded, s, e)
            items.append(_Item(s, e, "quran", quran=parsed))

    # NAME S:A without a keyword: the name must resolve, not be an English gloss, and agree
    for m in _BARE_NUM.finditer(folded):
        if taken(m.start(), m.end()):
            continue
        open_paren = m.start() > 0 and folded[m.start() - 1] == "("
        left_end = m.start() - 1 if open_paren else m.start()
        line_start = folded.rfind("\n", 0, left_end) + 1
        left = folded[max(line_start, left_end - 60):left_end]
        words = list(_WORD_BEFORE.finditer(left))
        base = max(line_start, left_end - 60)
        trailing = left[words[-1].end():] if words else ""
        if not words or not re.fullmatch(r"\s*,?\s*", trailing):
            continue
        for k in range(min(4, len(words)), 0, -1):
            first = words[-k]
            chunk = left[first.start():words[-1].end()]
            if re.search(r"[^A-Za-z'’`ʿʾ‘ \-]", chunk):
                continue
            surah = _resolve_name(corpus, chunk)
            if surah is None or surah != int(m.group("s")) or _english_alias(corpus, surah, chunk):
                continue
            end = m.end()
            if open_paren:
                if end < len(folded) and folded[end] == ")":
                    end += 1
                else:
                    continue
            s = base + first.start()
            if taken(s, end):
                break
            parsed = ParsedQuranRef(AyahRef(surah, int(m.group("a"))), int(m.group("e")) if m.group("e") else None)
            items.append(_Item(s, end, "quran", quran=parsed))
            break
    return items


def _find_hadith_refs(folded: str, corpus: CorpusIndex, existing: list[_Item]) -> list[_Item]:
    long_re, short_re = _hadith_patterns(corpus)
    items: list[_Item] = []
    for pattern in (long_re, short_re):
        for m in pattern.finditer(folded):
            s, e = m.start("coll"), m.end()
            if any(it.overlaps(s, e) for it in existing + items):
                continue
            coll = corpus.hadith_collection(m.group("coll"))
            if coll is None:
                continue
            s, e = _widen_parens(folded, s, e)
            items.append(_Item(s, e, "hadith", hadith=HadithRef(coll.id, m.group("num").lower())))
    return items


def _strip_url(url: str) -> str:
    while url and url[-1] in ".,;:!?'’":
        url = url[:-1]
    if url.endswith(")") and url.count("(") < url.count(")"):
        url = url[:-1]
    return url


def _same_paragraph(text: str, a: int, b: int) -> bool:
    lo, hi = min(a, b), max(a, b)
    return not _PARA_BREAK.search(text, lo, hi)


def _sentence_bounds(text: str, start: int, end: int) -> tuple[int, int]:
    lo = start
    while lo > 0:
        ch = text[lo - 1]
        if ch == "\n":
            break
        if ch in " \t" and lo >= 2 and text[lo - 2] in ".!?":
            break
        lo -= 1
    hi = end
    while hi < len(text):
        ch = text[hi]
        if ch == "\n":
            break
        hi += 1
        if ch in ".!?" and (hi == len(text) or text[hi] in " \t\n"):
            break
    return lo, hi


def _gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, b[0] - a[1], a[0] - b[1])


def extract_citations(essay: str, corpus: CorpusIndex | None = None, sites: Iterable[SitePattern] | None = None) -> list[CitationCandidate]:
    """Every citation occurrence in ``essay``, ordered by span start."""
    corpus = corpus or _default_corpus()
    sites = tuple(_default_sites() if sites is None else sites)
    folded = fold(essay)

    links = list(_MD_LINK.finditer(folded))
    link_spans = [(m.start(), m.end()) for m in links]

    url_spans = [(m.start("url"), m.end("url")) for m in links] + [(m.start(), m.end()) for m in _URL.finditer(folded)]

    def in_link_url(s: int, e: int) -> bool:
        return any(us <= s and e <= ue for us, ue in url_spans)

    refs = _find_quran_refs(folded, corpus)
    refs = [r for r in refs if not in_link_url(r.start, r.end)]
    refs += [r for r in _find_hadith_refs(folded, corpus, refs) if not in_link_url(r.start, r.end)]
    refs.sort(key=lambda it: it.start)

    items: list[_Item] = []
    used: set[int] = set()
    # markdown links: a reference inside the anchor text is paired with the link target
    for m in links:
        inner = [i for i, r in enumerate(refs) if m.start("anchor") <= r.start and r.end <= m.end("anchor")]
        url = m.group("url")
        url = essay[m.start("url"):m.start("url") + len(_strip_url(url))]
        if inner:
            base = refs[inner[0]]
            used.update(inner)
            extra = [f"additional reference {refs[i].quran.ref if refs[i].quran else refs[i].hadith} in link text" for i in inner[1:]]
            items.append(replace(base, start=m.start(), end=m.end(), url=url, notes=base.notes + extra))
        else:
            items.append(_Item(m.start(), m.end(), "url", url=url))

    refs = [r for i, r in enumerate(refs) if i not in used]

    # bare URLs; one directly after a textual reference is attached to it
    for m in _URL.finditer(folded):
        if any(s <= m.start() < e for s, e in link_spans):
            continue
        url = _strip_url(m.group(0))
        s, e = m.start(), m.start() + len(url)
        url = essay[s:e]
        host = None
        for r in refs:
            gap = folded[r.end:s]
            if r.url is None and r.end <= s and len(gap) <= 4 and re.fullmatch(r"\s*[(\[\-–:,]?\s*", gap):
                host = r
                break
        if host is not None:
            host.url = url
            if folded[host.end:s].strip() in "([" and folded[host.end:s].strip() and e < len(folded) and folded[e] in ")]":
                e += 1
            host.end = e
        else:
            items.append(_Item(s, e, "url", url=url))

    items.extend(refs)
    items.sort(key=lambda it: (it.start, it.end))

    # quotations: each quote goes to the nearest scripture reference within the window
    quotes = []
    for m in _QUOTE.finditer(folded):
        inner_group = next(g for g in ("a", "b", "c") if m.group(g) is not None)
        if any(s <= m.start() < e for s, e in link_spans):
            continue
        inner = essay[m.start(inner_group):m.end(inner_group)]
        if len(inner.split()) < 3:
            continue
        quotes.append((m.start(), m.end(), inner.strip()))

    scripture = [it for it in items if it.kind in ("quran", "hadith")]
    claims: dict[int, list[tuple[int, tuple[int, int, str]]]] = {}
    unattached = []
    for q in quotes:
        best = None
        for idx, it in enumerate(scripture):
            if it.overlaps(q[0], q[1]):
                continue
            gap = _gap((q[0], q[1]), (it.start, it.end))
            if gap > QUOTE_WINDOW or not _same_paragraph(folded, q[1] if q[1] <= it.start else q[0], it.start if q[1] <= it.start else it.end):
                continue
            if best is None or gap < best[0]:
                best = (gap, idx)
        if best is None:
            unattached.append(q)
        else:
            claims.setdefault(best[1], []).append((best[0], q))
    for idx, options in claims.items():
        options.sort(key=lambda o: (o[0], o[1][0]))
        it = scripture[idx]
        it.quote = options[0][1]
        unattached.extend(o[1] for o in options[1:])

    extras: list[CitationCandidate] = []
    for q in sorted(unattached):
        cand = _attributed_quote(essay, folded, q, items)
        if cand is not None:
            extras.append(cand)

    out = [_to_candidate(essay, folded, it, corpus, sites) for it in items] + extras
    out.sort(key=lambda c: (c.span[0], c.span[1]))
    return out


def _attributed_quote(essay: str, folded: str, q: tuple[int, int, str], items: list[_Item]) -> CitationCandidate | None:
    qs, qe, inner = q
    if len(inner.split()) < 4:
        return None
    para_start = 0
    for m in _PARA_BREAK.finditer(folded, 0, qs):
        para_start = m.end()
    before = folded[max(para_start, qs - 200):qs]
    # only the sentence that introduces the quote
    last = re.split(r"(?<=[.!?])\s+", before)[-1]
    after = folded[qe:qe + 120]

    source_type = None
    attribution = None
    end = qe
    if _PROPHET.search(last) and _SPEECH.search(last):
        source_type, attribution = SourceType.HADITH, "the Prophet"
    elif _NARRATED_AFTER.match(after):
        source_type, attribution = SourceType.HADITH, "narration"
    else:
        m = _DASH_ATTRIBUTION.match(after)
        if m:
            who = essay[qe + m.start("who"):qe + m.end("who")].strip()
            source_type = SourceType.HADITH if _PROPHET.search(who) else SourceType.UNKNOWN
            attribution, end = who, qe + m.end("who")
        else:
            m = _SAID_BEFORE.search(last)
            if m:
                who = m.group("who").strip()
                source_type = SourceType.HADITH if _PROPHET.search(who) else SourceType.UNKNOWN
                attribution = who
    if source_type is None:
        return None
    lo, hi = _sentence_bounds(essay, qs, end)
    return CitationCandidate(
        span=(qs, end),
        snippet=essay[qs:end],
        source_type=source_type,
        quoted_text=inner,
        attribution=attribution,
        context=essay[lo:hi].strip(),
    )


def _to_candidate(essay: str, folded: str, it: _Item, corpus: CorpusIndex, sites: tuple[SitePattern, ...]) -> CitationCandidate:
    start, end = it.start, it.end
    quoted = None
    if it.quote is not None:
        start, end = min(start, it.quote[0]), max(end, it.quote[1])
        quoted = it.quote[2]
    url_ref = parse_scripture_url(it.url, corpus, sites) if it.url else None
    notes = list(it.notes)
    quran_ref = it.quran.ref if it.quran else None
    if it.quran and it.quran.note:
        notes.append(it.quran.note)
    if it.quran and it.quran.range_end:
        notes.append(f"range {quran_ref}-{it.quran.range_end}; verifying the first ayah")

    if quran_ref is not None:
        source_type = SourceType.QURAN
    elif it.hadith is not None:
        source_type = SourceType.HADITH
    elif isinstance(url_ref, AyahRef):
        source_type = SourceType.QURAN
    elif isinstance(url_ref, HadithRef):
        source_type = SourceType.HADITH
    else:
        source_type = SourceType.WEB
    lo, hi = _sentence_bounds(essay, start, end)
    return CitationCandidate(
        span=(start, end),
        snippet=essay[start:end],
        source_type=source_type,
        quran_ref=quran_ref,
        hadith_ref=it.hadith,
        url=it.url,
        url_ref=url_ref,
        quoted_text=quoted,
        range_end=it.quran.range_end if it.quran else None,
        context=essay[lo:hi].strip(),
        notes=tuple(notes),
    )
