"""Qur'an corpus: loading, validation, lookup, surah-name resolution and quote search."""
from __future__ import annotations

import gzip
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import jsonschema
import numpy as np

from .errors import (
    AmbiguousSurahAlias,
    AyahCountMismatch,
    CorpusError,
    CorpusSchemaError,
    DuplicateAyahError,
    EmptyQuoteError,
    InvalidAyahError,
    InvalidSurahError,
    UnknownSurahName,
)
from .similarity import content_sequence, content_words, dice, strip_diacritics, token_similarity, tokenize

SURAH_COUNT = 114


class AyahRef(NamedTuple):
    surah: int
    ayah: int

    def __str__(self) -> str:
        return f"{self.surah}:{self.ayah}"

    @classmethod
    def parse(cls, text: str) -> "AyahRef":
        m = re.fullmatch(r"\s*(\d{1,3})\s*:\s*(\d{1,3})\s*", text)
        if not m:
            raise ValueError(f"not a surah:ayah reference: {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


class HadithRef(NamedTuple):
    collection: str
    number: str

    def __str__(self) -> str:
        return f"{self.collection}:{self.number}"

    @classmethod
    def parse(cls, text: str) -> "HadithRef":
        collection, _, number = text.partition(":")
        if not collection or not number:
            raise ValueError(f"not a collection:number reference: {text!r}")
        return cls(collection, number)


@dataclass(frozen=True)
class SurahMeta:
    number: int
    transliterated_name: str
    arabic_name: str
    english_name: str
    aliases: frozenset[str]
    ayah_count: int


@dataclass(frozen=True)
class AyahRecord:
    ref: AyahRef
    arabic_text: str
    translations: Mapping[str, str]

    def text(self, translator: str | None = None) -> str:
        if translator is None:
            translator = sorted(self.translations)[0]
        return self.translations[translator]


@dataclass(frozen=True)
class HadithCollection:
    id: str
    display_name: str
    url_stem: str
    aliases: tuple[str, ...]
    short_aliases: tuple[str, ...] = ()
    phrases: tuple[str, ...] = ()  # surface forms, display name first
    short_phrases: tuple[str, ...] = ()


class QuoteHit(NamedTuple):
    ref: AyahRef
    similarity: float
    rank: int


@dataclass(frozen=True)
class _Postings:
    """Per-translator search structures, rows aligned with CorpusIndex.order."""

    tokens: tuple[tuple[str, ...], ...]
    postings: Mapping[str, tuple[np.ndarray, np.ndarray]]  # token -> (row ids, counts)


@dataclass(frozen=True, eq=False)
class CorpusIndex:
    surahs: tuple[SurahMeta, ...]
    ayat: Mapping[AyahRef, AyahRecord]
    translators: Mapping[str, Mapping[str, str]]
    collections: Mapping[str, HadithCollection]
    aliases: Mapping[str, int]
    numbering: str = "hafs"
    order: tuple[AyahRef, ...] = ()
    _search: Mapping[str, _Postings] = field(default_factory=dict, repr=False, compare=False)

    def surah(self, number: int) -> SurahMeta:
        if not 1 <= number <= len(self.surahs):
            raise InvalidSurahError(f"surah {number} does not exist (1-{len(self.surahs)})")
        return self.surahs[number - 1]

    def is_valid(self, ref: AyahRef) -> bool:
        return 1 <= ref.surah <= len(self.surahs) and 1 <= ref.ayah <= self.surahs[ref.surah - 1].ayah_count

    @property
    def total_ayat(self) -> int:
        return len(self.ayat)

    def hadith_collection(self, name: str) -> HadithCollection | None:
        key = _collection_key(name)
        for coll in self.collections.values():
            if key == coll.id or key in coll.aliases or key in coll.short_aliases:
                return coll
        return None


# ---------------------------------------------------------------- name normalization

_ARTICLES = {"al", "an", "ar", "as", "at", "ash", "adh", "ad", "az", "ath", "the", "el"}
_SURAH_WORDS = {"surah", "surat", "sura", "soorah", "surah", "chapter"}


def normalize_surah_name(name: str) -> str:
    text = strip_diacritics(name).lower()
    text = re.sub(r"[‘’'`ʼʿʾ\"]", "", text)
    text = re.sub(r"[^a-z0-9]+", " ", text)
    words = text.split()
    while words and words[0] in _SURAH_WORDS:
        words.pop(0)
    if len(words) > 1 and words[0] in _ARTICLES:
        words.pop(0)
    return "".join(words)


def _collection_key(name: str) -> str:
    text = strip_diacritics(name).lower()
    text = re.sub(r"[‘’'`ʼʿʾ\"]", "", text)
    return re.sub(r"[^a-z0-9]+", "", text)


# ---------------------------------------------------------------- loading

_DATA = resources.files("faithcheck") / "data"
BUNDLED_CORPUS = "quran.json.gz"
BUNDLED_COLLECTIONS = "hadith_collections.json"


def bundled_corpus_path() -> Path:
    return Path(str(_DATA / BUNDLED_CORPUS))


def bundled_collections_path() -> Path:
    return Path(str(_DATA / BUNDLED_COLLECTIONS))


def _read_json(path: Path) -> object:
    if not path.exists():
        raise CorpusError("file not found", location=str(path))
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)

    def no_duplicates(pairs: list[tuple[str, object]]) -> dict:
        seen: dict[str, object] = {}
        for key, value in pairs:
            if key in seen:
                raise DuplicateAyahError(f"duplicate key {key!r}", location=f"{path}:{key}")
            seen[key] = value
        return seen

    try:
        return json.loads(raw, object_pairs_hook=no_duplicates)
    except json.JSONDecodeError as exc:
        raise CorpusSchemaError(exc.msg, location=f"{path}:line {exc.lineno} col {exc.colno}") from None


def _schema() -> dict:
    return json.loads((_DATA / "corpus.schema.json").read_text())


def load_collections(path: str | Path | None = None) -> dict[str, HadithCollection]:
    path = Path(path) if path else bundled_collections_path()
    doc = _read_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("collections"), dict):
        raise CorpusSchemaError("expected an object with a 'collections' map", location=str(path))
    out = {}
    for cid, entry in sorted(doc["collections"].items()):
        try:
            aliases = tuple(sorted({_collection_key(a) for a in entry.get("aliases", [])} | {_collection_key(entry["display_name"])}))
            short = tuple(sorted(_collection_key(a) for a in entry.get("short_aliases", [])))
            out[cid] = HadithCollection(
                cid,
                entry["display_name"],
                entry["url_stem"].rstrip("/"),
                aliases,
                short,
                phrases=(entry["display_name"], *entry.get("aliases", [])),
                short_phrases=tuple(entry.get("short_aliases", [])),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise CorpusSchemaError(f"malformed collection entry ({exc})", location=f"{path}:collections.{cid}") from None
    return out


def load_corpus(path: str | Path | None = None, collections: str | Path | None = None) -> CorpusIndex:
    """Load and validate a corpus document; ``None`` loads the bundled corpus."""
    path = Path(path) if path else bundled_corpus_path()
    doc = _read_json(path)

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        loc = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise CorpusSchemaError(err.message, location=f"{path}:{loc}")

    translators = {k: dict(v) for k, v in sorted(doc["translators"].items())}

    surah_docs = sorted(doc["surahs"], key=lambda s: s["number"])
    numbers = [s["number"] for s in surah_docs]
    if numbers != list(range(1, SURAH_COUNT + 1)):
        missing = sorted(set(range(1, SURAH_COUNT + 1)) - set(numbers))
        dupes = sorted({n for n in numbers if numbers.count(n) > 1})
        raise CorpusSchemaError(f"surah numbers must be 1-{SURAH_COUNT} exactly once (missing {missing}, duplicated {dupes})", location=f"{path}:surahs")

    aliases: dict[str, int] = {}
    surahs = []
    for i, s in enumerate(surah_docs):
        alias_set = set()
        for alias in s["aliases"]:
            norm = normalize_surah_name(alias)
            if norm != alias:
                raise CorpusSchemaError(f"alias {alias!r} is not in normalized form ({norm!r})", location=f"{path}:surahs[{i}].aliases")
            alias_set.add(alias)
        alias_set.add(normalize_surah_name(s["transliterated_name"]))
        for alias in alias_set:
            if alias in aliases and aliases[alias] != s["number"]:
                raise AmbiguousSurahAlias(f"alias {alias!r} claimed by surahs {aliases[alias]} and {s['number']}", location=f"{path}:surahs[{i}]")
            aliases[alias] = s["number"]
        surahs.append(SurahMeta(s["number"], s["transliterated_name"], s["arabic_name"], s.get("english_name", ""), frozenset(alias_set), s["ayah_count"]))

    ayat: dict[AyahRef, AyahRecord] = {}
    for key, entry in doc["ayat"].items():
        loc = f"{path}:ayat.{key}"
        try:
            ref = AyahRef.parse(key)
        except ValueError:
            raise CorpusSchemaError("ayah key must be 'surah:ayah'", location=loc) from None
        if ref in ayat:
            raise DuplicateAyahError(f"duplicate ayah {ref}", location=loc)
        if not 1 <= ref.surah <= SURAH_COUNT:
            raise CorpusSchemaError(f"surah {ref.surah} out of range", location=loc)
        if ref.ayah < 1 or ref.ayah > surahs[ref.surah - 1].ayah_count:
            raise AyahCountMismatch(f"ayah {ref} exceeds declared count {surahs[ref.surah - 1].ayah_count}", location=loc)
        unknown = set(entry["translations"]) - set(translators)
        if unknown:
            raise CorpusSchemaError(f"translations from unregistered translators {sorted(unknown)}", location=loc)
        ayat[ref] = AyahRecord(ref, entry["arabic"], dict(sorted(entry["translations"].items())))

    for meta in surahs:
        present = sum(1 for a in range(1, meta.ayah_count + 1) if (meta.number, a) in ayat)
        if present != meta.ayah_count:
            raise AyahCountMismatch(
                f"surah {meta.number} declares {meta.ayah_count} ayat but contains {present}",
                location=f"{path}:surahs[{meta.number - 1}]",
            )

    order = tuple(sorted(ayat))
    search = {t: _build_postings(order, ayat, t) for t in translators}
    colls = load_collections(collections)
    return CorpusIndex(
        surahs=tuple(surahs),
        ayat={ref: ayat[ref] for ref in order},
        translators=translators,
        collections=colls,
        aliases=dict(sorted(aliases.items())),
        numbering=doc.get("numbering", "hafs"),
        order=order,
        _search=search,
    )


def _build_postings(order: tuple[AyahRef, ...], ayat: Mapping[AyahRef, AyahRecord], translator: str) -> _Postings:
    tokens = []
    acc: dict[str, tuple[list[int], list[int]]] = {}
    for row, ref in enumerate(order):
        toks = tokenize(ayat[ref].translations.get(translator, ""))
        tokens.append(toks)
        counts: dict[str, int] = {}
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            rows, cnts = acc.setdefault(t, ([], []))
            rows.append(row)
            cnts.append(c)
    postings = {t: (np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64)) for t, (r, c) in acc.items()}
    return _Postings(tuple(tokens), postings)


def serialize_index(index: CorpusIndex) -> bytes:
    """Canonical byte serialization, used to check load determinism."""
    doc = {
        "numbering": index.numbering,
        "translators": index.translators,
        "surahs": [
            [s.number, s.transliterated_name, s.arabic_name, s.english_name, sorted(s.aliases), s.ayah_count]
            for s in index.surahs
        ],
        "aliases": index.aliases,
        "ayat": [[str(r), index.ayat[r].arabic_text, index.ayat[r].translations] for r in index.order],
        "collections": {
            k: [c.display_name, c.url_stem, list(c.aliases), list(c.short_aliases)] for k, c in index.collections.items()
        },
        "postings": {
            t: {tok: [r.tolist(), c.tolist()] for tok, (r, c) in sorted(p.postings.items())}
            for t, p in sorted(index._search.items())
        },
    }
    return json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode()


# ---------------------------------------------------------------- lookup

def lookup_ayah(index: CorpusIndex, ref: AyahRef | tuple[int, int]) -> AyahRecord:
    ref = AyahRef(*ref)
    meta = index.surah(ref.surah)
    if not 1 <= ref.ayah <= meta.ayah_count:
        raise InvalidAyahError(f"surah {ref.surah} ({meta.transliterated_name}) has {meta.ayah_count} ayat; {ref.ayah} requested")
    return index.ayat[ref]


def resolve_surah_name(index: CorpusIndex, name: str) -> int:
    key = normalize_surah_name(name)
    if not key:
        raise UnknownSurahName(f"empty surah name {name!r}")
    if key in index.aliases:
        return index.aliases[key]
    # alias sets are checked unique at load, so a miss here is just unknown
    raise UnknownSurahName(f"unknown surah name {name!r} (normalized {key!r})")


def search_quote(
    index: CorpusIndex,
    quote: str,
    translator: str | None = None,
    limit: int = 10,
) -> list[QuoteHit]:
    """Rank ayat by similarity of ``quote`` to their translation(s).

    Ordering: similarity desc, then symmetric LCS (dice) desc, then (surah, ayah).
    ``rank`` is the competition rank over (similarity, dice), so ayat with identical
    translations share a rank. Hits tied with the last one kept are all returned.
    """
    q = tokenize(quote)
    if not q:
        raise EmptyQuoteError("quote is empty after normalization")
    if translator is not None and translator not in index._search:
        raise CorpusError(f"unknown translator {translator!r}")
    names = [translator] if translator else sorted(index._search)

    qseq = content_sequence(q)
    qset = content_words(q)
    qcounts: dict[str, int] = {}
    for t in qseq:
        qcounts[t] = qcounts.get(t, 0) + 1

    n = len(index.order)
    bound = np.zeros(n)
    for name in names:
        post = index._search[name].postings
        bag = np.zeros(n)
        present = np.zeros(n)
        for tok, qc in qcounts.items():
            if tok in post:
                rows, cnts = post[tok]
                bag[rows] += np.minimum(cnts, qc)
        for tok in qset:
            if tok in post:
                present[post[tok][0]] += 1
        bound = np.maximum(bound, np.maximum(bag / len(qseq), present / len(qset)))

    candidates = np.flatnonzero(bound > 0)
    # highest bound first; stable on row order so refs break ties
    candidates = candidates[np.argsort(-bound[candidates], kind="stable")]

    scored: list[tuple[float, float, int]] = []
    kth: tuple[float, float] | None = None
    for row in candidates.tolist():
        if kth is not None and bound[row] < kth[0]:
            break
        sim = sec = 0.0
        for name in names:
            toks = index._search[name].tokens[row]
            sim = max(sim, token_similarity(q, toks))
            sec = max(sec, dice(q, toks))
        if sim <= 0:
            continue
        scored.append((sim, sec, row))
        if len(scored) >= limit:
            scored.sort(key=lambda x: (-x[0], -x[1], x[2]))
            kth = scored[limit - 1][:2]
    scored.sort(key=lambda x: (-x[0], -x[1], x[2]))

    hits: list[QuoteHit] = []
    for pos, (sim, sec, row) in enumerate(scored):
        if pos >= limit and (sim, sec) != scored[limit - 1][:2]:
            break
        rank = pos + 1
        if pos and (sim, sec) == scored[pos - 1][:2]:
            rank = hits[-1].rank
        hits.append(QuoteHit(index.order[row], sim, rank))
    return hits


def iter_refs(index: CorpusIndex) -> Iterable[AyahRef]:
    return iter(index.order)


def render_ayah(record: AyahRecord) -> str:
    """Plain-text rendering used as the quran_ayah tool result."""
    lines = [f"Qur'an {record.ref}", f"Arabic: {record.arabic_text}"]
    lines += [f"{tid}: {text}" for tid, text in record.translations.items()]
    return "\n".join(lines)
