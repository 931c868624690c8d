"""Evidence retrievers backing the internet_search / internet_extract tools."""
from __future__ import annotations

import html
import json
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote_plus

import httpx

from .errors import FaithcheckError
from .similarity import content_words, tokenize


class RetrieverError(FaithcheckError):
    module = "verify"


@dataclass(frozen=True)
class Document:
    title: str
    url: str
    snippet: str


class EvidenceRetriever(ABC):
    online: bool = False

    @abstractmethod
    def search(self, query: str) -> list[Document]: ...

    @abstractmethod
    def extract(self, url: str) -> str: ...


class OfflineRetriever(EvidenceRetriever):
    """Finds nothing. Used whenever a run is offline."""

    online = False

    def search(self, query: str) -> list[Document]:
        return []

    def extract(self, url: str) -> str:
        return ""


class StaticRetriever(EvidenceRetriever):
    """Local document set standing in for a search engine.

    Fixture format (JSON)::

        {"documents": [{"url": ..., "title": ..., "text": ..., "queries": [...]}, ...],
         "unreachable": ["https://..."]}

    A document with ``queries`` is returned only for queries containing one of those
    phrases (case and spacing ignored). Other documents are ranked by the share of the
    query's content words they contain.
    """

    online = False

    def __init__(self, documents: list[dict], unreachable: list[str] = (), min_shared: int = 2, min_score: float = 0.2):
        self.documents = {d["url"]: d for d in documents}
        self.unreachable = set(unreachable)
        self.min_shared = min_shared
        self.min_score = min_score

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticRetriever":
        doc = json.loads(Path(path).read_text())
        return cls(doc.get("documents", []), doc.get("unreachable", []))

    def search(self, query: str) -> list[Document]:
        q = content_words(tokenize(query))
        if not q:
            return []
        norm = " ".join(tokenize(query))
        scored = []
        for url, d in sorted(self.documents.items()):
            if "queries" in d:
                if any(" ".join(tokenize(p)) in norm for p in d["queries"]):
                    scored.append((-1.0, url, Document(d.get("title", ""), url, d["text"])))
                continue
            words = frozenset(tokenize(d.get("title", "") + " " + d["text"]))
            shared = len(q & words)
            score = shared / len(q)
            if shared >= self.min_shared and score >= self.min_score:
                scored.append((-score, url, Document(d.get("title", ""), url, d["text"])))
        scored.sort(key=lambda x: (x[0], x[1]))
        return [doc for _, _, doc in scored]

    def extract(self, url: str) -> str:
        if url in self.unreachable:
            raise RetrieverError(f"could not fetch {url}")
        d = self.documents.get(url)
        return d["text"] if d else ""


_TAG = re.compile(r"<(script|style)[^>]*>.*?</\1>|<[^>]+>", re.S | re.I)


def html_to_text(markup: str) -> str:
    text = _TAG.sub(" ", markup)
    return re.sub(r"\s+", " ", html.unescape(text)).strip()


class HttpRetriever(EvidenceRetriever):
    """Live retriever: a JSON search endpoint plus plain HTTP GET for extraction.

    ``search_url`` is a template containing ``{query}``; the endpoint must answer with
    ``{"results": [{"title", "url", "snippet"}]}``.
    """

    online = True

    def __init__(self, search_url: str | None, client: httpx.Client, max_chars: int = 20000):
        self.search_url = search_url
        self.client = client
        self.max_chars = max_chars

    def search(self, query: str) -> list[Document]:
        if not self.search_url:
            return []
        try:
            resp = self.client.get(self.search_url.format(query=quote_plus(query)))
            resp.raise_for_status()
            results = resp.json().get("results", [])
        except (httpx.HTTPError, ValueError) as exc:
            raise RetrieverError(f"search failed: {exc}") from exc
        return [Document(r.get("title", ""), r.get("url", ""), r.get("snippet", "")) for r in results]

    def extract(self, url: str) -> str:
        try:
            resp = self.client.get(url, follow_redirects=True)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise RetrieverError(f"could not fetch {url}: {exc}") from exc
        return html_to_text(resp.text)[: self.max_chars]
