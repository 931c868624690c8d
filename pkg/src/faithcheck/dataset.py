"""Prompt manifest, response archive and collection driver.

Both files are JSON Lines. Manifest line::

    {"id": 1, "category": "Jurisprudence (Fiqh)", "title": "...", "source_site": "..."}

Archive line (a response, or a gap left by a failed request)::

    {"prompt_id": 1, "model": "ChatGPT", "text": "...", "collected_at": "...", "metadata": {...}}
    {"prompt_id": 1, "model": "Fanar", "gap": true, "error": "...", "collected_at": "..."}
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DatasetError, FaithcheckError, ManifestError

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = (
    "Write a blog-style essay on the following topic: {title}\n"
    "The response should be thorough, clear, and well-organized, aimed at a general audience, "
    "including reflections, reasoning, and examples where relevant."
)

CATEGORIES = (
    "Jurisprudence (Fiqh)",
    "Quran Exegesis (Tafsir)",
    "Theology (Aqidah)",
    "Hadith (Ulum al-Hadith)",
    "Spiritual Conduct (Adab)",
)

_CATEGORY_ALIASES = {
    "fiqh": 0, "jurisprudence": 0, "islamic jurisprudence": 0,
    "tafsir": 1, "quran exegesis": 1, "quranic exegesis": 1, "exegesis": 1,
    "aqidah": 2, "aqeedah": 2, "theology": 2,
    "hadith": 3, "ulum al-hadith": 3, "ulum al hadith": 3, "hadith sciences": 3,
    "adab": 4, "spiritual conduct": 4,
}


def normalize_category(name: str) -> str:
    key = re.sub(r"\s+", " ", name.replace("’", "'").replace("'", "")).strip().casefold()
    for i, full in enumerate(CATEGORIES):
        if key == full.casefold():
            return full
    m = re.fullmatch(r"(.+?)\s*\((.+)\)", key)
    parts = [m.group(1), m.group(2)] if m else [key]
    for p in parts:
        if p.strip() in _CATEGORY_ALIASES:
            return CATEGORIES[_CATEGORY_ALIASES[p.strip()]]
    raise ManifestError(f"unknown category {name!r}; expected one of {list(CATEGORIES)}")


def render_prompt(title: str) -> str:
    clean = re.sub(r"\s*[\r\n]+\s*", " ", title).strip()
    if not clean:
        raise ManifestError("prompt title is empty")
    return PROMPT_TEMPLATE.format(title=clean)


@dataclass(frozen=True)
class PromptRecord:
    id: int
    category: str
    title: str
    source_site: str = ""

    @property
    def rendered_prompt(self) -> str:
        return render_prompt(self.title)

    def to_dict(self) -> dict:
        return {"id": self.id, "category": self.category, "title": self.title, "source_site": self.source_site}


@dataclass(frozen=True)
class ResponseRecord:
    prompt_id: int
    model: str
    text: str = ""
    collected_at: str = ""
    metadata: dict = field(default_factory=dict)
    gap: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        if self.gap:
            return {"prompt_id": self.prompt_id, "model": self.model, "gap": True, "error": self.error,
                    "collected_at": self.collected_at}
        return {"prompt_id": self.prompt_id, "model": self.model, "text": self.text,
                "collected_at": self.collected_at, "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseRecord":
        if d.get("gap"):
            return cls(int(d["prompt_id"]), d["model"], collected_at=d.get("collected_at", ""), gap=True,
                       error=d.get("error", ""))
        if not isinstance(d.get("text"), str):
            raise DatasetError("response record without text")
        return cls(int(d["prompt_id"]), d["model"], d["text"], d.get("collected_at", ""), d.get("metadata") or {})


def _read_jsonl(path: Path, what: str) -> Iterable[tuple[int, dict]]:
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise DatasetError(f"cannot read {what} {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ManifestError(f"{path}:{n}: malformed line: {exc}") from None
        if not isinstance(obj, dict):
            raise ManifestError(f"{path}:{n}: expected an object")
        yield n, obj


def load_manifest(path: str | Path) -> list[PromptRecord]:
    path = Path(path)
    records: list[PromptRecord] = []
    seen: set[int] = set()
    for n, obj in _read_jsonl(path, "manifest"):
        try:
            pid = obj["id"]
            title = obj["title"]
            raw_cat = obj["category"]
        except KeyError as exc:
            raise ManifestError(f"{path}:{n}: missing field {exc}") from None
        if not isinstance(pid, int) or isinstance(pid, bool) or pid < 1:
            raise ManifestError(f"{path}:{n}: id must be a positive integer")
        if pid in seen:
            raise ManifestError(f"{path}:{n}: duplicate id {pid}")
        seen.add(pid)
        try:
            cat = normalize_category(raw_cat)
            render_prompt(title)
        except ManifestError as exc:
            raise ManifestError(f"{path}:{n}: {exc}") from None
        records.append(PromptRecord(pid, cat, title, obj.get("source_site", "")))
    records.sort(key=lambda r: r.id)
    if [r.id for r in records] != list(range(1, len(records) + 1)):
        missing = sorted(set(range(1, max(seen, default=0) + 1)) - seen)
        raise ManifestError(f"{path}: ids must be contiguous from 1; missing {missing}")
    return records


def save_manifest(records: Iterable[PromptRecord], path: str | Path) -> None:
    _atomic_write(Path(path), [r.to_dict() for r in sorted(records, key=lambda r: r.id)])


def _atomic_write(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    os.replace(tmp, path)


class Archive:
    """Responses keyed by (prompt_id, model); a successful response supersedes a gap."""

    def __init__(self, records: Iterable[ResponseRecord] = ()):
        self.responses: dict[tuple[int, str], ResponseRecord] = {}
        self.gaps: dict[tuple[int, str], ResponseRecord] = {}
        for r in records:
            self.add(r)

    def add(self, rec: ResponseRecord, *, strict: bool = False) -> None:
        key = (rec.prompt_id, rec.model)
        if rec.gap:
            if key not in self.responses:
                self.gaps[key] = rec
            return
        if strict and key in self.responses:
            raise DatasetError(f"duplicate response for prompt {rec.prompt_id} / {rec.model}")
        self.responses[key] = rec
        self.gaps.pop(key, None)

    def has(self, prompt_id: int, model: str) -> bool:
        return (prompt_id, model) in self.responses

    def get(self, prompt_id: int, model: str) -> ResponseRecord | None:
        return self.responses.get((prompt_id, model))

    @property
    def models(self) -> list[str]:
        return sorted({m for _, m in self.responses} | {m for _, m in self.gaps})

    def rows(self) -> list[ResponseRecord]:
        return sorted([*self.responses.values(), *self.gaps.values()], key=lambda r: (r.prompt_id, r.model))

    def __len__(self) -> int:
        return len(self.responses)


def load_archive(path: str | Path) -> Archive:
    path = Path(path)
    archive = Archive()
    for n, obj in _read_jsonl(path, "archive"):
        try:
            archive.add(ResponseRecord.from_dict(obj), strict=True)
        except (KeyError, ValueError, DatasetError) as exc:
            raise DatasetError(f"{path}:{n}: {exc}") from None
    return archive


def save_archive(archive: Archive, path: str | Path) -> None:
    _atomic_write(Path(path), [r.to_dict() for r in archive.rows()])


def collect_all(
    manifest: Sequence[PromptRecord],
    endpoints: Sequence[str],
    gateway,
    archive: Archive | None = None,
    archive_path: str | Path | None = None,
    workers: int = 4,
) -> Archive:
    """Fetch every missing (prompt, endpoint) pair; failures become gap entries.

    Each finished pair is appended to ``archive_path`` as it arrives, so an interrupted
    run resumes from what was saved. The file is rewritten in sorted order at the end.
    """
    archive = archive if archive is not None else Archive()
    todo = [(p, ep) for p in manifest for ep in endpoints if not archive.has(p.id, ep)]
    lock = threading.Lock()
    path = Path(archive_path) if archive_path else None

    def one(item):
        p, ep = item
        try:
            res = gateway.collect_response(ep, p.rendered_prompt)
            rec = ResponseRecord(p.id, ep, res.text, res.timestamp,
                                 {"latency": round(res.latency, 3), "endpoint": res.endpoint,
                                  "transcript": res.transcript_id})
        except FaithcheckError as exc:
            logger.warning("prompt %s on %s failed: %s", p.id, ep, exc)
            rec = ResponseRecord(p.id, ep, collected_at=datetime.now(timezone.utc).replace(microsecond=0).isoformat(),
                                 gap=True, error=f"{type(exc).__name__}: {exc}")
        with lock:
            archive.add(rec)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                with open(path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        return rec

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        done = list(pool.map(one, todo))
    if path is not None:
        save_archive(archive, path)
    if todo and all(r.gap for r in done):
        raise DatasetError(f"all {len(todo)} collection requests failed")
    return archive
