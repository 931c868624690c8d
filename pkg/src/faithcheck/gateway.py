"""Single boundary for model traffic: judge calls with schemas and tools, chatbot collection.

Live endpoints speak a chat-completions dialect over HTTPS. Mock endpoints replay a
script keyed by a request fingerprint so whole pipeline runs are reproducible.
"""
from __future__ import annotations

import collections
import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx
import jsonschema
import yaml

from .config import EndpointConfig
from .corpus import AyahRef, CorpusIndex, lookup_ayah, render_ayah
from .errors import (CorpusError, GatewayConfigError, GatewayError, OfflineViolation, SchemaViolation,
                     ScriptGapError, ToolLoopExceeded, TransportError)
from .retrieval import EvidenceRetriever, OfflineRetriever, RetrieverError

log = logging.getLogger(__name__)

DEFAULT_LOOP_CAP = 8
TOOLS_VERSION = "tools/1"


# ---------------------------------------------------------------- network accounting

class NetworkMonitor:
    """Counts outbound requests; when ``offline`` is set any request raises instead."""

    def __init__(self, offline: bool = False):
        self.offline = offline
        self.count = 0
        self._lock = threading.Lock()

    def record(self, request: httpx.Request) -> None:
        with self._lock:
            if self.offline:
                raise OfflineViolation(f"network access attempted in offline mode: {request.method} {request.url.host}")
            self.count += 1


class CountingTransport(httpx.BaseTransport):
    def __init__(self, monitor: NetworkMonitor, inner: httpx.BaseTransport | None = None):
        self.monitor = monitor
        self.inner = inner or httpx.HTTPTransport()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        self.monitor.record(request)
        return self.inner.handle_request(request)

    def close(self) -> None:
        self.inner.close()


# ---------------------------------------------------------------- rate limiting

class RateLimiter:
    """Sliding one-minute window: at most ``rpm`` admissions in any 60 s span."""

    def __init__(self, rpm: float | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep, window: float = 60.0):
        self.rpm = int(rpm) if rpm else None
        self.clock = clock
        self.sleep = sleep
        self.window = window
        self.admitted: collections.deque[float] = collections.deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until admitted; returns the admission time."""
        if not self.rpm:
            return self.clock()
        with self._lock:
            while True:
                now = self.clock()
                while self.admitted and self.admitted[0] + self.window <= now:
                    self.admitted.popleft()
                if len(self.admitted) < self.rpm:
                    self.admitted.append(now)
                    return now
                self.sleep(self.admitted[0] + self.window - now)
                # the oldest slot has now expired; float rounding must not make us wait again
                self.admitted.popleft()


# ---------------------------------------------------------------- schemas

_ASSETS = resources.files("faithcheck") / "assets"


def load_asset(name: str) -> str:
    return (_ASSETS / name).read_text(encoding="utf-8")


class SchemaRegistry:
    def __init__(self, schemas: Mapping[str, dict] | None = None):
        self.schemas: dict[str, dict] = dict(schemas or {})

    @classmethod
    def bundled(cls) -> "SchemaRegistry":
        out = {}
        for entry in sorted((_ASSETS / "schemas").iterdir(), key=lambda p: p.name):
            if entry.name.endswith(".json"):
                doc = json.loads(entry.read_text(encoding="utf-8"))
                out[doc["$id"]] = doc
        return cls(out)

    def get(self, schema_id: str) -> dict:
        try:
            return self.schemas[schema_id]
        except KeyError:
            raise GatewayConfigError(f"schema {schema_id!r} is not registered") from None

    def validate(self, schema_id: str, value: Any) -> None:
        try:
            jsonschema.validate(value, self.get(schema_id))
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise SchemaViolation(f"output violates {schema_id} at /{path}: {exc.message}") from None


# ---------------------------------------------------------------- tools

class ToolRegistry:
    """quran_ayah backed by the corpus; internet_search/extract backed by a retriever."""

    version = TOOLS_VERSION

    def __init__(self, corpus: CorpusIndex, retriever: EvidenceRetriever | None = None):
        self.corpus = corpus
        self.retriever = retriever or OfflineRetriever()

    def specs(self) -> list[dict]:
        def fn(name, desc, props, required):
            return {"type": "function", "function": {
                "name": name, "description": desc,
                "parameters": {"type": "object", "properties": props, "required": required,
                               "additionalProperties": False}}}
        return [
            fn("quran_ayah", "Fetch the Arabic text and translations of one ayah.",
               {"surah": {"type": "integer"}, "ayah": {"type": "integer"}}, ["surah", "ayah"]),
            fn("internet_search", "Search the web; returns ranked title/url/snippet results.",
               {"query": {"type": "string"}}, ["query"]),
            fn("internet_extract", "Fetch the readable text of a web page.",
               {"url": {"type": "string"}}, ["url"]),
        ]

    def dispatch(self, name: str, args: Mapping[str, Any]) -> str:
        try:
            if name == "quran_ayah":
                ref = AyahRef(int(args["surah"]), int(args["ayah"]))
                return render_ayah(lookup_ayah(self.corpus, ref))
            if name == "internet_search":
                docs = self.retriever.search(str(args["query"]))
                return json.dumps([{"title": d.title, "url": d.url, "snippet": d.snippet} for d in docs],
                                  ensure_ascii=False)
            if name == "internet_extract":
                return self.retriever.extract(str(args["url"]))
        except (CorpusError, RetrieverError) as exc:
            return f"ERROR: {exc}"
        except (KeyError, TypeError, ValueError) as exc:
            return f"ERROR: bad arguments for {name}: {exc}"
        return f"ERROR: unknown tool {name!r}"


# ---------------------------------------------------------------- transcripts

class TranscriptArchive:
    """Append-only, content-addressed store: ``<root>/<id[:2]>/<id>.json``."""

    def __init__(self, root: str | Path, secrets: Sequence[str] = ()):
        self.root = Path(root)
        self.secrets = [s for s in secrets if s]

    def _scrub(self, blob: str) -> str:
        for s in self.secrets:
            blob = blob.replace(s, "***")
        return blob

    def put(self, record: Mapping[str, Any]) -> str:
        blob = self._scrub(json.dumps(record, ensure_ascii=False, sort_keys=True, indent=1)) + "\n"
        tid = hashlib.sha256(blob.encode()).hexdigest()
        path = self.root / tid[:2] / f"{tid}.json"
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
            tmp.write_text(blob, encoding="utf-8")
            os.replace(tmp, path)
        return tid

    def get(self, tid: str) -> dict:
        return json.loads((self.root / tid[:2] / f"{tid}.json").read_text(encoding="utf-8"))


def transcript_id(record: Mapping[str, Any]) -> str:
    blob = json.dumps(record, ensure_ascii=False, sort_keys=True, indent=1) + "\n"
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- mock script

def normalize_user_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def request_fingerprint(role: str, schema_id: str | None, user: str) -> str:
    blob = json.dumps([role, schema_id or "", normalize_user_text(user)], ensure_ascii=False)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ScriptEntry:
    turns: list[dict]
    role: str | None = None
    schema_id: str | None = None
    endpoint: str | None = None
    fingerprint: str | None = None
    user_contains: tuple[str, ...] = ()
    times: int | None = None
    echo: bool = False
    used: int = 0

    def matches(self, role: str, schema_id: str | None, endpoint: str, fp: str, user: str) -> bool:
        if self.role is not None and self.role != role:
            return False
        if self.schema_id is not None and self.schema_id != schema_id:
            return False
        if self.endpoint is not None and self.endpoint != endpoint:
            return False
        if self.fingerprint is not None and self.fingerprint != fp:
            return False
        norm = normalize_user_text(user)
        return all(normalize_user_text(s) in norm for s in self.user_contains)

    @property
    def specificity(self) -> int:
        return 2 if self.fingerprint else 1 if self.user_contains else 0


class MockScript:
    """Scripted responses. File format (JSON or YAML)::

        strict: true
        default: {output: {...}}          # used only when strict is false
        entries:
          - role: judge
            schema_id: semantic_relation/1
            user_contains: ["Qur'an 2:282"]     # or fingerprint: <16 hex>
            times: 1                             # optional use limit
            turns:                               # one item per model round
              - tool_calls: [{name: quran_ayah, arguments: {surah: 2, ayah: 282}}]
              - output: {relation: contradicts, rationale: ...}
          - role: chatbot
            echo: true

    Entries are tried most specific first (fingerprint, then substring, then wildcard),
    file order within a class; an entry is skipped once it has been used ``times`` times.
    """

    def __init__(self, entries: Sequence[ScriptEntry], strict: bool = True, default: dict | None = None):
        self.entries = list(entries)
        self.strict = strict
        self.default = default
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MockScript":
        entries = []
        for i, e in enumerate(doc.get("entries", [])):
            turns = e.get("turns")
            if turns is None:
                turns = [{k: e[k] for k in ("output", "text", "tool_calls") if k in e}]
            if not e.get("echo") and not all(turns):
                raise GatewayConfigError(f"mock script entry {i} has no response")
            entries.append(ScriptEntry(
                turns=list(turns), role=e.get("role"), schema_id=e.get("schema_id"), endpoint=e.get("endpoint"),
                fingerprint=e.get("fingerprint"), user_contains=tuple(e.get("user_contains", ())),
                times=e.get("times"), echo=bool(e.get("echo", False))))
        return cls(entries, strict=doc.get("strict", True), default=doc.get("default"))

    @classmethod
    def load(cls, path: str | Path) -> "MockScript":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
            doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (OSError, ValueError, yaml.YAMLError) as exc:
            raise GatewayConfigError(f"cannot read mock script {path}: {exc}") from None
        return cls.from_dict(doc or {})

    def select(self, role: str, schema_id: str | None, endpoint: str, user: str) -> ScriptEntry:
        fp = request_fingerprint(role, schema_id, user)
        with self._lock:
            self.calls += 1
            ranked = sorted(range(len(self.entries)), key=lambda i: (-self.entries[i].specificity, i))
            for i in ranked:
                e = self.entries[i]
                if e.times is not None and e.used >= e.times:
                    continue
                if e.matches(role, schema_id, endpoint, fp, user):
                    e.used += 1
                    return e
        if self.strict or self.default is None:
            raise ScriptGapError(fp, role, schema_id)
        return ScriptEntry(turns=[self.default])


# ---------------------------------------------------------------- backends

class Conversation:
    def step(self, messages: list[dict], tools: list[dict] | None, schema: dict | None) -> dict:
        raise NotImplementedError


class MockConversation(Conversation):
    def __init__(self, entry: ScriptEntry, user: str):
        self.entry = entry
        self.user = user
        self.turn = 0

    def step(self, messages, tools, schema):
        if self.entry.echo:
            return {"role": "assistant", "content": self.user}
        turns = self.entry.turns
        scripted = turns[min(self.turn, len(turns) - 1)]
        self.turn += 1
        if "tool_calls" in scripted:
            calls = [{"id": f"call_{self.turn}_{k}", "type": "function",
                      "function": {"name": c["name"], "arguments": json.dumps(c.get("arguments", {}), sort_keys=True)}}
                     for k, c in enumerate(scripted["tool_calls"])]
            return {"role": "assistant", "content": None, "tool_calls": calls}
        if "output" in scripted:
            content = scripted["output"] if isinstance(scripted["output"], str) else json.dumps(scripted["output"], ensure_ascii=False, sort_keys=True)
            return {"role": "assistant", "content": content}
        return {"role": "assistant", "content": scripted.get("text", "")}


class HttpConversation(Conversation):
    def __init__(self, gateway: "Gateway", endpoint: EndpointConfig):
        self.gateway = gateway
        self.endpoint = endpoint

    def step(self, messages, tools, schema):
        ep = self.endpoint
        body: dict[str, Any] = {"model": ep.model, "messages": messages, **ep.settings}
        if tools:
            body["tools"] = tools
        if schema is not None:
            body["response_format"] = {"type": "json_schema",
                                       "json_schema": {"name": re.sub(r"\W", "_", schema.get("$id", "output")),
                                                       "schema": schema}}
        data = self.gateway._post(ep, body)
        try:
            return data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"{ep.name}: malformed completion response") from None


# ---------------------------------------------------------------- gateway

@dataclass(frozen=True)
class StructuredResult:
    output: Any
    transcript_id: str
    rounds: int
    transcript: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class CollectedResponse:
    text: str
    latency: float
    timestamp: str
    endpoint: str
    transcript_id: str | None = None


class Gateway:
    def __init__(
        self,
        endpoints: Sequence[EndpointConfig],
        mock_script: MockScript | None = None,
        archive: TranscriptArchive | None = None,
        offline: bool = False,
        force_mock: bool = False,
        schemas: SchemaRegistry | None = None,
        monitor: NetworkMonitor | None = None,
        transport: httpx.BaseTransport | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        loop_cap: int = DEFAULT_LOOP_CAP,
        environ: Mapping[str, str] | None = None,
    ):
        names = [e.name for e in endpoints]
        if len(set(names)) != len(names):
            raise GatewayConfigError(f"endpoint names must be unique: {names}")
        self.endpoints = {e.name: e for e in endpoints}
        self.mock_script = mock_script
        self.offline = offline
        self.force_mock = force_mock
        self.schemas = schemas or SchemaRegistry.bundled()
        self.monitor = monitor or NetworkMonitor(offline)
        self.sleep = sleep
        self.clock = clock
        self.loop_cap = loop_cap
        self.limiters = {e.name: RateLimiter(e.rate_limit_rpm, clock, sleep) for e in endpoints}
        env = os.environ if environ is None else environ
        self._credentials: dict[str, str] = {}
        for ep in endpoints:
            if ep.timeout <= 0:
                raise GatewayConfigError(f"{ep.name}: timeout must be > 0")
            if self._is_mock(ep):
                continue
            if ep.credential_env:
                value = env.get(ep.credential_env)
                if not value:
                    raise GatewayConfigError(f"{ep.name}: credential variable {ep.credential_env} is not set")
                self._credentials[ep.name] = value
        self.archive = archive
        if archive is not None:
            archive.secrets = list(archive.secrets) + list(self._credentials.values())
        self.client = httpx.Client(transport=CountingTransport(self.monitor, transport))

    def close(self) -> None:
        self.client.close()

    def _is_mock(self, ep: EndpointConfig) -> bool:
        return self.force_mock or ep.kind == "mock"

    def endpoint(self, name: str) -> EndpointConfig:
        try:
            return self.endpoints[name]
        except KeyError:
            raise GatewayConfigError(f"unknown endpoint {name!r}") from None

    def _open(self, ep: EndpointConfig, role: str, schema_id: str | None, user: str) -> Conversation:
        if self._is_mock(ep):
            if self.mock_script is None:
                raise GatewayConfigError(f"{ep.name}: mock endpoint without a mock script")
            return MockConversation(self.mock_script.select(role, schema_id, ep.name, user), user)
        if self.offline:
            raise OfflineViolation(f"{ep.name}: live endpoint called in offline mode")
        return HttpConversation(self, ep)

    def _post(self, ep: EndpointConfig, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        cred = self._credentials.get(ep.name)
        if cred:
            headers["Authorization"] = f"Bearer {cred}"
        for k, v in ep.headers.items():
            headers[k] = v.replace("{credential}", cred or "")
        url = ep.base_url.rstrip("/") + "/chat/completions"
        last: Exception | None = None
        for attempt in range(max(1, ep.max_attempts)):
            self.limiters[ep.name].acquire()
            try:
                resp = self.client.post(url, json=body, headers=headers, timeout=ep.timeout)
            except OfflineViolation:
                raise
            except httpx.HTTPError as exc:
                last = exc
            else:
                if resp.status_code in (401, 403):
                    raise TransportError(f"{ep.name}: authentication failed (HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = TransportError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"{ep.name}: HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()
                    except ValueError:
                        raise TransportError(f"{ep.name}: response is not JSON") from None
            if attempt + 1 < ep.max_attempts:
                self.sleep(ep.backoff * (2 ** attempt))
        raise TransportError(f"{ep.name}: giving up after {ep.max_attempts} attempts: {last}")

    def _step(self, ep: EndpointConfig, conv: Conversation, messages, specs, schema) -> dict:
        # live requests are admitted per HTTP attempt inside _post
        if self._is_mock(ep):
            self.limiters[ep.name].acquire()
        return conv.step(messages, specs, schema)

    def _archive(self, record: dict) -> str:
        if self.archive is not None:
            return self.archive.put(record)
        return transcript_id(record)

    def complete_structured(
        self,
        endpoint: str,
        system: str,
        user: str,
        schema_id: str,
        tools: ToolRegistry | None = None,
        role: str = "judge",
    ) -> StructuredResult:
        """Run the tool loop until a schema-valid answer, archiving the exchange either way."""
        ep = self.endpoint(endpoint)
        schema = self.schemas.get(schema_id)
        conv = self._open(ep, role, schema_id, user)
        messages: list[dict] = [{"role": "system", "content": system}, {"role": "user", "content": user}]
        specs = tools.specs() if tools else None
        rounds = 0
        record = {"kind": "structured", "endpoint": ep.name, "model": ep.model, "settings": ep.settings,
                  "role": role, "schema_id": schema_id, "tools_version": TOOLS_VERSION if tools else None,
                  "fingerprint": request_fingerprint(role, schema_id, user), "messages": messages}
        while True:
            if rounds >= self.loop_cap:
                record["error"] = "tool loop cap exceeded"
                tid = self._archive(record)
                raise ToolLoopExceeded(f"{ep.name}: no final answer after {self.loop_cap} rounds (transcript {tid})")
            msg = self._step(ep, conv, messages, specs, schema)
            rounds += 1
            messages.append(msg)
            calls = msg.get("tool_calls") or []
            if not calls:
                break
            for call in calls:
                fn = call.get("function", {})
                try:
                    args = json.loads(fn.get("arguments") or "{}")
                except ValueError:
                    args = {}
                result = tools.dispatch(fn.get("name", ""), args) if tools else "ERROR: no tools available"
                messages.append({"role": "tool", "tool_call_id": call.get("id"), "content": result})
        content = msg.get("content") or ""
        try:
            output = json.loads(content)
        except ValueError:
            record["error"] = "final answer is not JSON"
            tid = self._archive(record)
            raise SchemaViolation(f"{ep.name}: final answer is not JSON (transcript {tid})") from None
        try:
            self.schemas.validate(schema_id, output)
        except SchemaViolation as exc:
            record["error"] = str(exc)
            tid = self._archive(record)
            raise SchemaViolation(f"{exc} (transcript {tid})") from None
        record["output"] = output
        record["rounds"] = rounds
        tid = self._archive(record)
        return StructuredResult(output, tid, rounds, record)

    def collect_response(self, endpoint: str, prompt: str) -> CollectedResponse:
        ep = self.endpoint(endpoint)
        conv = self._open(ep, "chatbot", None, prompt)
        started = self.clock()
        when = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        msg = self._step(ep, conv, [{"role": "user", "content": prompt}], None, None)
        latency = self.clock() - started
        text = msg.get("content") or ""
        tid = self._archive({"kind": "collection", "endpoint": ep.name, "model": ep.model,
                             "settings": ep.settings, "prompt": prompt, "response": text})
        return CollectedResponse(text, latency, when, ep.name, tid)
