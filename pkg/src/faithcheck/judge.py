"""Judge handle: every judge request goes through the gateway with a versioned prompt asset."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .errors import SchemaViolation
from .gateway import Gateway, StructuredResult, ToolRegistry, load_asset
from .verify import SemanticVerdict

log = logging.getLogger(__name__)

QUANT_RUBRIC = "prompts/quant_rubric.md"
QUAL_RUBRIC = "prompts/qual_compare.md"


def rubric_version(asset: str) -> str:
    first = load_asset(asset).splitlines()[0]
    return first.split(":", 1)[1].strip() if first.startswith("rubric-version:") else "unversioned"


@dataclass
class Judge:
    gateway: Gateway
    endpoint: str
    tools: ToolRegistry | None = None
    transcripts: list[str] = field(default_factory=list)

    def call(self, prompt_asset: str, user: str, schema_id: str, use_tools: bool = True) -> StructuredResult:
        """One structured request; a schema violation is retried once before it propagates."""
        system = load_asset(prompt_asset)
        tools = self.tools if use_tools else None
        try:
            result = self.gateway.complete_structured(self.endpoint, system, user, schema_id, tools)
        except SchemaViolation as exc:
            log.warning("judge output rejected, retrying once: %s", exc)
            result = self.gateway.complete_structured(self.endpoint, system, user, schema_id, tools)
        self.transcripts.append(result.transcript_id)
        return result

    def semantic_relation(self, claim: str, evidence: str, reference: str) -> SemanticVerdict:
        user = f"Reference: {reference}\nClaim: {claim}\nSource text:\n{evidence}"
        out = self.call("prompts/semantic_relation.md", user, "semantic_relation/1").output
        return SemanticVerdict(out["relation"], out.get("rationale", ""))

    def detect_references(self, essay: str, known: Sequence[str]) -> list[dict]:
        listed = "\n".join(f"- {k}" for k in known) or "- (none)"
        user = f"Known references:\n{listed}\n\nEssay:\n{essay}"
        return list(self.call("prompts/detect_references.md", user, "detect_references/1", use_tools=False)
                    .output["references"])

    def segment(self, paragraphs: Sequence[str]) -> dict:
        user = "\n\n".join(f"[{i + 1}] {p}" for i, p in enumerate(paragraphs))
        return self.call("prompts/segment.md", user, "segment/1", use_tools=False).output

    def score(self, user: str) -> StructuredResult:
        return self.call(QUANT_RUBRIC, user, "quant_scores/1")

    def compare(self, user: str) -> StructuredResult:
        return self.call(QUAL_RUBRIC, user, "qual_verdicts/1")
