"""Exception hierarchy. Every error carries the module that raised it so the CLI can report it."""
from __future__ import annotations


class FaithcheckError(Exception):
    module = "faithcheck"


class CorpusError(FaithcheckError):
    module = "corpus"

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class CorpusSchemaError(CorpusError):
    pass


class DuplicateAyahError(CorpusError):
    pass


class AyahCountMismatch(CorpusError):
    pass


class InvalidSurahError(CorpusError, LookupError):
    pass


class InvalidAyahError(CorpusError, LookupError):
    pass


class UnknownSurahName(CorpusError, LookupError):
    pass


class AmbiguousSurahAlias(CorpusError):
    pass


class EmptyQuoteError(CorpusError, ValueError):
    pass


class RefParseError(FaithcheckError, ValueError):
    module = "refparse"


class VerificationError(FaithcheckError):
    module = "verify"


class MixedPromptIds(VerificationError, ValueError):
    pass


class GatewayError(FaithcheckError):
    module = "llm_gateway"


class GatewayConfigError(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class SchemaViolation(GatewayError):
    pass


class ToolLoopExceeded(GatewayError):
    pass


class ScriptGapError(GatewayError):
    def __init__(self, fingerprint: str, role: str, schema_id: str | None):
        self.fingerprint = fingerprint
        super().__init__(f"mock script has no entry for role={role!r} schema={schema_id!r} fingerprint={fingerprint}")


class OfflineViolation(GatewayError):
    pass


class QuantError(FaithcheckError):
    module = "quant_agent"


class QualError(FaithcheckError):
    module = "qual_agent"


class VerdictValidationError(QualError, ValueError):
    pass


class DatasetError(FaithcheckError):
    module = "dataset"


class ManifestError(DatasetError, ValueError):
    pass


class ReportError(FaithcheckError):
    module = "report"


class ConfigError(FaithcheckError):
    module = "cli"
