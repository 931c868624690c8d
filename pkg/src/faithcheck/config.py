"""Run configuration: thresholds, scoring constants, endpoints, paths.

Precedence is flags > config file > defaults; see ``load_run_config``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError


@dataclass(frozen=True)
class Thresholds:
    confirm: float = 0.85
    partial: float = 0.55

    def __post_init__(self):
        if not (0.0 <= self.partial < self.confirm <= 1.0):
            raise ConfigError(f"thresholds must satisfy 0 <= partial < confirm <= 1 (got {self.partial}, {self.confirm})")


@dataclass(frozen=True)
class ScoringConfig:
    refuted_deduction: float = 2.0
    unverified_deduction: float = 1.0
    partial_deduction: float = 0.5
    no_reference_cap: float = 2.0
    refuted_accuracy_cap: float = 2.0
    granularity: float = 1.0

    def __post_init__(self):
        if self.granularity not in (1.0, 0.5):
            raise ConfigError(f"granularity must be 1 or 0.5 (got {self.granularity})")


@dataclass(frozen=True)
class EndpointConfig:
    name: str
    base_url: str = ""
    model: str = ""
    credential_env: str | None = None
    timeout: float = 60.0
    rate_limit_rpm: float | None = None
    max_attempts: int = 3
    backoff: float = 1.0
    headers: dict[str, str] = field(default_factory=dict)
    kind: str = "live"  # live | mock
    settings: dict[str, Any] = field(default_factory=dict)  # temperature etc., recorded verbatim


_UNHASHED = ("corpus", "manifest", "archive", "output_dir", "mock_script", "retriever_fixture", "workers")


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None = None
    manifest: str | None = None
    archive: str | None = None
    output_dir: str = "out"
    mock_script: str | None = None
    retriever_fixture: str | None = None
    search_url: str | None = None
    endpoints: tuple[EndpointConfig, ...] = ()
    judge: str = "judge"
    chatbots: tuple[str, ...] = ()
    thresholds: Thresholds = Thresholds()
    scoring: ScoringConfig = ScoringConfig()
    seed: int = 7
    offline: bool = False
    workers: int = 4
    std_estimator: str = "sample"

    def endpoint(self, name: str) -> EndpointConfig:
        for ep in self.endpoints:
            if ep.name == name:
                return ep
        raise ConfigError(f"no endpoint named {name!r} in config")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        # paths and worker count do not change results, so they stay out of the hash
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def run_config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    data = dict(data or {})
    eps = data.pop("endpoints", []) or []
    names = [e.get("name") for e in eps]
    if len(set(names)) != len(names):
        raise ConfigError(f"endpoint names must be unique: {names}")
    endpoints = []
    for e in eps:
        ep = _build(EndpointConfig, e, f"endpoints.{e.get('name')}")
        if ep.timeout <= 0:
            raise ConfigError(f"endpoints.{ep.name}: timeout must be > 0")
        endpoints.append(ep)
    th = _build(Thresholds, data.pop("thresholds", {}) or {}, "thresholds")
    sc = _build(ScoringConfig, data.pop("scoring", {}) or {}, "scoring")
    if "chatbots" in data:
        data["chatbots"] = tuple(data["chatbots"])
    if base_dir is not None:
        for key in ("corpus", "manifest", "archive", "output_dir", "mock_script", "retriever_fixture"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str((base_dir / data[key]).resolve())
    cfg = _build(RunConfig, {**data, "endpoints": tuple(endpoints), "thresholds": th, "scoring": sc}, "config")
    if cfg.std_estimator not in ("sample", "population"):
        raise ConfigError("std_estimator must be 'sample' or 'population'")
    return cfg


def load_run_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    data: dict = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = path.parent
    cfg = run_config_from_dict(data, base)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if overrides:
        th = overrides.pop("thresholds", None)
        cfg = replace(cfg, **overrides)
        if th:
            cfg = replace(cfg, thresholds=Thresholds(**{**asdict(cfg.thresholds), **th}))
    return cfg
