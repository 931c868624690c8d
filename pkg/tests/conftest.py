import tempfile
from pathlib import Path

import pytest

from faithcheck.config import EndpointConfig
from faithcheck.corpus import load_corpus
from faithcheck.gateway import Gateway, MockScript, ToolRegistry, TranscriptArchive
from faithcheck.judge import Judge
from faithcheck.retrieval import StaticRetriever

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
ESSAYS = FIXTURES / "essays"


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def retriever():
    return StaticRetriever.from_file(FIXTURES / "retriever.json")


def make_gateway(script, tmp=None, **kw):
    eps = kw.pop("endpoints", None) or [EndpointConfig(name="judge", kind="mock")]
    if isinstance(script, dict):
        script = MockScript.from_dict(script)
    archive = TranscriptArchive(tmp or tempfile.mkdtemp())
    return Gateway(eps, script, archive, **kw)


@pytest.fixture
def acceptance_judge(corpus, retriever, tmp_path):
    gw = make_gateway(MockScript.load(FIXTURES / "mock_acceptance.yaml"), tmp_path, offline=True)
    yield Judge(gw, "judge", ToolRegistry(corpus, retriever))
    gw.close()


def essay(name: str) -> str:
    return (ESSAYS / name).read_text(encoding="utf-8")
