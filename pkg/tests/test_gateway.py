import json

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_gateway
from faithcheck.config import EndpointConfig
from faithcheck.errors import (GatewayConfigError, OfflineViolation, SchemaViolation, ScriptGapError,
                               ToolLoopExceeded, TransportError)
from faithcheck.gateway import (Gateway, MockScript, NetworkMonitor, RateLimiter, ToolRegistry, TranscriptArchive,
                                request_fingerprint)

SEM = "semantic_relation/1"
OK = {"relation": "supports", "rationale": "fits"}


class VirtualClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, dt):
        self.sleeps.append(dt)
        self.now += dt


def test_fingerprint_normalizes_whitespace_only():
    a = request_fingerprint("judge", SEM, "claim:  x\n\n y ")
    assert a == request_fingerprint("judge", SEM, "claim: x y")
    assert a != request_fingerprint("judge", SEM, "claim: x Y")
    assert a != request_fingerprint("judge", "segment/1", "claim: x y")
    assert len(a) == 16 and int(a, 16) >= 0


def test_selection_prefers_fingerprint_then_substring_then_wildcard():
    user = "Reference: Qur'an 2:282"
    script = MockScript.from_dict({"entries": [
        {"role": "judge", "output": {"relation": "unrelated", "rationale": "wild"}},
        {"role": "judge", "user_contains": ["2:282"], "output": {"relation": "contradicts", "rationale": "sub"}},
        {"role": "judge", "fingerprint": request_fingerprint("judge", SEM, user), "output": OK},
    ]})
    assert script.select("judge", SEM, "judge", user).turns[0]["output"] == OK
    assert script.select("judge", SEM, "judge", "about 2:282 too").turns[0]["output"]["rationale"] == "sub"
    assert script.select("judge", SEM, "judge", "other").turns[0]["output"]["rationale"] == "wild"


def test_times_limit_and_strict_gap():
    script = MockScript.from_dict({"entries": [{"role": "judge", "times": 1, "output": OK}]})
    script.select("judge", SEM, "judge", "a")
    with pytest.raises(ScriptGapError) as exc:
        script.select("judge", SEM, "judge", "a")
    assert exc.value.fingerprint == request_fingerprint("judge", SEM, "a")


def test_lenient_script_falls_back_to_default():
    script = MockScript.from_dict({"strict": False, "default": {"output": OK}, "entries": []})
    assert script.select("judge", SEM, "judge", "z").turns == [{"output": OK}]


def test_entry_without_response_rejected():
    with pytest.raises(GatewayConfigError):
        MockScript.from_dict({"entries": [{"role": "judge"}]})


def test_echo_collection(tmp_path):
    gw = make_gateway({"entries": [{"role": "chatbot", "echo": True}]}, tmp_path,
                      endpoints=[EndpointConfig(name="bot", kind="mock")])
    r = gw.collect_response("bot", "Write an essay on patience.")
    assert r.text == "Write an essay on patience." and r.endpoint == "bot"
    assert gw.archive.get(r.transcript_id)["response"] == r.text


def test_tool_round_returns_corpus_text(tmp_path, corpus):
    gw = make_gateway({"entries": [{"role": "judge", "turns": [
        {"tool_calls": [{"name": "quran_ayah", "arguments": {"surah": 49, "ayah": 13}}]}, {"output": OK}]}]}, tmp_path)
    res = gw.complete_structured("judge", "sys", "u", SEM, tools=ToolRegistry(corpus))
    assert res.rounds == 2 and res.output == OK
    tool_msgs = [m for m in res.transcript["messages"] if m["role"] == "tool"]
    assert len(tool_msgs) == 1 and "O mankind" in tool_msgs[0]["content"]


def test_single_turn_is_one_round(tmp_path):
    res = make_gateway({"entries": [{"output": OK}]}, tmp_path).complete_structured("judge", "s", "u", SEM)
    assert res.rounds == 1


def test_tool_errors_are_reported_to_the_model(corpus):
    tools = ToolRegistry(corpus)
    assert tools.dispatch("quran_ayah", {"surah": 115, "ayah": 1}).startswith("ERROR")
    assert tools.dispatch("quran_ayah", {"surah": "x"}).startswith("ERROR")
    assert tools.dispatch("nope", {}).startswith("ERROR")
    assert json.loads(tools.dispatch("internet_search", {"query": "anything"})) == []


def test_loop_cap(tmp_path, corpus):
    gw = make_gateway({"entries": [{"turns": [{"tool_calls": [{"name": "quran_ayah", "arguments": {"surah": 1, "ayah": 1}}]}]}]},
                      tmp_path, loop_cap=3)
    with pytest.raises(ToolLoopExceeded):
        gw.complete_structured("judge", "s", "u", SEM, tools=ToolRegistry(corpus))


@pytest.mark.parametrize("output", [{"relation": "maybe", "rationale": ""}, "not json"])
def test_schema_violation_is_archived(tmp_path, output):
    gw = make_gateway({"entries": [{"output": output}]}, tmp_path)
    with pytest.raises(SchemaViolation, match="transcript"):
        gw.complete_structured("judge", "s", "u", SEM)
    assert list(tmp_path.rglob("*.json"))


def test_transcripts_are_content_addressed(tmp_path):
    gw = make_gateway({"entries": [{"output": OK}]}, tmp_path)
    a = gw.complete_structured("judge", "s", "u", SEM)
    b = gw.complete_structured("judge", "s", "u", SEM)
    assert a.transcript_id == b.transcript_id
    assert len(list(tmp_path.rglob("*.json"))) == 1


# ---------------------------------------------------------------- rate limiting

def test_two_rpm_delays_third_call():
    clock = VirtualClock()
    lim = RateLimiter(2, clock, clock.sleep)
    times = [lim.acquire() for _ in range(3)]
    assert times[:2] == [0.0, 0.0] and times[2] == 60.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.lists(st.floats(0, 30), min_size=1, max_size=25))
def test_rate_window_never_exceeded(rpm, gaps):
    clock = VirtualClock()
    lim = RateLimiter(rpm, clock, clock.sleep)
    admitted = []
    for g in gaps:
        clock.now += g
        admitted.append(lim.acquire())
    for t in admitted:
        assert sum(1 for u in admitted if t <= u < t + 60 - 1e-6) <= rpm
    assert admitted == sorted(admitted)


def test_mock_calls_are_rate_limited(tmp_path):
    clock = VirtualClock()
    gw = make_gateway({"entries": [{"output": OK}]}, tmp_path, clock=clock, sleep=clock.sleep,
                      endpoints=[EndpointConfig(name="judge", kind="mock", rate_limit_rpm=1)])
    gw.complete_structured("judge", "s", "a", SEM)
    gw.complete_structured("judge", "s", "b", SEM)
    assert clock.sleeps == [60.0]


# ---------------------------------------------------------------- live transport

def _live(handler, tmp_path, **kw):
    ep = EndpointConfig(name="live", base_url="https://llm.example/v1", model="m", credential_env="TOKEN",
                        max_attempts=3, backoff=0.5, **kw)
    slept = []
    gw = Gateway([ep], archive=TranscriptArchive(tmp_path), transport=httpx.MockTransport(handler),
                 sleep=slept.append, environ={"TOKEN": "sk-secret-123"})
    return gw, slept


def _completion(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_retry_after_429(tmp_path):
    calls = []

    def handler(req):
        calls.append(req)
        return httpx.Response(429) if len(calls) == 1 else _completion(json.dumps(OK))
    gw, slept = _live(handler, tmp_path)
    res = gw.complete_structured("live", "s", "u", SEM)
    assert res.output == OK and len(calls) == 2 and slept == [0.5]
    assert calls[0].headers["authorization"] == "Bearer sk-secret-123"
    body = json.loads(calls[1].content)
    assert body["response_format"]["type"] == "json_schema"
    assert gw.monitor.count == 2


def test_auth_failure_not_retried(tmp_path):
    calls = []

    def handler(req):
        calls.append(req)
        return httpx.Response(401)
    gw, _ = _live(handler, tmp_path)
    with pytest.raises(TransportError, match="authentication"):
        gw.complete_structured("live", "s", "u", SEM)
    assert len(calls) == 1


def test_persistent_5xx_gives_up(tmp_path):
    gw, slept = _live(lambda req: httpx.Response(503), tmp_path)
    with pytest.raises(TransportError, match="giving up"):
        gw.collect_response("live", "p")
    assert slept == [0.5, 1.0]


def test_credentials_never_reach_transcripts(tmp_path):
    gw, _ = _live(lambda req: _completion("echo sk-secret-123 back"), tmp_path)
    gw.collect_response("live", "prompt")
    for f in tmp_path.rglob("*.json"):
        assert "sk-secret-123" not in f.read_text()


def test_missing_credential_fails_before_network():
    monitor = NetworkMonitor()
    ep = EndpointConfig(name="live", base_url="https://x", credential_env="ABSENT_TOKEN")
    with pytest.raises(GatewayConfigError, match="ABSENT_TOKEN"):
        Gateway([ep], monitor=monitor, environ={})
    assert monitor.count == 0


def test_offline_blocks_live_endpoints(tmp_path):
    ep = EndpointConfig(name="live", base_url="https://x")
    gw = Gateway([ep], archive=TranscriptArchive(tmp_path), offline=True, environ={})
    with pytest.raises(OfflineViolation):
        gw.collect_response("live", "p")
    assert gw.monitor.count == 0


def test_monitor_refuses_requests_when_offline():
    m = NetworkMonitor(offline=True)
    with pytest.raises(OfflineViolation):
        m.record(httpx.Request("GET", "https://example.org"))


def test_duplicate_endpoint_names():
    with pytest.raises(GatewayConfigError):
        Gateway([EndpointConfig(name="a", kind="mock"), EndpointConfig(name="a", kind="mock")])
