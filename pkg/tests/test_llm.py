import json
import time

import pydantic
import pytest

from effscript.llm import (
    BackendError,
    ConfigurationError,
    LiveLLMHandler,
    LLMCallRecord,
    MockLLMHandler,
    MockRuleMissing,
    RecordingLLMHandler,
    ReplayExhausted,
    ReplayLLMHandler,
    ReplayMismatch,
    SchemaValidationError,
    Trace,
    TraceFormatError,
    canonical_json,
    complete,
    parse,
    register_schema,
)
from effscript.runtime import AsyncHandler, VirtualClock, await_


@register_schema
class Pair(pydantic.BaseModel):
    left: int
    right: int


def test_mock_mapping_and_callable():
    with AsyncHandler(), MockLLMHandler({"hi": "hello"}):
        assert await_(complete("hi")) == "hello"
    rule = lambda kind, prompt, schema: prompt.upper()
    with AsyncHandler(), MockLLMHandler(rule) as m:
        assert await_(complete("abc")) == "ABC"
        assert m.calls == 1


def test_mock_missing_rule_fails_future():
    with AsyncHandler(), MockLLMHandler({}):
        with pytest.raises(MockRuleMissing):
            await_(complete("unknown"))


def test_mock_default():
    with AsyncHandler(), MockLLMHandler({}, default="fallback"):
        assert await_(complete("anything")) == "fallback"


def test_parse_validates_schema():
    with AsyncHandler(), MockLLMHandler({"p": {"left": 1, "right": 2}}):
        value = await_(parse("p", Pair))
    assert value == Pair(left=1, right=2)


def test_parse_schema_violation():
    with AsyncHandler(), MockLLMHandler({"p": '{"left": "x"}'}):
        with pytest.raises(SchemaValidationError):
            await_(parse("p", Pair))


def test_mock_latency_overlaps_on_virtual_clock():
    clock = VirtualClock()
    with AsyncHandler(clock), MockLLMHandler(lambda k, p, s: p, latency_ms=200):
        futs = [complete(str(i)) for i in range(10)]
        assert [await_(f) for f in futs] == [str(i) for i in range(10)]
    assert clock.now() == pytest.approx(0.2)


def test_mock_jitter_is_seeded():
    def latencies(seed):
        m = MockLLMHandler(lambda k, p, s: p, latency_ms=100, jitter=0.5, seed=seed)
        return [m.prepare("complete", "x", None) for _ in range(5)]

    assert latencies(3) == latencies(3)
    assert all(50 <= x <= 150 for x in latencies(3))


def record_run(prompts, responses):
    trace = Trace()
    with AsyncHandler(VirtualClock()), MockLLMHandler(responses, latency_ms=10):
        with RecordingLLMHandler(trace, model="mock"):
            futs = [complete(p) if not isinstance(p, tuple) else parse(p[0], p[1]) for p in prompts]
            values = [await_(f) for f in futs]
    return trace, values


def test_record_then_replay_roundtrip(tmp_path):
    responses = {"a": "A", "b": "B", "pair": {"right": 2, "left": 1}}
    trace, values = record_run(["a", ("pair", Pair), "b"], responses)
    assert [r.seq for r in trace.records] == [0, 1, 2]
    assert trace.records[1].response == canonical_json({"left": 1, "right": 2})
    assert trace.records[1].schema_id == "Pair"
    assert trace.records[0].latency_ms == pytest.approx(10.0)
    path = tmp_path / "t.jsonl"
    trace.save(path)
    loaded = Trace.load(path)
    assert loaded == trace
    with AsyncHandler(), ReplayLLMHandler(loaded, strict=True):
        replayed = [await_(complete("a")), await_(parse("pair", Pair)), await_(complete("b"))]
    assert replayed == values


def test_recorded_seq_follows_initiation_not_completion():
    responses = {"slow": "S", "fast": "F"}
    trace = Trace()

    def rule(kind, prompt, schema):
        return responses[prompt]

    with AsyncHandler(VirtualClock()):
        with MockLLMHandler(rule) as mock:
            mock.prepare = lambda kind, prompt, schema: 50 if prompt == "slow" else 1
            with RecordingLLMHandler(trace, model="mock"):
                a = complete("slow")
                b = complete("fast")
                await_(a), await_(b)
    assert [r.prompt for r in trace.records] == ["slow", "fast"]


def test_replay_strict_mismatch():
    trace, _ = record_run(["a"], {"a": "A"})
    with AsyncHandler(), ReplayLLMHandler(trace, strict=True):
        with pytest.raises(ReplayMismatch):
            await_(complete("different"))


def test_replay_lenient_serves_in_order():
    trace, _ = record_run(["a"], {"a": "A"})
    with AsyncHandler(), ReplayLLMHandler(trace):
        assert await_(complete("different")) == "A"


def test_replay_exhausted():
    trace, _ = record_run(["a"], {"a": "A"})
    with AsyncHandler(), ReplayLLMHandler(trace):
        await_(complete("a"))
        with pytest.raises(ReplayExhausted):
            await_(complete("a"))


def test_failed_calls_are_not_recorded():
    trace = Trace()
    with AsyncHandler(), MockLLMHandler({"ok": "fine"}):
        with RecordingLLMHandler(trace):
            bad = complete("missing")
            good = complete("ok")
            with pytest.raises(MockRuleMissing):
                await_(bad)
            assert await_(good) == "fine"
    assert [(r.seq, r.prompt) for r in trace.records] == [(0, "ok")]


GOOD = {"seq": 0, "kind": "complete", "prompt": "p", "schema_id": None, "response": "r", "model": "m", "latency_ms": 1.5}


@pytest.mark.parametrize(
    "line, fragment",
    [
        ('{"seq": 0', "invalid JSON"),
        ("[1, 2]", "not a JSON object"),
        (json.dumps({**GOOD, "extra": 1}), "keys must be exactly"),
        (json.dumps({**GOOD, "kind": "chat"}), "unknown kind"),
        (json.dumps({**GOOD, "schema_id": "Pair"}), "schema_id"),
        (json.dumps({**GOOD, "latency_ms": -1}), "latency_ms"),
        (json.dumps({**GOOD, "seq": 5}), "expected seq 0"),
        (json.dumps({**GOOD, "prompt": 3}), "prompt must be a string"),
    ],
)
def test_trace_format_errors(line, fragment):
    with pytest.raises(TraceFormatError, match=fragment) as info:
        Trace.loads(line + "\n")
    assert info.value.line == 1


def test_trace_error_reports_offending_line():
    text = json.dumps(GOOD) + "\n\n" + '{"broken"\n'
    with pytest.raises(TraceFormatError) as info:
        Trace.loads(text)
    assert info.value.line == 3


def test_record_from_json_roundtrip():
    rec = LLMCallRecord.from_json(GOOD)
    assert Trace([rec]).dumps() == json.dumps(GOOD) + "\n"


# -- live backend against a local stub -----------------------------------------


def test_live_complete_and_parse(stub_chat):
    stub_chat.reply = lambda body: '{"left": 3, "right": 4}' if "response_format" in body else "plain"
    with AsyncHandler(), LiveLLMHandler(base_url=stub_chat.url, api_key="k", model="m1"):
        assert await_(complete("hello")) == "plain"
        assert await_(parse("pair please", Pair)) == Pair(left=3, right=4)
    first, second = stub_chat.requests
    assert first["path"] == "/v1/chat/completions"
    assert first["auth"] == "Bearer k"
    assert first["body"]["model"] == "m1"
    assert first["body"]["messages"] == [{"role": "user", "content": "hello"}]
    fmt = second["body"]["response_format"]
    assert fmt["type"] == "json_schema" and fmt["json_schema"]["name"] == "Pair"


def test_live_requests_overlap(stub_chat):
    stub_chat.delay = 0.1
    start = time.monotonic()
    with AsyncHandler(), LiveLLMHandler(base_url=stub_chat.url):
        futs = [complete(f"q{i}") for i in range(8)]
        assert [await_(f) for f in futs] == [f"echo: q{i}" for i in range(8)]
    assert time.monotonic() - start <= 0.2 + 0.15  # one latency plus connection overhead
    assert len(stub_chat.requests) == 8


def test_live_http_error(stub_chat):
    stub_chat.status = 500
    with AsyncHandler(), LiveLLMHandler(base_url=stub_chat.url):
        with pytest.raises(BackendError) as info:
            await_(complete("x"))
    assert info.value.status == 500


def test_live_unreachable(no_network):
    with AsyncHandler(), LiveLLMHandler.from_env():
        with pytest.raises(BackendError):
            await_(complete("x"))


def test_live_needs_key_for_remote_host(monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    monkeypatch.setenv("LLM_BASE_URL", "https://llm.example.com/v1")
    with pytest.raises(ConfigurationError):
        LiveLLMHandler.from_env()


def test_mock_and_replay_make_no_connections(no_network):
    trace, _ = record_run(["a", "b"], {"a": "A", "b": "B"})
    with AsyncHandler(), ReplayLLMHandler(trace):
        await_(complete("a"))
        await_(complete("b"))
    assert no_network.attempts == []
