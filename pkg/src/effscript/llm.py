"""LLM-call operations and interchangeable handlers.

``complete(prompt)`` and ``parse(prompt, schema)`` return futures. Handlers:

* :class:`MockLLMHandler` - rule-based responses after a simulated latency.
* :class:`LiveLLMHandler` - OpenAI-compatible ``/chat/completions`` over HTTP.
* :class:`ReplayLLMHandler` - serves responses from a recorded :class:`Trace`.
* :class:`RecordingLLMHandler` - stacked above any of the above; forwards
  calls downstream and appends one :class:`LLMCallRecord` per call.

Schemas are pydantic models; a schema's id is its class name.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Union
from urllib.parse import urlparse

import httpx
import pydantic

from .core import Handler, Operation
from .runtime import FutureHandle, async_, run_blocking, sleep_for

__all__ = [
    "complete",
    "parse",
    "BackendError",
    "ConfigurationError",
    "LLMCallRecord",
    "LLMHandler",
    "LiveLLMHandler",
    "MockLLMHandler",
    "MockRuleMissing",
    "RecordingLLMHandler",
    "ReplayExhausted",
    "ReplayLLMHandler",
    "ReplayMismatch",
    "SchemaValidationError",
    "Trace",
    "TraceFormatError",
    "canonical_json",
    "register_schema",
    "schema_id",
    "validate",
]

complete = Operation("complete")
parse = Operation("parse")

Schema = type[pydantic.BaseModel]


class BackendError(RuntimeError):
    def __init__(self, message: str, status: Optional[int] = None, body: str = "") -> None:
        self.status = status
        self.body = body
        super().__init__(message if status is None else f"{message} (HTTP {status}): {body[:200]}")


class ConfigurationError(ValueError):
    pass


class SchemaValidationError(ValueError):
    pass


class MockRuleMissing(LookupError):
    pass


class ReplayExhausted(LookupError):
    pass


class ReplayMismatch(ValueError):
    pass


class TraceFormatError(ValueError):
    def __init__(self, line: int, reason: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {reason}")


# -- schemas -------------------------------------------------------------

_SCHEMAS: dict[str, Schema] = {}


def schema_id(schema: Schema) -> str:
    return schema.__name__


def register_schema(schema: Schema) -> Schema:
    """Class decorator adding ``schema`` to the registry; ids must be unique."""
    sid = schema_id(schema)
    if sid in _SCHEMAS and _SCHEMAS[sid] is not schema:
        raise ValueError(f"schema id {sid!r} already registered")
    _SCHEMAS[sid] = schema
    return schema


def lookup_schema(sid: str) -> Schema:
    return _SCHEMAS[sid]


def validate(schema: Schema, raw: str) -> pydantic.BaseModel:
    try:
        return schema.model_validate_json(raw)
    except pydantic.ValidationError as exc:
        raise SchemaValidationError(f"response does not match {schema_id(schema)}: {exc}") from exc


def canonical_json(obj: Any) -> str:
    if isinstance(obj, pydantic.BaseModel):
        obj = obj.model_dump(mode="json")
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# -- traces --------------------------------------------------------------

_KEYS = ("seq", "kind", "prompt", "schema_id", "response", "model", "latency_ms")


@dataclass(frozen=True)
class LLMCallRecord:
    seq: int
    kind: str
    prompt: str
    schema_id: Optional[str]
    response: str
    model: str
    latency_ms: float

    @classmethod
    def from_json(cls, data: Any, line: int = 0) -> "LLMCallRecord":
        if not isinstance(data, dict):
            raise TraceFormatError(line, "record is not a JSON object")
        if set(data) != set(_KEYS):
            raise TraceFormatError(line, f"keys must be exactly {list(_KEYS)}, got {sorted(data)}")
        seq, kind, sid = data["seq"], data["kind"], data["schema_id"]
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
            raise TraceFormatError(line, "seq must be a non-negative integer")
        if kind not in ("complete", "parse"):
            raise TraceFormatError(line, f"unknown kind {kind!r}")
        if (kind == "parse") != (sid is not None):
            raise TraceFormatError(line, "schema_id must be set exactly for parse records")
        for key in ("prompt", "response", "model"):
            if not isinstance(data[key], str):
                raise TraceFormatError(line, f"{key} must be a string")
        if sid is not None and not isinstance(sid, str):
            raise TraceFormatError(line, "schema_id must be a string or null")
        latency = data["latency_ms"]
        if not isinstance(latency, (int, float)) or isinstance(latency, bool) or latency < 0:
            raise TraceFormatError(line, "latency_ms must be a non-negative number")
        return cls(seq, kind, data["prompt"], sid, data["response"], data["model"], float(latency))


@dataclass
class Trace:
    records: list[LLMCallRecord]

    def __init__(self, records: Iterable[LLMCallRecord] = ()) -> None:
        self.records = list(records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Trace) and self.records == other.records

    def __len__(self) -> int:
        return len(self.records)

    def dumps(self) -> str:
        return "".join(json.dumps(asdict(r), ensure_ascii=False) + "\n" for r in self.records)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Trace":
        records = []
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(n, f"invalid JSON: {exc.msg}") from None
            record = LLMCallRecord.from_json(data, n)
            if record.seq != len(records):
                raise TraceFormatError(n, f"expected seq {len(records)}, got {record.seq}")
            records.append(record)
        return cls(records)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Trace":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# -- handlers ------------------------------------------------------------


class LLMHandler(Handler):
    """Discharges ``complete`` and ``parse`` via :meth:`request`.

    Subclasses implement ``request(kind, prompt, schema)`` returning a
    coroutine that yields the raw response text. ``prepare`` runs
    synchronously at call initiation.
    """

    model = "unknown"

    def __init__(self) -> None:
        super().__init__()
        self.register(complete, self.complete)
        self.register(parse, self.parse)

    def prepare(self, kind: str, prompt: str, schema: Optional[Schema]) -> Any:
        return None

    async def request(self, kind: str, prompt: str, schema: Optional[Schema], ticket: Any) -> str:
        raise NotImplementedError

    def complete(self, prompt: str) -> FutureHandle:
        ticket = self.prepare("complete", prompt, None)
        return async_(self.request("complete", prompt, None, ticket))

    def parse(self, prompt: str, schema: Schema) -> FutureHandle:
        ticket = self.prepare("parse", prompt, schema)

        async def aux():
            return validate(schema, await self.request("parse", prompt, schema, ticket))

        return async_(aux())


Rule = Callable[[str, str, Optional[Schema]], Any]


class MockLLMHandler(LLMHandler):
    """Deterministic stand-in backend.

    ``rules`` is either a mapping from prompt to response or a callable
    ``(kind, prompt, schema) -> response``. Non-string responses are
    serialised as JSON. ``jitter`` scales latency by a seeded uniform factor in
    ``[1 - jitter, 1 + jitter]``.
    """

    model = "mock"

    def __init__(
        self,
        rules: Union[Mapping[str, Any], Rule, None] = None,
        latency_ms: float = 0.0,
        default: Any = None,
        jitter: float = 0.0,
        seed: int = 0,
    ) -> None:
        super().__init__()
        self.rules = rules if rules is not None else {}
        self.latency_ms = latency_ms
        self.default = default
        self.jitter = jitter
        self._rng = random.Random(seed)
        self.calls = 0

    def respond(self, kind: str, prompt: str, schema: Optional[Schema]) -> str:
        if callable(self.rules):
            response = self.rules(kind, prompt, schema)
        elif prompt in self.rules:
            response = self.rules[prompt]
        else:
            response = None
        if response is None:
            response = self.default
        if response is None:
            raise MockRuleMissing(f"no mock rule for {kind} prompt {prompt!r}")
        return response if isinstance(response, str) else canonical_json(response)

    def prepare(self, kind, prompt, schema):
        self.calls += 1
        if self.jitter:
            return self.latency_ms * (1 + self.jitter * self._rng.uniform(-1, 1))
        return self.latency_ms

    async def request(self, kind, prompt, schema, ticket):
        await sleep_for(ticket)
        return self.respond(kind, prompt, schema)


class ReplayLLMHandler(LLMHandler):
    """Serves recorded responses in call-initiation order.

    With ``strict=True`` each call must match the next record's kind and
    prompt. ``simulate_latency`` sleeps for the recorded latency.
    """

    def __init__(self, trace: Trace, strict: bool = False, simulate_latency: bool = False) -> None:
        super().__init__()
        self.trace = trace
        self.strict = strict
        self.simulate_latency = simulate_latency
        self.position = 0
        self.model = trace.records[0].model if trace.records else "replay"

    def prepare(self, kind, prompt, schema):
        if self.position >= len(self.trace.records):
            return ReplayExhausted(f"trace has {len(self.trace.records)} records; call #{self.position} has none")
        record = self.trace.records[self.position]
        self.position += 1
        if self.strict and (record.kind != kind or record.prompt != prompt):
            return ReplayMismatch(
                f"seq {record.seq}: recorded {record.kind} {record.prompt!r}, got {kind} {prompt!r}"
            )
        return record

    async def request(self, kind, prompt, schema, ticket):
        if isinstance(ticket, Exception):
            raise ticket
        if self.simulate_latency:
            await sleep_for(ticket.latency_ms)
        return ticket.response


class LiveLLMHandler(LLMHandler):
    """OpenAI-compatible chat-completions backend.

    Requests run on worker threads so calls overlap in flight.
    """

    def __init__(
        self,
        base_url: str = "http://127.0.0.1:8000/v1",
        api_key: Optional[str] = None,
        model: str = "qwen-turbo",
        temperature: float = 0.7,
        timeout: float = 60.0,
    ) -> None:
        super().__init__()
        host = urlparse(base_url).hostname or ""
        if not api_key and host not in ("localhost", "127.0.0.1", "::1"):
            raise ConfigurationError(f"LLM_API_KEY is required for non-local endpoint {base_url}")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self._client: Optional[httpx.Client] = None

    @classmethod
    def from_env(cls, **overrides: Any) -> "LiveLLMHandler":
        kwargs = dict(
            base_url=os.environ.get("LLM_BASE_URL", "http://127.0.0.1:8000/v1"),
            api_key=os.environ.get("LLM_API_KEY"),
            model=os.environ.get("LLM_MODEL", "qwen-turbo"),
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def on_enter(self) -> None:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(headers=headers, timeout=self.timeout)

    def on_exit(self, exc) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def payload(self, prompt: str, schema: Optional[Schema]) -> dict:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        if schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": {"name": schema_id(schema), "schema": schema.model_json_schema(), "strict": True},
            }
        return body

    def post(self, body: dict) -> str:
        try:
            r = self._client.post(f"{self.base_url}/chat/completions", json=body)
        except httpx.TimeoutException as exc:
            raise BackendError(f"request timed out after {self.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"request failed: {exc}") from exc
        if r.status_code // 100 != 2:
            raise BackendError("chat completion failed", r.status_code, r.text)
        try:
            return r.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError("malformed chat completion response", r.status_code, r.text) from exc

    async def request(self, kind, prompt, schema, ticket):
        return await run_blocking(self.post, self.payload(prompt, schema))


class RecordingLLMHandler(Handler):
    """Stack above another LLM handler to capture every call into ``trace``.

    ``seq`` is assigned when the call is initiated. Parse responses are stored
    as canonical JSON of the parsed object. Calls that fail downstream are
    not recorded.
    """

    def __init__(self, trace: Optional[Trace] = None, model: Optional[str] = None, path=None) -> None:
        super().__init__()
        self.trace = trace if trace is not None else Trace()
        self.model = model
        self.path = path
        self._slots: list[Optional[LLMCallRecord]] = []
        self.register(complete, self.complete)
        self.register(parse, self.parse)

    def on_exit(self, exc) -> None:
        self.flush()

    def flush(self) -> None:
        done = [r for r in self._slots if r is not None]
        self.trace.records[:] = [
            LLMCallRecord(i, r.kind, r.prompt, r.schema_id, r.response, r.model, r.latency_ms)
            for i, r in enumerate(done)
        ]
        if self.path is not None:
            self.trace.save(self.path)

    def _record(self, kind: str, prompt: str, schema: Optional[Schema], fut: FutureHandle) -> FutureHandle:
        seq = len(self._slots)
        self._slots.append(None)
        clock = fut.scheduler.clock
        start = clock.now()
        model = self.model or "unknown"

        async def aux():
            value = await fut
            latency = (clock.now() - start) * 1000.0
            text = value if kind == "complete" else canonical_json(value)
            sid = schema_id(schema) if schema is not None else None
            self._slots[seq] = LLMCallRecord(seq, kind, prompt, sid, text, model, round(latency, 3))
            return value

        return async_(aux())

    def complete(self, prompt: str) -> FutureHandle:
        return self._record("complete", prompt, None, complete(prompt))

    def parse(self, prompt: str, schema: Schema) -> FutureHandle:
        return self._record("parse", prompt, schema, parse(prompt, schema))
