"""The research-topics workflow and the handlers that give it meaning."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Awaitable, Callable

import pydantic

from ..core import Handler
from ..llm import complete, parse, register_schema
from ..runtime import FutureHandle, async_, await_
from .ops import get_description, get_topics, log

__all__ = [
    "AREA",
    "AsyncResearchTopicsHandler",
    "LogDateHandler",
    "LogHandler",
    "ResearchArea",
    "ResearchTopicsHandler",
    "TopicReport",
    "get_description",
    "get_topics",
    "research_topics",
    "topics_responder",
]

AREA = "PL techniques for LLM applications"


@register_schema
class ResearchArea(pydantic.BaseModel):
    topics: list[str]

    model_config = {"json_schema_extra": {"examples": [{"topics": ["effect handlers", "prompting"]}]}}


@dataclass
class TopicReport:
    area: str
    entries: list[tuple[str, str]] = field(default_factory=list)


def research_topics(area: str = AREA) -> TopicReport:
    topics = get_topics(area)
    pending = []
    for topic in topics:
        log(topic)
        description = get_description(topic)
        log(description)
        pending.append((topic, description))
    return TopicReport(area, [(t, await_(d)) for t, d in pending])


def topics_prompt(area: str) -> str:
    return f"Give a list of topics in the research area {area}."


def description_prompt(topic: str) -> str:
    return f"Give a short description about the topic {topic}."


class LogHandler(Handler):
    def __init__(self, sink: Callable[[str], None] = print) -> None:
        super().__init__()
        self.sink = sink
        self.register(log, self.log)

    def log(self, msg) -> None:
        self.sink(f"[INFO] {msg}")


class LogDateHandler(Handler):
    """Prints a timestamp, then hands ``log`` to the handlers below."""

    def __init__(self, sink: Callable[[str], None] = print) -> None:
        super().__init__()
        self.sink = sink
        self.register(log, self.log)

    def log(self, msg) -> None:
        self.sink(f"[DATE] {datetime.now()}")
        log(msg)


class AsyncResearchTopicsHandler(Handler):
    """Fans description requests out; ``log`` prints once its message resolves."""

    def __init__(self, sink: Callable[[str], None] = print) -> None:
        super().__init__()
        self.sink = sink
        self.register(get_topics, self.get_topics)
        self.register(get_description, self.get_description)
        self.register(log, self.log)

    def get_topics(self, area: str) -> list[str]:
        return await_(parse(topics_prompt(area), ResearchArea)).topics

    def get_description(self, topic: str) -> FutureHandle:
        return complete(description_prompt(topic))

    def log(self, msg) -> FutureHandle:
        async def aux():
            return await msg if isinstance(msg, Awaitable) else msg

        return async_(aux(), self.sink)


class ResearchTopicsHandler(AsyncResearchTopicsHandler):
    """Sequential variant: each description is awaited before moving on."""

    def get_description(self, topic: str) -> str:
        return await_(complete(description_prompt(topic)))

    def log(self, msg) -> None:
        self.sink(await_(msg))


FIXTURE_TOPICS = [
    "effect handlers",
    "prompting",
    "structured generation",
    "constrained decoding",
    "program synthesis",
    "agent orchestration",
    "opportunistic evaluation",
    "trace replay",
]


def topics_responder(topics: list[str] = FIXTURE_TOPICS):
    """Mock LLM rule for the research-topics prompts."""

    def rule(kind, prompt, schema):
        if kind == "parse" and prompt.startswith("Give a list of topics"):
            return {"topics": list(topics)}
        prefix = "Give a short description about the topic "
        if kind == "complete" and prompt.startswith(prefix):
            topic = prompt[len(prefix):].rstrip(".")
            return f"{topic}: a technique discussed under {AREA}."
        return None

    return rule
