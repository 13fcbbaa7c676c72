"""Handler-stack assembly, workflow runners and the sync-vs-async benchmark."""

from __future__ import annotations

import platform
import statistics
import sys
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from .core import Handler
from .llm import (
    ConfigurationError,
    LiveLLMHandler,
    MockLLMHandler,
    RecordingLLMHandler,
    ReplayLLMHandler,
    Trace,
)
from .runtime import AsyncHandler, AsyncSeqHandler, VirtualClock, WallClock, await_
from .workflows import (
    AsyncGame24Handler,
    AsyncResearchTopicsHandler,
    Game24Handler,
    ResearchTopicsHandler,
    oracle_responder,
    research_topics,
    topics_responder,
    tree_of_thoughts,
    validate,
)
from .workflows.game24 import TARGET, SolveState, ValidationFailed

TABLE1_INPUTS = ((4, 9, 10, 13), (2, 10, 10, 13), (1, 2, 12, 12))


@dataclass
class StackSpec:
    mode: str = "async"  # async | sync
    llm: str = "mock"  # live | mock | replay | record
    trace: Optional[str] = None
    record_from: str = "mock"  # backend underneath a recorder: mock | live
    seq: bool = False
    latency_ms: float = 0.0
    seed: int = 0
    clock: str = "wall"  # wall | virtual
    strict_replay: bool = False

    def check(self) -> None:
        if self.mode not in ("async", "sync"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.llm not in ("live", "mock", "replay", "record"):
            raise ConfigurationError(f"unknown llm backend {self.llm!r}")
        if self.clock not in ("wall", "virtual"):
            raise ConfigurationError(f"unknown clock {self.clock!r}")
        if self.seq and self.mode != "async":
            raise ConfigurationError("--seq needs --mode async")
        if self.latency_ms < 0:
            raise ConfigurationError("latency must be non-negative")
        if self.llm == "replay":
            if not self.trace:
                raise ConfigurationError("replay needs --trace PATH")
            if not Path(self.trace).is_file():
                raise ConfigurationError(f"trace file not found: {self.trace}")
        if self.llm == "record":
            if not self.trace:
                raise ConfigurationError("record needs --trace PATH")
            parent = Path(self.trace).resolve().parent
            if not parent.is_dir():
                raise ConfigurationError(f"cannot write trace into missing directory {parent}")
            if self.record_from not in ("mock", "live"):
                raise ConfigurationError(f"cannot record from {self.record_from!r}")


def make_clock(name: str):
    return VirtualClock() if name == "virtual" else WallClock()


def llm_handlers(spec: StackSpec, responder) -> list[Handler]:
    """Backend handler(s), bottom first."""
    if spec.llm == "replay":
        return [ReplayLLMHandler(Trace.load(spec.trace), strict=spec.strict_replay)]
    backend_kind = spec.record_from if spec.llm == "record" else spec.llm
    if backend_kind == "live":
        backend: Handler = LiveLLMHandler.from_env()
    else:
        backend = MockLLMHandler(responder, latency_ms=spec.latency_ms, seed=spec.seed)
    if spec.llm == "record":
        return [backend, RecordingLLMHandler(model=getattr(backend, "model", None), path=spec.trace)]
    return [backend]


@dataclass
class RunResult:
    result: Any
    wall_s: float
    calls: Optional[int]
    lines: list[str]


def run_stack(spec: StackSpec, responder, app: Handler, body: Callable[[], Any], lines: list[str]) -> RunResult:
    """Run ``body`` under async + LLM (+ seq) + ``app`` and time it.

    The time covers the whole scope, including draining outstanding tasks.
    On the virtual clock the elapsed figure is simulated time.
    """
    spec.check()
    clock = make_clock(spec.clock)
    handlers = [AsyncHandler(clock)] + llm_handlers(spec, responder)
    if spec.seq:
        handlers.append(AsyncSeqHandler())
    handlers.append(app)
    recorder = next((h for h in handlers if isinstance(h, RecordingLLMHandler)), None)
    start = clock.now()
    try:
        with ExitStack() as stack:
            for h in handlers:
                stack.enter_context(h)
            result = body()
    finally:
        # the recorder's scope closes before the scheduler drains
        if recorder is not None:
            recorder.flush()
    elapsed = clock.now() - start
    mock = next((h for h in handlers if isinstance(h, MockLLMHandler)), None)
    return RunResult(result, elapsed, mock.calls if mock is not None else None, lines)


def run_research_topics(spec: StackSpec, area: Optional[str] = None, sink: Optional[Callable[[str], None]] = None):
    lines: list[str] = []

    def emit(line: str) -> None:
        lines.append(line)
        if sink is not None:
            sink(line)

    app_cls = AsyncResearchTopicsHandler if spec.mode == "async" else ResearchTopicsHandler
    kwargs = {} if area is None else {"area": area}
    return run_stack(spec, topics_responder(), app_cls(emit), lambda: research_topics(**kwargs), lines)


@dataclass
class ToTOutcome:
    frontier: list[SolveState]
    answer: Optional[str]


def run_tot(
    spec: StackSpec,
    numbers: Sequence[int],
    n_steps: int = 4,
    n_select: int = 5,
    n_eval: int = 3,
    sink: Optional[Callable[[str], None]] = None,
) -> RunResult:
    """Beam search for 24; ``result`` is a :class:`ToTOutcome`."""
    lines: list[str] = []

    def emit(line: str) -> None:
        lines.append(line)
        if sink is not None:
            sink(line)

    app_cls = AsyncGame24Handler if spec.mode == "async" else Game24Handler

    def body() -> ToTOutcome:
        frontier = tree_of_thoughts(n_steps, n_select, n_eval)
        for state in frontier:
            if state.answer is not None:
                return ToTOutcome(frontier, state.answer)
        for state in frontier:
            if state.remaining == (TARGET,):
                try:
                    return ToTOutcome(frontier, await_(validate(state)))
                except ValidationFailed:
                    continue
        return ToTOutcome(frontier, None)

    return run_stack(spec, oracle_responder, app_cls(numbers, emit), body, lines)


# -- benchmark ---------------------------------------------------------------------


@dataclass
class BenchRow:
    input: Any
    async_s: float
    sync_s: float
    speedup: float


@dataclass
class BenchReport:
    workflow: str
    rows: list[BenchRow]
    mean_speedup: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "workflow": self.workflow,
            "rows": [asdict(r) for r in self.rows],
            "mean_speedup": self.mean_speedup,
            "meta": self.meta,
        }

    def table(self) -> str:
        out = [f"{'input':<20} {'async (s)':>10} {'sync (s)':>10} {'speedup':>9}"]
        for r in self.rows:
            label = "[" + "; ".join(map(str, r.input)) + "]" if isinstance(r.input, (list, tuple)) else str(r.input)
            out.append(f"{label:<20} {r.async_s:>10.3f} {r.sync_s:>10.3f} {r.speedup:>8.2f}x")
        out.append(f"{'mean':<20} {'':>10} {'':>10} {self.mean_speedup:>8.2f}x")
        return "\n".join(out)


def _speedup(sync_s: float, async_s: float) -> float:
    if async_s <= 0:
        return float("inf") if sync_s > 0 else 1.0
    return round(sync_s / async_s, 3)


def bench(
    workflow: str,
    inputs: Optional[Sequence[Any]] = None,
    trials: int = 3,
    latency_ms: float = 100.0,
    seed: int = 0,
    clock: str = "wall",
    n_steps: int = 4,
    n_select: int = 5,
    n_eval: int = 3,
) -> BenchReport:
    """Median wall time of each input under the async and the sync stack.

    Always uses the latency-simulating mock backend.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if workflow == "tot":
        inputs = list(inputs) if inputs is not None else [list(x) for x in TABLE1_INPUTS]

        def once(mode, item):
            spec = StackSpec(mode=mode, llm="mock", latency_ms=latency_ms, seed=seed, clock=clock)
            return run_tot(spec, item, n_steps, n_select, n_eval)

    elif workflow == "research-topics":
        inputs = list(inputs) if inputs is not None else ["PL techniques for LLM applications"]

        def once(mode, item):
            spec = StackSpec(mode=mode, llm="mock", latency_ms=latency_ms, seed=seed, clock=clock)
            return run_research_topics(spec, area=item)

    else:
        raise ConfigurationError(f"unknown workflow {workflow!r}")

    rows = []
    calls: dict[str, list[int]] = {"async": [], "sync": []}
    for item in inputs:
        times = {}
        for mode in ("async", "sync"):
            runs = [once(mode, item) for _ in range(trials)]
            times[mode] = statistics.median(r.wall_s for r in runs)
            calls[mode].append(runs[0].calls)
        async_s, sync_s = round(times["async"], 6), round(times["sync"], 6)
        rows.append(BenchRow(item, async_s, sync_s, _speedup(sync_s, async_s)))
    mean = round(statistics.fmean(r.speedup for r in rows), 3) if rows else 0.0
    meta = {
        "latency_ms": latency_ms,
        "trials": trials,
        "seed": seed,
        "clock": clock,
        "backend": "mock",
        "calls": calls,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }
    return BenchReport(workflow, rows, mean, meta)
