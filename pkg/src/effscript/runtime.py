"""Cooperative scheduling behind the ``async_`` / ``await_`` operations.

Tasks are native coroutines driven by a small single-threaded
:class:`Scheduler`. Inside a task, suspend with ``await fut`` (or
:func:`sleep_for`, :meth:`CompletionEvent.wait`, :func:`run_blocking`). At the
top level, the ``await_`` operation drives the scheduler until the future
settles.

Time comes from a pluggable clock: :class:`WallClock` really sleeps,
:class:`VirtualClock` jumps straight to the next timer deadline.
"""

from __future__ import annotations

import contextvars
import enum
import heapq
import itertools
import queue
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Awaitable, Callable, Optional

from .core import Handler, Operation, performer_context, _current

__all__ = [
    "async_",
    "await_",
    "AsyncHandler",
    "AsyncSeqHandler",
    "CompletionEvent",
    "Deadlock",
    "FutureHandle",
    "FutureState",
    "Scheduler",
    "SchedulerClosed",
    "VirtualClock",
    "WallClock",
    "run_blocking",
    "sleep_for",
]

async_ = Operation("async_")
await_ = Operation("await_")


class SchedulerClosed(RuntimeError):
    pass


class Deadlock(RuntimeError):
    pass


class WallClock:
    name = "wall"

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    name = "virtual"

    def __init__(self, start: float = 0.0) -> None:
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self._now += seconds


class FutureState(enum.Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


class FutureHandle:
    """Eventual result of a scheduled task."""

    def __init__(self, scheduler: "Scheduler", id: int) -> None:
        self.scheduler = scheduler
        self.id = id
        self.state = FutureState.PENDING
        self._value: Any = None
        self._error: Optional[BaseException] = None
        self._waiters: list[_Task] = []
        self.observed = False

    def done(self) -> bool:
        return self.state is not FutureState.PENDING

    def result(self) -> Any:
        if self.state is FutureState.PENDING:
            raise RuntimeError(f"future #{self.id} is still pending")
        self.observed = True
        if self.state is FutureState.FAILED:
            raise self._error
        return self._value

    def exception(self) -> Optional[BaseException]:
        return self._error

    def _settle(self, state: FutureState, value: Any = None, error: Optional[BaseException] = None) -> None:
        if self.state is not FutureState.PENDING:
            raise RuntimeError(f"future #{self.id} settled twice")
        self.state, self._value, self._error = state, value, error
        waiters, self._waiters = self._waiters, []
        for task in waiters:
            task.scheduler._wake(task)

    def __await__(self):
        if not self.done():
            yield _WaitFuture(self)
        return self.result()

    def __repr__(self) -> str:
        if self.state is FutureState.COMPLETED:
            return f"<FutureHandle #{self.id} completed {self._value!r}>"
        return f"<FutureHandle #{self.id} {self.state.value}>"


class CompletionEvent:
    """One-way flag; waiters resume once it is set."""

    def __init__(self) -> None:
        self._set = False
        self._waiters: list[_Task] = []

    def is_set(self) -> bool:
        return self._set

    def set(self) -> None:
        if self._set:
            return
        self._set = True
        waiters, self._waiters = self._waiters, []
        for task in waiters:
            task.scheduler._wake(task)

    def wait(self) -> "_EventWait":
        return _EventWait(self)


class _EventWait:
    def __init__(self, event: CompletionEvent) -> None:
        self.event = event

    def __await__(self):
        if not self.event.is_set():
            yield self
        return None


class _WaitFuture:
    def __init__(self, future: FutureHandle) -> None:
        self.future = future


class _Sleep:
    def __init__(self, seconds: float) -> None:
        self.seconds = seconds

    def __await__(self):
        yield self


class _Blocking:
    def __init__(self, fn: Callable[..., Any], args: tuple) -> None:
        self.fn = fn
        self.args = args

    def __await__(self):
        return (yield self)


def sleep_for(ms: float) -> _Sleep:
    """Suspend the calling task for at least ``ms`` milliseconds."""
    return _Sleep(max(0.0, ms) / 1000.0)


def run_blocking(fn: Callable[..., Any], *args: Any) -> _Blocking:
    """Run ``fn(*args)`` on a worker thread; the calling task suspends meanwhile."""
    return _Blocking(fn, args)


class _Task:
    __slots__ = ("coro", "future", "context", "scheduler", "send", "throw")

    def __init__(self, coro, future, context, scheduler) -> None:
        self.coro = coro
        self.future = future
        self.context = context
        self.scheduler = scheduler
        self.send: Any = None
        self.throw: Optional[BaseException] = None


async def _apply(task: Awaitable[Any], post_fn: Callable[[Any], Any]) -> Any:
    return post_fn(await task)


def _identity(x: Any) -> Any:
    return x


class Scheduler:
    """Single-threaded cooperative executor with a timer heap."""

    def __init__(self, clock=None, max_workers: int = 32) -> None:
        self.clock = clock if clock is not None else WallClock()
        self.futures: list[FutureHandle] = []
        self.closed = False
        self._ids = itertools.count()
        self._ready: deque[_Task] = deque()
        self._timers: list[tuple[float, int, _Task]] = []
        self._tick = itertools.count()
        self._running: Optional[_Task] = None
        self._max_workers = max_workers
        self._executor: Optional[ThreadPoolExecutor] = None
        self._inflight = 0
        self._done_q: queue.SimpleQueue = queue.SimpleQueue()

    # -- scheduling -----------------------------------------------------

    def spawn(
        self,
        task: Awaitable[Any],
        post_fn: Callable[[Any], Any] = _identity,
        context: Optional[contextvars.Context] = None,
    ) -> FutureHandle:
        if self.closed:
            if hasattr(task, "close"):
                task.close()
            raise SchedulerClosed("scheduler scope has already exited")
        fut = FutureHandle(self, next(self._ids))
        self.futures.append(fut)
        ctx = context if context is not None else contextvars.copy_context()
        self._ready.append(_Task(_apply(task, post_fn), fut, ctx, self))
        return fut

    def _wake(self, task: _Task) -> None:
        self._ready.append(task)

    @property
    def in_task(self) -> bool:
        return self._running is not None

    def _step(self, task: _Task) -> None:
        send, throw = task.send, task.throw
        task.send = task.throw = None
        self._running = task
        try:
            if throw is not None:
                trap = task.context.run(task.coro.throw, throw)
            else:
                trap = task.context.run(task.coro.send, send)
        except StopIteration as stop:
            task.future._settle(FutureState.COMPLETED, value=stop.value)
            return
        except Exception as exc:
            task.future._settle(FutureState.FAILED, error=exc)
            return
        finally:
            self._running = None
        self._trap(task, trap)

    def _trap(self, task: _Task, trap: Any) -> None:
        if isinstance(trap, _WaitFuture):
            if trap.future.done():
                self._ready.append(task)
            else:
                trap.future._waiters.append(task)
        elif isinstance(trap, _EventWait):
            if trap.event.is_set():
                self._ready.append(task)
            else:
                trap.event._waiters.append(task)
        elif isinstance(trap, _Sleep):
            deadline = self.clock.now() + trap.seconds
            heapq.heappush(self._timers, (deadline, next(self._tick), task))
        elif isinstance(trap, _Blocking):
            self._submit(task, trap)
        else:
            task.throw = TypeError(f"task yielded an unsupported awaitable: {trap!r}")
            self._ready.append(task)

    def _submit(self, task: _Task, trap: _Blocking) -> None:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(self._max_workers, thread_name_prefix="effscript")
        self._inflight += 1
        done_q = self._done_q

        def job():
            try:
                done_q.put((task, trap.fn(*trap.args), None))
            except BaseException as exc:  # delivered into the task
                done_q.put((task, None, exc))

        self._executor.submit(job)

    def _collect(self, block: bool, timeout: Optional[float]) -> None:
        try:
            item = self._done_q.get(block, timeout)
        except queue.Empty:
            return
        while True:
            task, value, exc = item
            self._inflight -= 1
            task.send, task.throw = value, exc
            self._ready.append(task)
            try:
                item = self._done_q.get_nowait()
            except queue.Empty:
                return

    def _run_once(self) -> bool:
        """Advance by one round. Returns False when nothing can make progress."""
        if self._inflight:
            self._collect(block=False, timeout=None)
        now = self.clock.now()
        while self._timers and self._timers[0][0] <= now:
            self._ready.append(heapq.heappop(self._timers)[2])
        if self._ready:
            for _ in range(len(self._ready)):
                self._step(self._ready.popleft())
            return True
        if not self._timers and not self._inflight:
            return False
        wait = self._timers[0][0] - now if self._timers else None
        if self._inflight:
            if isinstance(self.clock, VirtualClock):
                self._collect(block=True, timeout=None)
            else:
                self._collect(block=True, timeout=wait)
        else:
            self.clock.sleep(wait)
        return True

    def run_until(self, fut: FutureHandle) -> None:
        if self._running is not None:
            raise RuntimeError("await_ called from inside a task; use `await fut` there")
        while not fut.done():
            if not self._run_once():
                raise Deadlock(f"future #{fut.id} can never complete: no runnable tasks")

    def drain(self) -> None:
        """Run every task to completion, then close. Re-raises the first unobserved failure."""
        if self.closed:
            return
        try:
            while self._run_once():
                pass
            for fut in self.futures:
                if not fut.done():
                    fut._settle(FutureState.FAILED, error=Deadlock(f"future #{fut.id} never completed"))
        finally:
            self.closed = True
            if self._executor is not None:
                self._executor.shutdown(wait=False)
        for fut in self.futures:
            if fut.state is FutureState.FAILED and not fut.observed:
                fut.observed = True
                raise fut.exception()


class AsyncHandler(Handler):
    """Discharges ``async_`` and ``await_`` with a fresh :class:`Scheduler`.

    Leaving the scope runs every scheduled task to completion.
    """

    def __init__(self, clock=None) -> None:
        super().__init__()
        self.clock = clock
        self.scheduler: Optional[Scheduler] = None
        self.register(async_, self.async_)
        self.register(await_, self.await_)

    def on_enter(self) -> None:
        self.scheduler = Scheduler(self.clock)

    def on_exit(self, exc: Optional[BaseException]) -> None:
        if exc is None:
            self.scheduler.drain()
            return
        try:
            self.scheduler.drain()
        except Exception:
            pass  # the body's exception wins

    def async_(self, task: Awaitable[Any], post_fn: Callable[[Any], Any] = _identity) -> FutureHandle:
        ctx = contextvars.copy_context()
        ctx.run(_current.set, performer_context())
        return self.scheduler.spawn(task, post_fn, ctx)

    def await_(self, fut: Any) -> Any:
        if not isinstance(fut, FutureHandle):
            return fut
        if fut.scheduler.closed:
            raise SchedulerClosed(f"future #{fut.id} belongs to a closed scheduler")
        if not fut.done():
            fut.scheduler.run_until(fut)
        return fut.result()


class AsyncSeqHandler(Handler):
    """Refines ``async_`` so callbacks run in submission order.

    Each task waits for its predecessor's event before running its callback,
    then sets its own.
    """

    def __init__(self) -> None:
        super().__init__()
        self.register(async_, self.async_)

    def on_enter(self) -> None:
        self.prev_event = CompletionEvent()
        self.prev_event.set()

    def async_(self, task: Awaitable[Any], post_fn: Callable[[Any], Any] = _identity) -> FutureHandle:
        async def chained(prev: CompletionEvent, nxt: CompletionEvent) -> Any:
            try:
                try:
                    result = await task
                finally:
                    await prev.wait()
                return post_fn(result)
            finally:
                nxt.set()

        nxt = CompletionEvent()
        fut = async_(chained(self.prev_event, nxt))
        self.prev_event = nxt
        return fut
