"""Abstract operations, effect handlers and the dispatch algorithm.

An :class:`Operation` is a callable interface point with no behaviour of its
own. Calling it looks up the topmost active handler that registered a clause
for it and runs that clause. While the clause runs, dispatch is restricted to
the frames *below* the discharging handler, so a handler can refine an
operation by invoking it again::

    log = Operation("log")

    class LogHandler(Handler):
        def __init__(self):
            super().__init__()
            self.register(log, lambda msg: print(f"[INFO] {msg}"))

    with LogHandler():
        log("Hello World!")

The active stack lives in a :class:`contextvars.ContextVar`, so every
execution context (including each scheduled task) sees its own stack.
"""

from __future__ import annotations

import itertools
from contextvars import ContextVar
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping, Optional

__all__ = [
    "Operation",
    "create_operation",
    "HandlerFrame",
    "DispatchContext",
    "Scope",
    "Handler",
    "UnhandledOperation",
    "OutOfOrderPop",
    "perform",
    "push_handler",
    "snapshot_context",
    "performer_context",
    "current_depth",
]

_ids = itertools.count()


class Operation:
    """An abstract operation. Identity is the object itself."""

    __slots__ = ("id", "name")

    def __init__(self, name: str = "op") -> None:
        self.id = next(_ids)
        self.name = name

    def __call__(self, *args: Any) -> Any:
        return perform(self, *args)

    def __repr__(self) -> str:
        return f"<Operation {self.name}#{self.id}>"


def create_operation(name: str) -> Operation:
    return Operation(name)


class UnhandledOperation(LookupError):
    def __init__(self, op: Operation, context: "DispatchContext") -> None:
        self.op = op
        self.context = context
        visible = [f.label for f in context.frames[: context.cursor]]
        super().__init__(f"no handler discharges {op.name!r} (visible frames, bottom to top: {visible})")


class OutOfOrderPop(RuntimeError):
    """A scope was released while another frame sits above it."""


@dataclass(frozen=True, eq=False)
class HandlerFrame:
    """A pushed handler: frozen clause map plus optional lifecycle hooks."""

    clauses: Mapping[Operation, Callable[..., Any]]
    on_enter: Optional[Callable[[], None]] = None
    on_exit: Optional[Callable[[Optional[BaseException]], None]] = None
    label: str = "frame"

    def discharges(self, op: Operation) -> bool:
        return op in self.clauses


@dataclass(frozen=True)
class DispatchContext:
    """Immutable view of a handler stack: frames bottom-to-top and a cursor.

    Only ``frames[:cursor]`` are visible to dispatch.
    """

    frames: tuple[HandlerFrame, ...] = ()
    cursor: int = 0

    def find(self, op: Operation) -> int:
        for i in range(self.cursor - 1, -1, -1):
            if op in self.frames[i].clauses:
                return i
        return -1

    def perform(self, op: Operation, *args: Any) -> Any:
        i = self.find(op)
        if i < 0:
            raise UnhandledOperation(op, self)
        clause = self.frames[i].clauses[op]
        token = _current.set(DispatchContext(self.frames, i))
        caller = _performer.set(self)
        try:
            return clause(*args)
        finally:
            _performer.reset(caller)
            _current.reset(token)

    def pushed(self, frame: HandlerFrame) -> "DispatchContext":
        frames = self.frames[: self.cursor] + (frame,)
        return DispatchContext(frames, len(frames))

    @property
    def visible(self) -> tuple[HandlerFrame, ...]:
        return self.frames[: self.cursor]


_EMPTY = DispatchContext()
_current: ContextVar[DispatchContext] = ContextVar("effscript_dispatch", default=_EMPTY)
_performer: ContextVar[DispatchContext] = ContextVar("effscript_performer", default=_EMPTY)


def perform(op: Operation, *args: Any) -> Any:
    """Dispatch ``op(*args)`` against the current context."""
    return _current.get().perform(op, *args)


def snapshot_context() -> DispatchContext:
    return _current.get()


def performer_context() -> DispatchContext:
    """The context that invoked the currently running clause.

    Clauses that defer work (like ``async_``) use this so the deferred body
    dispatches as its author would have.
    """
    return _performer.get()


def current_depth() -> int:
    return _current.get().cursor


@dataclass(eq=False)
class Scope:
    """Token returned by :func:`push_handler`; releasing it pops the frame."""

    frame: HandlerFrame
    _context: DispatchContext
    _token: Any
    released: bool = field(default=False)

    def release(self, exc: Optional[BaseException] = None) -> None:
        if self.released:
            raise RuntimeError(f"scope for {self.frame.label} already released")
        if _current.get() is not self._context:
            raise OutOfOrderPop(f"{self.frame.label} is not the top of the current stack")
        try:
            if self.frame.on_exit is not None:
                self.frame.on_exit(exc)
        finally:
            self.released = True
            _current.reset(self._token)


def push_handler(frame: HandlerFrame) -> Scope:
    if frame.on_enter is not None:
        frame.on_enter()
    context = _current.get().pushed(frame)
    token = _current.set(context)
    return Scope(frame, context, token)


class Handler:
    """Base class for effect handlers; usable as a context manager.

    Subclasses call :meth:`register` in ``__init__`` and may override
    :meth:`on_enter` / :meth:`on_exit`. The clause map is frozen when the
    handler is pushed.
    """

    def __init__(self) -> None:
        self.clauses: dict[Operation, Callable[..., Any]] = {}
        self._scopes: list[Scope] = []

    def register(self, op: Operation, fn: Callable[..., Any]) -> None:
        self.clauses[op] = fn

    def on_enter(self) -> None:
        pass

    def on_exit(self, exc: Optional[BaseException]) -> None:
        pass

    def frame(self) -> HandlerFrame:
        return HandlerFrame(
            MappingProxyType(dict(self.clauses)),
            on_enter=self.on_enter,
            on_exit=self.on_exit,
            label=type(self).__name__,
        )

    def __enter__(self):
        self._scopes.append(push_handler(self.frame()))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._scopes.pop().release(exc)
