"""Small-step machine over configurations ``⟨H; c⟩``.

The handler stack is kept alongside a term in which every pushed handler also
leaves a ``Handling`` marker (printed ``⌈c⌉``) delimiting its scope.  The
marker is what lets the machine pop a handler once its body has returned, and
it tells an operation call which part of the surrounding term belongs to the
continuation the topmost handler captures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .syntax import (
    Bool,
    Comp,
    Cont,
    HandlerExpr,
    Handling,
    If,
    Int,
    Let,
    OpCall,
    Resume,
    Return,
    Str,
    Value,
    Var,
    With,
    free_vars,
    names,
    show,
    show_value,
    subst,
)

DEFAULT_STEP_LIMIT = 10**6
HOST_PRINT = "print"

RULES = (
    "LetStep",
    "LetBind",
    "IfTrue",
    "IfFalse",
    "With",
    "OpHandle",
    "OpForward",
    "Unwind",
    "Resume",
    "Host",
)


@dataclass(frozen=True)
class Configuration:
    stack: tuple[HandlerExpr, ...]  # topmost handler first
    comp: Comp

    def __str__(self) -> str:
        stack = " : ".join([h.label for h in self.stack] + ["∅"])
        return f"⟨{stack}; {show(self.comp)}⟩"


@dataclass(frozen=True)
class UnhandledOp:
    op: str

    def __str__(self) -> str:
        return f'UnhandledOp("{self.op}")'


@dataclass(frozen=True)
class FreeVariable:
    name: str

    def __str__(self) -> str:
        return f'FreeVariable("{self.name}")'


@dataclass(frozen=True)
class BadValue:
    """A value of the wrong shape in a position that inspects it."""

    where: str
    value: str

    def __str__(self) -> str:
        return f"BadValue({self.where}: {self.value})"


StuckReason = Union[UnhandledOp, FreeVariable, BadValue]


@dataclass(frozen=True)
class Stepped:
    config: Configuration
    rule: str
    emitted: Optional[Value] = None  # set when the host printed something


@dataclass(frozen=True)
class Terminal:
    value: Value


@dataclass(frozen=True)
class Stuck:
    reason: StuckReason


StepResult = Union[Stepped, Terminal, Stuck]


class StuckError(RuntimeError):
    def __init__(self, reason: StuckReason, config: Configuration) -> None:
        super().__init__(f"stuck: {reason} at {config}")
        self.reason = reason
        self.config = config


class StepLimitExceeded(RuntimeError):
    pass


# -- evaluation contexts -----------------------------------------------------------
# A context is a list of frames from the outside in; ``plug`` rebuilds the term.


@dataclass(frozen=True)
class _LetFrame:
    var: str
    body: Comp


@dataclass(frozen=True)
class _HandleFrame:
    handler: HandlerExpr


_Frame = Union[_LetFrame, _HandleFrame]


def plug(frames: list[_Frame], c: Comp) -> Comp:
    for f in reversed(frames):
        c = Let(f.var, c, f.body) if isinstance(f, _LetFrame) else Handling(f.handler, c)
    return c


def decompose(c: Comp) -> tuple[list[_Frame], Comp]:
    """Split ``c`` into an evaluation context and the redex at its hole.

    The redex is never a ``Let`` whose bound part can step on its own and never
    a ``Handling`` around a non-value: those are frames.
    """
    frames: list[_Frame] = []
    while True:
        if isinstance(c, Let) and isinstance(c.bound, (Let, Handling, If, With, Resume)):
            frames.append(_LetFrame(c.var, c.body))
            c = c.bound
        elif isinstance(c, Handling) and not isinstance(c.body, Return):
            frames.append(_HandleFrame(c.handler))
            c = c.body
        else:
            return frames, c


def _fresh_name(c: Comp, stack: tuple[HandlerExpr, ...]) -> str:
    used = set(names(c))
    for h in stack:
        used |= set(names(h))
    i = 0
    while f"_k{i}" in used:
        i += 1
    return f"_k{i}"


def _first_var(*values: Value) -> Optional[str]:
    for v in values:
        if isinstance(v, Var):
            return v.name
    return None


def step(config: Configuration, host: frozenset[str] = frozenset({HOST_PRINT})) -> StepResult:
    """One reduction step.

    ``host`` names operations the machine itself performs once they reach the
    empty stack (``print`` returns its argument and emits it).
    """
    stack, comp = config.stack, config.comp
    frames, redex = decompose(comp)

    def stepped(new_comp: Comp, new_stack=stack, rule: str = "", emitted=None, context=None) -> Stepped:
        # a rule firing inside the bound part of a Let is reported as LetStep(rule)
        context = frames if context is None else context
        if any(isinstance(f, _LetFrame) for f in context):
            rule = f"LetStep({rule})"
        return Stepped(Configuration(new_stack, new_comp), rule, emitted)

    # bare operation call: name its result so the op rules see ``do y <- op(v) in c``
    if isinstance(redex, OpCall):
        y = _fresh_name(comp, stack)
        redex = Let(y, redex, Return(Var(y)))

    if isinstance(redex, Return):
        if frames:
            raise AssertionError("decompose never leaves a return under a frame")
        bad = _first_var(redex.value)
        if bad is not None:
            return Stuck(FreeVariable(bad))
        return Terminal(redex.value)

    if isinstance(redex, Handling):
        # the body returned: pop the handler
        if not stack or stack[0] != redex.handler:
            raise AssertionError("handler stack out of sync with the term")
        return stepped(plug(frames, redex.body), stack[1:], "Unwind")

    if isinstance(redex, If):
        v = redex.cond
        if isinstance(v, Var):
            return Stuck(FreeVariable(v.name))
        if not isinstance(v, Bool):
            return Stuck(BadValue("if", show_value(v)))
        branch, rule = (redex.then, "IfTrue") if v.value else (redex.orelse, "IfFalse")
        return stepped(plug(frames, branch), rule=rule)

    if isinstance(redex, With):
        return stepped(plug(frames, Handling(redex.handler, redex.body)), (redex.handler,) + stack, "With")

    if isinstance(redex, Resume):
        k, w = redex.cont, redex.arg
        bad = _first_var(k, w)
        if bad is not None:
            return Stuck(FreeVariable(bad))
        if not isinstance(k, Cont):
            return Stuck(BadValue("resume", show_value(k)))
        body = With(k.handler, subst(k.body, k.var, w))
        return stepped(plug(frames, body), rule="Resume")

    assert isinstance(redex, Let)
    if isinstance(redex.bound, Return):
        v = redex.bound.value
        if isinstance(v, Var):
            return Stuck(FreeVariable(v.name))
        return stepped(plug(frames, subst(redex.body, redex.var, v)), rule="LetBind")

    assert isinstance(redex.bound, OpCall)
    call = redex.bound
    if isinstance(call.arg, Var):
        return Stuck(FreeVariable(call.arg.name))
    inner = _innermost_handle(frames)
    if inner is None:
        if stack:
            raise AssertionError("handler stack out of sync with the term")
        if call.op in host:
            rest = subst(redex.body, redex.var, call.arg)
            return stepped(plug(frames, rest), rule="Host", emitted=call.arg)
        return Stuck(UnhandledOp(call.op))

    outer, h, between = frames[:inner], frames[inner].handler, frames[inner + 1 :]
    if not stack or stack[0] != h:
        raise AssertionError("handler stack out of sync with the term")
    resumed = plug(between, redex.body)
    clause = h.clause(call.op)
    if clause is None:
        new = Let(redex.var, call, With(h, resumed))
        return stepped(plug(outer, new), stack[1:], "OpForward", context=outer)
    body = subst(clause.body, clause.param, call.arg)
    if clause.cont is None:
        new = Let(redex.var, body, With(h, resumed))
    else:
        k = Cont(redex.var, h, resumed)
        new = subst(body, clause.cont, k)
    return stepped(plug(outer, new), stack[1:], "OpHandle", context=outer)


def _innermost_handle(frames: list[_Frame]) -> Optional[int]:
    for i in range(len(frames) - 1, -1, -1):
        if isinstance(frames[i], _HandleFrame):
            return i
    return None


# -- rule matchers ------------------------------------------------------------------
# Each predicate inspects a configuration on its own, without going through
# ``step``; ``applicable_rules`` lists every rule whose premise holds.


def _spine(c: Comp):
    """Yield ``(inside_let, term)`` for each position on the evaluation spine."""
    depth_let = False
    while True:
        yield depth_let, c
        if isinstance(c, Let):
            depth_let = True
            c = c.bound
        elif isinstance(c, Handling):
            c = c.body
        else:
            return


def _is_op_redex(c: Comp) -> bool:
    return (isinstance(c, Let) and isinstance(c.bound, OpCall)) or isinstance(c, OpCall)


def _handler_for(config: Configuration) -> tuple[Optional[HandlerExpr], Optional[str]]:
    op_term = None
    top = None
    for _, c in _spine(config.comp):
        if isinstance(c, Handling):
            top = c.handler
        if _is_op_redex(c):
            op_term = c.bound if isinstance(c, Let) else c
            break
    return top, (op_term.op if op_term is not None else None)


def applicable_rules(config: Configuration, host: frozenset[str] = frozenset({HOST_PRINT})) -> list[str]:
    rules = []
    spine = list(_spine(config.comp))
    last = spine[-1][1]

    if any(isinstance(c, Let) and isinstance(c.bound, Return) and not isinstance(c.bound.value, Var) for _, c in spine):
        rules.append("LetBind")
    if isinstance(last, If) and isinstance(last.cond, Bool):
        rules.append("IfTrue" if last.cond.value else "IfFalse")
    if isinstance(last, With):
        rules.append("With")
    if isinstance(last, Resume) and isinstance(last.cont, Cont) and not isinstance(last.arg, Var):
        rules.append("Resume")
    if any(isinstance(c, Handling) and isinstance(c.body, Return) for _, c in spine):
        rules.append("Unwind")
    op_redexes = [c for _, c in spine if _is_op_redex(c)]
    if op_redexes:
        top, op = _handler_for(config)
        arg = (op_redexes[0].bound if isinstance(op_redexes[0], Let) else op_redexes[0]).arg
        if not isinstance(arg, Var):
            if top is None:
                if op in host:
                    rules.append("Host")
            elif top.clause(op) is not None:
                rules.append("OpHandle")
            else:
                rules.append("OpForward")
    return rules


def rule_base(name: str) -> str:
    """``LetStep(With)`` -> ``With``."""
    while name.startswith("LetStep("):
        name = name[len("LetStep(") : -1]
    return name


# -- drivers -------------------------------------------------------------------------


@dataclass
class StepTrace:
    configs: list[Configuration]
    rules: list[str]
    outcome: Union[Terminal, Stuck, None] = None
    output: list[Value] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def __getitem__(self, i):
        return self.configs[i]

    def lines(self) -> list[str]:
        out = [str(self.configs[0])]
        for rule, cfg in zip(self.rules, self.configs[1:]):
            out.append(f"  --{rule}--> {cfg}")
        if isinstance(self.outcome, Terminal):
            out.append(f"Terminal({show_value(self.outcome.value)})")
        elif isinstance(self.outcome, Stuck):
            out.append(f"Stuck({self.outcome.reason})")
        return out


def _check_mode(c: Comp, mode: str) -> None:
    if mode not in ("one-shot", "multi-shot"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "one-shot" and _has_cont_binder(c):
        raise ValueError("continuation binders need multi-shot mode")


def _has_cont_binder(c) -> bool:
    if isinstance(c, (With, Handling)):
        return any(cl.cont is not None or _has_cont_binder(cl.body) for cl in c.handler.clauses) or _has_cont_binder(
            c.body
        )
    if isinstance(c, Let):
        return _has_cont_binder(c.bound) or _has_cont_binder(c.body)
    if isinstance(c, If):
        return _has_cont_binder(c.then) or _has_cont_binder(c.orelse)
    return False


def trace_steps(
    c: Comp,
    mode: str = "one-shot",
    step_limit: int = DEFAULT_STEP_LIMIT,
) -> StepTrace:
    """Every configuration from ``⟨∅; c⟩`` to the end, plus how it ended."""
    _check_mode(c, mode)
    cfg = Configuration((), c)
    trace = StepTrace([cfg], [])
    while True:
        res = step(cfg)
        if isinstance(res, Stepped):
            if len(trace.rules) >= step_limit:
                raise StepLimitExceeded(f"no result after {step_limit} steps")
            cfg = res.config
            trace.configs.append(cfg)
            trace.rules.append(res.rule)
            if res.emitted is not None:
                trace.output.append(res.emitted)
            continue
        trace.outcome = res
        return trace


def evaluate(
    c: Comp,
    mode: str = "one-shot",
    step_limit: int = DEFAULT_STEP_LIMIT,
    output: Optional[list] = None,
    on_emit: Optional[Callable[[Value], None]] = None,
) -> Value:
    """Run ``c`` from the empty stack to a value.

    Values printed through the host ``print`` operation are appended to
    ``output`` and passed to ``on_emit`` as they happen.
    """
    _check_mode(c, mode)
    unbound = free_vars(c)
    if unbound:
        raise StuckError(FreeVariable(sorted(unbound)[0]), Configuration((), c))
    cfg = Configuration((), c)
    taken = 0
    while True:
        res = step(cfg)
        if isinstance(res, Stepped):
            taken += 1
            if taken > step_limit:
                raise StepLimitExceeded(f"no result after {step_limit} steps")
            cfg = res.config
            if res.emitted is not None:
                if output is not None:
                    output.append(res.emitted)
                if on_emit is not None:
                    on_emit(res.emitted)
            continue
        if isinstance(res, Terminal):
            return res.value
        raise StuckError(res.reason, cfg)


def resume_continuation(k: Cont, v: Value, step_limit: int = DEFAULT_STEP_LIMIT, output: Optional[list] = None) -> Value:
    """Run a captured continuation on ``v`` to a value, independently of other uses."""
    return evaluate(Resume(k, v), "multi-shot", step_limit, output)


def to_python(v: Value):
    if isinstance(v, (Bool, Int, Str)):
        return v.value
    return show_value(v)
