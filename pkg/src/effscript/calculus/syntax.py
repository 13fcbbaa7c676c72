"""Abstract syntax of the handler calculus, printing and substitution."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Optional, Union

# -- values ---------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Int:
    value: int


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Cont:
    """Captured continuation ``var. with handler handle body`` (multi-shot only)."""

    var: str
    handler: "HandlerExpr"
    body: "Comp"


Value = Union[Var, Bool, Int, Str, Cont]

# -- computations ------------------------------------------------------------


@dataclass(frozen=True)
class Return:
    value: Value


@dataclass(frozen=True)
class Let:
    var: str
    bound: "Comp"
    body: "Comp"


@dataclass(frozen=True)
class If:
    cond: Value
    then: "Comp"
    orelse: "Comp"


@dataclass(frozen=True)
class OpCall:
    op: str
    arg: Value


@dataclass(frozen=True)
class With:
    handler: "HandlerExpr"
    body: "Comp"


@dataclass(frozen=True)
class Resume:
    cont: Value
    arg: Value


@dataclass(frozen=True)
class Handling:
    """Body running under an already-pushed handler; popped when it returns."""

    handler: "HandlerExpr"
    body: "Comp"


Comp = Union[Return, Let, If, OpCall, With, Resume, Handling]


@dataclass(frozen=True)
class Clause:
    op: str
    param: str
    body: Comp
    cont: Optional[str] = None


@dataclass(frozen=True)
class HandlerExpr:
    clauses: tuple[Clause, ...]

    def __post_init__(self) -> None:
        ops = [c.op for c in self.clauses]
        if len(set(ops)) != len(ops):
            raise ValueError(f"duplicate operation in handler: {ops}")

    def clause(self, op: str) -> Optional[Clause]:
        for c in self.clauses:
            if c.op == op:
                return c
        return None

    @property
    def label(self) -> str:
        return "{" + ",".join(c.op for c in self.clauses) + "}"


# -- printing -----------------------------------------------------------------


def show_value(v: Value) -> str:
    if isinstance(v, Var):
        return v.name
    if isinstance(v, Bool):
        return "true" if v.value else "false"
    if isinstance(v, Int):
        return str(v.value)
    if isinstance(v, Str):
        return json.dumps(v.value, ensure_ascii=False)
    if isinstance(v, Cont):
        return f"⟪{v.var}. with {show_handler(v.handler)} handle {show(v.body)}⟫"
    raise TypeError(f"not a value: {v!r}")


def show_handler(h: HandlerExpr) -> str:
    parts = []
    for c in h.clauses:
        binders = c.param if c.cont is None else f"{c.param}, {c.cont}"
        parts.append(f"{c.op}({binders}) -> {show(c.body)}")
    return "handler {" + ", ".join(parts) + "}"


def show(c: Comp) -> str:
    """Concrete syntax for ``c``; re-parses to the same tree for source terms."""
    if isinstance(c, Return):
        return f"return {show_value(c.value)}"
    if isinstance(c, Let):
        return f"do {c.var} <- {show(c.bound)} in {show(c.body)}"
    if isinstance(c, If):
        return f"if {show_value(c.cond)} then {show(c.then)} else {show(c.orelse)}"
    if isinstance(c, OpCall):
        return f"{c.op}({show_value(c.arg)})"
    if isinstance(c, With):
        return f"with {show_handler(c.handler)} handle {show(c.body)}"
    if isinstance(c, Resume):
        return f"{show_value(c.cont)}({show_value(c.arg)})"
    if isinstance(c, Handling):
        return f"⌈{show(c.body)}⌉"
    raise TypeError(f"not a computation: {c!r}")


# -- variables and substitution -------------------------------------------------


def names(c) -> Iterator[str]:
    """Every variable name occurring in a term, bound or free."""
    if isinstance(c, Var):
        yield c.name
    elif isinstance(c, Cont):
        yield c.var
        yield from names(c.handler)
        yield from names(c.body)
    elif isinstance(c, (Bool, Int, Str)):
        return
    elif isinstance(c, Return):
        yield from names(c.value)
    elif isinstance(c, Let):
        yield c.var
        yield from names(c.bound)
        yield from names(c.body)
    elif isinstance(c, If):
        yield from names(c.cond)
        yield from names(c.then)
        yield from names(c.orelse)
    elif isinstance(c, OpCall):
        yield from names(c.arg)
    elif isinstance(c, (With, Handling)):
        yield from names(c.handler)
        yield from names(c.body)
    elif isinstance(c, Resume):
        yield from names(c.cont)
        yield from names(c.arg)
    elif isinstance(c, HandlerExpr):
        for cl in c.clauses:
            yield cl.param
            if cl.cont is not None:
                yield cl.cont
            yield from names(cl.body)
    else:
        raise TypeError(f"not a term: {c!r}")


def free_vars(c) -> set[str]:
    if isinstance(c, Var):
        return {c.name}
    if isinstance(c, (Bool, Int, Str)):
        return set()
    if isinstance(c, Cont):
        return (free_vars(c.handler) | free_vars(c.body)) - {c.var}
    if isinstance(c, Return):
        return free_vars(c.value)
    if isinstance(c, Let):
        return free_vars(c.bound) | (free_vars(c.body) - {c.var})
    if isinstance(c, If):
        return free_vars(c.cond) | free_vars(c.then) | free_vars(c.orelse)
    if isinstance(c, OpCall):
        return free_vars(c.arg)
    if isinstance(c, (With, Handling)):
        return free_vars(c.handler) | free_vars(c.body)
    if isinstance(c, Resume):
        return free_vars(c.cont) | free_vars(c.arg)
    if isinstance(c, HandlerExpr):
        out: set[str] = set()
        for cl in c.clauses:
            out |= free_vars(cl.body) - {cl.param, cl.cont}
        return out
    raise TypeError(f"not a term: {c!r}")


def fresh(base: str, avoid: set[str]) -> str:
    stem = base.rstrip("0123456789'") or "t"
    i = 1
    while f"{stem}{i}" in avoid:
        i += 1
    return f"{stem}{i}"


def subst(c, x: str, v: Value):
    """Capture-avoiding ``[v/x]c``."""
    fv = free_vars(v)

    def binder(name: str, scope) -> tuple[str, object]:
        # rename ``name`` in ``scope`` if it would capture a free variable of v
        if name in fv:
            new = fresh(name, fv | set(names(scope)) | {x})
            return new, subst(scope, name, Var(new))
        return name, scope

    if isinstance(c, Var):
        return v if c.name == x else c
    if isinstance(c, (Bool, Int, Str)):
        return c
    if isinstance(c, Cont):
        if c.var == x:
            return Cont(c.var, subst(c.handler, x, v), c.body)
        var, body = binder(c.var, c.body)
        return Cont(var, subst(c.handler, x, v), subst(body, x, v))
    if isinstance(c, Return):
        return Return(subst(c.value, x, v))
    if isinstance(c, Let):
        bound = subst(c.bound, x, v)
        if c.var == x:
            return Let(c.var, bound, c.body)
        var, body = binder(c.var, c.body)
        return Let(var, bound, subst(body, x, v))
    if isinstance(c, If):
        return If(subst(c.cond, x, v), subst(c.then, x, v), subst(c.orelse, x, v))
    if isinstance(c, OpCall):
        return OpCall(c.op, subst(c.arg, x, v))
    if isinstance(c, With):
        return With(subst(c.handler, x, v), subst(c.body, x, v))
    if isinstance(c, Handling):
        return Handling(subst(c.handler, x, v), subst(c.body, x, v))
    if isinstance(c, Resume):
        return Resume(subst(c.cont, x, v), subst(c.arg, x, v))
    if isinstance(c, HandlerExpr):
        return HandlerExpr(tuple(_subst_clause(cl, x, v, fv) for cl in c.clauses))
    raise TypeError(f"not a term: {c!r}")


def _subst_clause(cl: Clause, x: str, v: Value, fv: set[str]) -> Clause:
    if x in (cl.param, cl.cont):
        return cl
    param, cont, body = cl.param, cl.cont, cl.body
    for attr in ("param", "cont"):
        name = param if attr == "param" else cont
        if name is not None and name in fv:
            new = fresh(name, fv | set(names(body)) | {x, param, cont or ""})
            body = subst(body, name, Var(new))
            if attr == "param":
                param = new
            else:
                cont = new
    return Clause(cl.op, param, subst(body, x, v), cont)
