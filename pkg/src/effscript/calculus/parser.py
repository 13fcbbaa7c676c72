"""Recursive-descent parser for ``.efc`` programs.

Besides the core grammar, parentheses may group a computation, and inside a
multi-shot clause ``k(v)`` resumes the continuation bound as ``k``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .syntax import (
    Bool,
    Clause,
    Comp,
    HandlerExpr,
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
)

KEYWORDS = {"return", "do", "in", "if", "then", "else", "with", "handle", "handler", "true", "false"}


class ParseError(SyntaxError):
    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()) -> None:
        self.line = line
        self.col = col
        self.expected = expected
        self.detail = message
        where = f"{line}:{col}"
        if expected:
            message = f"{message}; expected one of {', '.join(sorted(expected))}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword text, punctuation text, IDENT, INT, STRING or EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<STRING>"(?:[^"\\\n]|\\.)*")
  | (?P<INT>-?\d+)
  | (?P<IDENT>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<punct><-|->|[(){},])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "IDENT" and chunk in KEYWORDS:
            tokens.append(Token(chunk, chunk, line, col))
        elif kind == "punct":
            tokens.append(Token(chunk, chunk, line, col))
        elif kind != "ws":
            tokens.append(Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


_COMP_START = frozenset({"return", "do", "if", "with", "IDENT", "("})
_VALUE_START = frozenset({"IDENT", "true", "false", "INT", "STRING"})


class _Parser:
    def __init__(self, text: str, multishot: bool) -> None:
        self.tokens = tokenize(text)
        self.pos = 0
        self.multishot = multishot

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, expected) -> ParseError:
        tok = self.tok
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        return ParseError(f"unexpected {found}", tok.line, tok.col, frozenset(expected))

    def expect(self, kind: str) -> Token:
        if self.tok.kind != kind:
            raise self.fail({kind})
        tok = self.tok
        self.pos += 1
        return tok

    def program(self) -> Comp:
        c = self.comp(frozenset())
        if self.tok.kind != "EOF":
            raise self.fail({"EOF"})
        return c

    def comp(self, conts: frozenset[str]) -> Comp:
        # ``conts`` holds the continuation names currently in scope
        kind = self.tok.kind
        if kind == "return":
            self.pos += 1
            return Return(self.value())
        if kind == "do":
            self.pos += 1
            name = self.expect("IDENT").text
            self.expect("<-")
            bound = self.comp(conts)
            self.expect("in")
            return Let(name, bound, self.comp(conts - {name}))
        if kind == "if":
            self.pos += 1
            cond = self.value()
            self.expect("then")
            then = self.comp(conts)
            self.expect("else")
            return If(cond, then, self.comp(conts))
        if kind == "with":
            self.pos += 1
            h = self.handler(conts)
            self.expect("handle")
            return With(h, self.comp(conts))
        if kind == "IDENT":
            name = self.expect("IDENT").text
            self.expect("(")
            arg = self.value()
            self.expect(")")
            if name in conts:
                return Resume(Var(name), arg)
            return OpCall(name, arg)
        if kind == "(":
            self.pos += 1
            c = self.comp(conts)
            self.expect(")")
            return c
        raise self.fail(_COMP_START)

    def handler(self, conts: frozenset[str]) -> HandlerExpr:
        start = self.expect("handler")
        self.expect("{")
        clauses = [self.clause(conts)]
        while self.tok.kind == ",":
            self.pos += 1
            clauses.append(self.clause(conts))
        self.expect("}")
        seen: set[str] = set()
        for cl in clauses:
            if cl.op in seen:
                raise ParseError(f"duplicate clause for {cl.op}", start.line, start.col)
            seen.add(cl.op)
        return HandlerExpr(tuple(clauses))

    def clause(self, conts: frozenset[str]) -> Clause:
        op = self.expect("IDENT").text
        self.expect("(")
        param = self.expect("IDENT").text
        cont: Optional[str] = None
        if self.tok.kind == ",":
            if not self.multishot:
                tok = self.tok
                raise ParseError("continuation binder requires multi-shot mode", tok.line, tok.col, frozenset({")"}))
            self.pos += 1
            cont = self.expect("IDENT").text
        self.expect(")")
        self.expect("->")
        inner = conts - {param}
        if cont is not None:
            inner = inner | {cont}
        return Clause(op, param, self.comp(inner), cont)

    def value(self) -> Value:
        tok = self.tok
        if tok.kind == "IDENT":
            self.pos += 1
            return Var(tok.text)
        if tok.kind in ("true", "false"):
            self.pos += 1
            return Bool(tok.kind == "true")
        if tok.kind == "INT":
            self.pos += 1
            return Int(int(tok.text))
        if tok.kind == "STRING":
            self.pos += 1
            try:
                return Str(json.loads(tok.text))
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad string literal: {exc.msg}", tok.line, tok.col) from None
        raise self.fail(_VALUE_START)


def parse_program(text: str, multishot: bool = False) -> Comp:
    """Parse a whole program; raises :class:`ParseError` with line and column."""
    return _Parser(text, multishot).program()
