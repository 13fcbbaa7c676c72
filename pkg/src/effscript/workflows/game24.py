"""Game of 24: solve states, exact arithmetic, brute-force oracle, handlers."""

from __future__ import annotations

import ast
import re
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

from ..core import Handler
from ..llm import complete
from ..runtime import FutureHandle, async_, await_
from .ops import expand, init, log, score, validate

TARGET = Fraction(24)
SCORE_VALUES = {"sure": 20.0, "likely": 1.0, "impossible": 0.001}

_NUM = r"-?\d+(?:/\d+)?"
_EQUATION = re.compile(rf"^\s*({_NUM})\s+([-+*/])\s+({_NUM})\s+=\s+({_NUM})")


class ValidationFailed(ValueError):
    pass


def fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def apply_op(a: Fraction, op: str, b: Fraction) -> Optional[Fraction]:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return None if b == 0 else a / b
    raise ValueError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class SolveState:
    """Partial solution: equations so far plus the numbers still unused."""

    equations: tuple[str, ...]
    remaining: tuple[Fraction, ...]
    answer: Optional[str] = None

    def __str__(self) -> str:
        eqs = "; ".join(self.equations)
        left = "; ".join(fmt(x) for x in self.remaining)
        text = f"[{eqs}] left: [{left}]"
        return text if self.answer is None else f"{text} answer: {self.answer}"

    def step(self, a: Fraction, op: str, b: Fraction) -> Optional["SolveState"]:
        """Successor after ``a op b``, or None if the move is not legal here."""
        c = apply_op(a, op, b)
        if c is None:
            return None
        pool = list(self.remaining)
        for x in (a, b):
            if x not in pool:
                return None
            pool.remove(x)
        equation = f"{fmt(a)} {op} {fmt(b)} = {fmt(c)}"
        return SolveState(self.equations + (equation,), tuple(sorted(pool + [c])))

    def inputs(self) -> tuple[Fraction, ...]:
        """Recover the starting numbers by undoing the equations."""
        pool = Counter(self.remaining)
        for eq in reversed(self.equations):
            a, _, b, c = parse_equation(eq)
            if pool[c] <= 0:
                raise ValueError(f"equation {eq!r} result not present")
            pool[c] -= 1
            pool[a] += 1
            pool[b] += 1
        return tuple(sorted(pool.elements()))


def parse_equation(text: str) -> tuple[Fraction, str, Fraction, Fraction]:
    m = _EQUATION.match(text)
    if not m:
        raise ValueError(f"not an equation: {text!r}")
    return Fraction(m.group(1)), m.group(2), Fraction(m.group(3)), Fraction(m.group(4))


def game24_init(numbers: Sequence[int]) -> SolveState:
    numbers = list(numbers)
    if len(numbers) != 4:
        raise ValueError(f"Game of 24 takes exactly 4 numbers, got {len(numbers)}")
    for n in numbers:
        if isinstance(n, bool) or not isinstance(n, int) or n <= 0:
            raise TypeError(f"inputs must be positive integers, got {n!r}")
    return SolveState((), tuple(sorted(Fraction(n) for n in numbers)))


def enumerate_moves(state: SolveState) -> list[SolveState]:
    """All ordered pairs of remaining numbers under + - * /, canonical order."""
    out = []
    nums = state.remaining
    for i, a in enumerate(nums):
        for j, b in enumerate(nums):
            if i == j:
                continue
            for op in "+-*/":
                nxt = state.step(a, op, b)
                if nxt is not None:
                    out.append(nxt)
    return out


# -- brute force oracle ---------------------------------------------------


@lru_cache(maxsize=None)
def _solve(nums: tuple[tuple[Fraction, str], ...]) -> Optional[str]:
    if len(nums) == 1:
        return nums[0][1] if nums[0][0] == TARGET else None
    for i in range(len(nums)):
        for j in range(len(nums)):
            if i == j:
                continue
            (a, ea), (b, eb) = nums[i], nums[j]
            rest = [nums[k] for k in range(len(nums)) if k not in (i, j)]
            for op in "+-*/":
                if op in "+*" and i > j:
                    continue
                c = apply_op(a, op, b)
                if c is None:
                    continue
                found = _solve(tuple(sorted(rest + [(c, f"({ea} {op} {eb})")])))
                if found is not None:
                    return found
    return None


def brute_solve(numbers: Iterable) -> Optional[str]:
    """Witness expression reaching 24 with exact arithmetic, or None."""
    nums = tuple(sorted((Fraction(n), fmt(Fraction(n))) for n in numbers))
    if not nums:
        return None
    found = _solve(nums)
    if found is None:
        return None
    return found[1:-1] if found.startswith("(") and len(nums) > 1 else found


def solvable(numbers: Iterable) -> bool:
    return brute_solve(numbers) is not None


# -- expressions ----------------------------------------------------------

_OPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def evaluate_expression(expr: str) -> tuple[Fraction, list[Fraction]]:
    """Exact value of an arithmetic expression and the literals it uses."""
    used: list[Fraction] = []

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
            used.append(Fraction(node.value))
            return Fraction(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            left, right = ev(node.left), ev(node.right)
            result = apply_op(left, _OPS[type(node.op)], right)
            if result is None:
                raise ValidationFailed("division by zero")
            return result
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ValidationFailed(f"unsupported syntax in expression: {ast.dump(node)}")

    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValidationFailed(f"unparseable expression {expr!r}") from exc
    return ev(tree), used


def check_answer(answer: str, numbers: Iterable) -> str:
    """Validate ``"<expr> = 24"`` (or a bare expression) against the inputs."""
    expr = answer.split("=")[0].strip()
    if not expr:
        raise ValidationFailed("empty expression")
    value, used = evaluate_expression(expr)
    if value != TARGET:
        raise ValidationFailed(f"{expr} evaluates to {fmt(value)}, not 24")
    if sorted(used) != sorted(Fraction(n) for n in numbers):
        raise ValidationFailed(f"{expr} does not use exactly the numbers {[fmt(Fraction(n)) for n in numbers]}")
    return f"{expr} = 24"


def reconstruct(state: SolveState) -> str:
    """Fold the equation history into one expression string."""
    exprs = [(x, fmt(x)) for x in state.inputs()]
    for eq in state.equations:
        a, op, b, c = parse_equation(eq)
        ia = next(k for k, (v, _) in enumerate(exprs) if v == a)
        ea = exprs.pop(ia)[1]
        ib = next(k for k, (v, _) in enumerate(exprs) if v == b)
        eb = exprs.pop(ib)[1]
        exprs.append((c, f"({ea} {op} {eb})"))
    if len(exprs) != 1:
        raise ValidationFailed("equations do not reduce to a single number")
    expr = exprs[0][1]
    if expr.startswith("(") and state.equations:
        expr = expr[1:-1]
    return f"{expr} = {fmt(exprs[0][0])}"


# -- prompts --------------------------------------------------------------

PROPOSE_HEADER = "Propose possible next steps for the Game of 24."
VALUE_HEADER = "Evaluate if given numbers can reach 24 (sure/likely/impossible)."
ANSWER_HEADER = "Use the steps to write a single expression that equals 24."


def propose_prompt(state: SolveState) -> str:
    nums = " ".join(fmt(x) for x in state.remaining)
    return f"{PROPOSE_HEADER}\nOne step combines two numbers into one.\nInput: {nums}\nPossible next steps:"


def value_prompt(state: SolveState) -> str:
    nums = " ".join(fmt(x) for x in state.remaining)
    return f"{VALUE_HEADER}\nInput: {nums}\nAnswer with one word."


def answer_prompt(state: SolveState) -> str:
    nums = " ".join(fmt(x) for x in state.inputs())
    steps = "\n".join(state.equations)
    return f"{ANSWER_HEADER}\nInput: {nums}\nSteps:\n{steps}\nAnswer:"


def _prompt_numbers(prompt: str) -> list[Fraction]:
    m = re.search(r"^Input: (.*)$", prompt, re.MULTILINE)
    if m is None:
        raise ValueError("prompt has no Input line")
    return [Fraction(t) for t in m.group(1).split()]


def parse_proposals(state: SolveState, text: str) -> list[SolveState]:
    """Successors for each well-formed, arithmetically valid proposal line."""
    out = []
    for line in text.splitlines():
        try:
            a, op, b, c = parse_equation(line)
        except ValueError:
            continue
        if apply_op(a, op, b) != c:
            continue
        nxt = state.step(a, op, b)
        if nxt is not None:
            out.append(nxt)
    return out


def label_value(text: str) -> float:
    words = re.findall(r"[a-z]+", text.lower())
    return SCORE_VALUES.get(words[-1], SCORE_VALUES["impossible"]) if words else SCORE_VALUES["impossible"]


def oracle_responder(kind: str, prompt: str, schema) -> Optional[str]:
    """Mock LLM rule answering Game-of-24 prompts exactly.

    Proposals enumerate every legal move; values come from the brute-force
    solver; answers fold the listed steps into one expression.
    """
    if prompt.startswith(PROPOSE_HEADER):
        nums = _prompt_numbers(prompt)
        state = SolveState((), tuple(sorted(nums)))
        lines = []
        for nxt in enumerate_moves(state):
            left = " ".join(fmt(x) for x in nxt.remaining)
            lines.append(f"{nxt.equations[-1]} (left: {left})")
        return "\n".join(lines)
    if prompt.startswith(VALUE_HEADER):
        return "sure" if solvable(_prompt_numbers(prompt)) else "impossible"
    if prompt.startswith(ANSWER_HEADER):
        steps = prompt.split("Steps:\n", 1)[1].rsplit("\nAnswer:", 1)[0]
        equations = tuple(s for s in steps.splitlines() if s.strip())
        remaining = tuple(sorted(_prompt_numbers(prompt)))
        state = SolveState((), remaining)
        for eq in equations:
            state = state.step(*parse_equation(eq)[:3])
        return reconstruct(state)
    return None


# -- handlers ---------------------------------------------------------------


class Game24Handler(Handler):
    """Synchronous Game-of-24 handler: every LLM call is awaited at once."""

    def __init__(self, numbers: Sequence[int], sink: Callable[[str], None] = print) -> None:
        super().__init__()
        self.numbers = list(numbers)
        self.sink = sink
        self.register(init, self.init)
        self.register(expand, self.expand)
        self.register(score, self.score)
        self.register(validate, self.validate)
        self.register(log, self.log)

    def init(self) -> SolveState:
        return game24_init(self.numbers)

    def log(self, msg) -> None:
        self.sink(str(msg))

    def expand(self, state: SolveState):
        if len(state.remaining) >= 2:
            return parse_proposals(state, await_(complete(propose_prompt(state))))
        return self._finish(state, await_(complete(answer_prompt(state)))) if self._ready(state) else []

    def score(self, state: SolveState, n_eval: int):
        return sum(label_value(await_(complete(value_prompt(state)))) for _ in range(n_eval))

    def validate(self, state: SolveState):
        if not self._ready(state):
            raise ValidationFailed(f"remaining numbers {[fmt(x) for x in state.remaining]} are not [24]")
        return check_answer(await_(complete(answer_prompt(state))), state.inputs())

    @staticmethod
    def _ready(state: SolveState) -> bool:
        return state.remaining == (TARGET,) and state.answer is None

    @staticmethod
    def _finish(state: SolveState, text: str) -> list[SolveState]:
        try:
            answer = check_answer(text.strip().splitlines()[-1] if text.strip() else "", state.inputs())
        except ValidationFailed:
            return []
        return [replace(state, answer=answer)]


class AsyncGame24Handler(Game24Handler):
    """Returns futures from ``expand``/``score``/``validate`` so calls overlap."""

    def expand(self, state: SolveState) -> FutureHandle:
        if len(state.remaining) >= 2:
            fut = complete(propose_prompt(state))

            async def proposals():
                return parse_proposals(state, await fut)

            return async_(proposals())
        if not self._ready(state):
            return async_(_value([]))
        fut = complete(answer_prompt(state))

        async def final():
            return self._finish(state, await fut)

        return async_(final())

    def score(self, state: SolveState, n_eval: int) -> FutureHandle:
        futs = [complete(value_prompt(state)) for _ in range(n_eval)]

        async def total():
            return sum([label_value(await f) for f in futs])

        return async_(total())

    def validate(self, state: SolveState) -> FutureHandle:
        if not self._ready(state):
            return async_(_raise(ValidationFailed(f"remaining numbers {[fmt(x) for x in state.remaining]} are not [24]")))
        fut = complete(answer_prompt(state))

        async def checked():
            return check_answer(await fut, state.inputs())

        return async_(checked())


async def _value(x):
    return x


async def _raise(exc: BaseException):
    raise exc
