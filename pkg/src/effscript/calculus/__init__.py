"""Reference interpreter for a core calculus of effect handlers."""

from .machine import (
    DEFAULT_STEP_LIMIT,
    BadValue,
    Configuration,
    FreeVariable,
    StepLimitExceeded,
    StepResult,
    Stepped,
    StepTrace,
    Stuck,
    StuckError,
    Terminal,
    UnhandledOp,
    applicable_rules,
    evaluate,
    resume_continuation,
    rule_base,
    step,
    to_python,
    trace_steps,
)
from .parser import ParseError, parse_program, tokenize
from .syntax import (
    Bool,
    Clause,
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
    show,
    show_value,
    subst,
)

eval_program = evaluate
