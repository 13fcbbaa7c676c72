"""``effscript`` command line.

Exit codes: 0 ok, 1 workflow failure, 2 configuration or input error,
3 Tree-of-Thoughts found no valid solution.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import calculus
from .bench import StackSpec, bench, run_research_topics, run_tot
from .llm import ConfigurationError, Trace, TraceFormatError

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NO_SOLUTION = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage errors exit 2 like every other configuration error
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _stack_flags(p: argparse.ArgumentParser, llm_default: str = "mock") -> None:
    p.add_argument("--mode", choices=["async", "sync"], default="async")
    p.add_argument("--llm", choices=["live", "mock", "replay", "record"], default=llm_default)
    p.add_argument("--trace", metavar="PATH", help="trace file for --llm replay/record")
    p.add_argument("--record-from", choices=["mock", "live"], default="mock", help="backend under --llm record")
    p.add_argument("--seq", action="store_true", help="run callbacks in submission order")
    p.add_argument("--latency-ms", type=float, default=0.0, help="mock backend latency")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clock", choices=["wall", "virtual"], default="wall")
    p.add_argument("--strict", action="store_true", help="replay: require prompts to match the trace")
    p.add_argument("--json", action="store_true", help="emit the result as JSON")


def _spec(args) -> StackSpec:
    return StackSpec(
        mode=args.mode,
        llm=args.llm,
        trace=args.trace,
        record_from=args.record_from,
        seq=args.seq,
        latency_ms=args.latency_ms,
        seed=args.seed,
        clock=args.clock,
        strict_replay=args.strict,
    )


def _numbers(text: Sequence[str]) -> list[int]:
    joined = " ".join(text).replace(",", " ").replace(";", " ").strip("[] ")
    try:
        nums = [int(x) for x in joined.split()]
    except ValueError:
        raise ConfigurationError(f"expected four integers, got {' '.join(text)!r}") from None
    if len(nums) != 4:
        raise ConfigurationError(f"expected four integers, got {len(nums)}")
    if any(n <= 0 for n in nums):
        raise ConfigurationError("numbers must be positive")
    return nums


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="effscript", description="Effect-handler scripting toolkit for LLM workflows.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a workflow")
    run_sub = run.add_subparsers(dest="workflow", required=True, parser_class=_Parser)
    rt = run_sub.add_parser("research-topics", help="list topics of a research area with descriptions")
    rt.add_argument("--area", default=None)
    _stack_flags(rt)
    tot = run_sub.add_parser("tot", help="Tree-of-Thoughts search for the Game of 24")
    tot.add_argument("numbers", nargs="+", help="four integers, e.g. 4 9 10 13")
    tot.add_argument("--n-steps", type=int, default=4)
    tot.add_argument("--n-select", type=int, default=5)
    tot.add_argument("--n-eval", type=int, default=3)
    _stack_flags(tot)

    b = sub.add_parser("bench", help="compare async and sync handler stacks")
    b.add_argument("workflow", choices=["tot", "research-topics"])
    b.add_argument("--input", action="append", default=None, help="ToT quadruple (repeatable) or research area")
    b.add_argument("--trials", type=int, default=3)
    b.add_argument("--latency-ms", type=float, default=100.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--clock", choices=["wall", "virtual"], default="wall")
    b.add_argument("--json", action="store_true")

    t = sub.add_parser("trace", help="record, replay or inspect LLM call traces")
    t_sub = t.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action in ("record", "replay"):
        tp = t_sub.add_parser(action, help=f"{action} a workflow run")
        tp.add_argument("path")
        tp.add_argument("workflow", choices=["research-topics", "tot"])
        tp.add_argument("numbers", nargs="*", help="ToT input")
        tp.add_argument("--mode", choices=["async", "sync"], default="async")
        tp.add_argument("--seq", action="store_true", help="run callbacks in submission order")
        tp.add_argument("--latency-ms", type=float, default=0.0)
        tp.add_argument("--seed", type=int, default=0)
        if action == "record":
            tp.add_argument("--record-from", choices=["mock", "live"], default="mock")
        else:
            tp.add_argument("--strict", action="store_true")
    ti = t_sub.add_parser("inspect", help="print the records of a trace file")
    ti.add_argument("path")
    ti.add_argument("--json", action="store_true")

    c = sub.add_parser("calc", help="run programs of the handler calculus")
    c_sub = c.add_subparsers(dest="action", required=True, parser_class=_Parser)
    cr = c_sub.add_parser("run", help="evaluate a program")
    cr.add_argument("file")
    cr.add_argument("--multishot", action="store_true")
    cr.add_argument("--step-limit", type=int, default=calculus.DEFAULT_STEP_LIMIT)
    ct = c_sub.add_parser("trace", help="print every configuration")
    ct.add_argument("file")
    ct.add_argument("--multishot", action="store_true")
    ct.add_argument("--step-limit", type=int, default=calculus.DEFAULT_STEP_LIMIT)
    return parser


def _emit(line: str) -> None:
    print(line, flush=True)


def cmd_research_topics(args, spec: StackSpec) -> int:
    res = run_research_topics(spec, area=args.area, sink=None if args.json else _emit)
    if args.json:
        report = res.result
        print(json.dumps({"area": report.area, "entries": [{"topic": t, "description": d} for t, d in report.entries],
                          "log": res.lines, "wall_s": round(res.wall_s, 6)}, indent=2))
    return EXIT_OK


def cmd_tot(args, spec: StackSpec, numbers: list[int]) -> int:
    res = run_tot(spec, numbers, args.n_steps, args.n_select, args.n_eval, sink=None if args.json else _emit)
    outcome = res.result
    if args.json:
        print(json.dumps({"input": numbers, "frontier": [str(s) for s in outcome.frontier],
                          "answer": outcome.answer, "wall_s": round(res.wall_s, 6)}, indent=2))
    elif outcome.answer is not None:
        print(f"answer: {outcome.answer}")
    else:
        print("no valid solution found", file=sys.stderr)
    return EXIT_OK if outcome.answer is not None else EXIT_NO_SOLUTION


def cmd_bench(args) -> int:
    inputs = None
    if args.input:
        inputs = [_numbers([x]) for x in args.input] if args.workflow == "tot" else args.input
    report = bench(args.workflow, inputs, trials=args.trials, latency_ms=args.latency_ms, seed=args.seed, clock=args.clock)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        print(report.table())
    return EXIT_OK


def cmd_trace(args) -> int:
    if args.action == "inspect":
        trace = Trace.load(args.path)
        if args.json:
            for r in trace.records:
                print(json.dumps(asdict(r), ensure_ascii=False))
            return EXIT_OK
        print(f"{'seq':>4}  {'kind':<8} {'schema':<14} {'latency':>9}  prompt -> response")
        for r in trace.records:
            print(f"{r.seq:>4}  {r.kind:<8} {r.schema_id or '-':<14} {r.latency_ms:>7.1f}ms  "
                  f"{_clip(r.prompt)} -> {_clip(r.response)}")
        return EXIT_OK
    if args.action == "replay":
        Trace.load(args.path)  # reject malformed files before running anything
    spec = StackSpec(
        mode=args.mode,
        llm=args.action,
        trace=args.path,
        record_from=getattr(args, "record_from", "mock"),
        seq=args.seq,
        latency_ms=args.latency_ms,
        seed=args.seed,
        strict_replay=getattr(args, "strict", False),
    )
    args.json = False
    if args.workflow == "research-topics":
        args.area = None
        return cmd_research_topics(args, spec)
    args.n_steps, args.n_select, args.n_eval = 4, 5, 3
    return cmd_tot(args, spec, _numbers(args.numbers))


def _clip(text: str, width: int = 48) -> str:
    text = text.replace("\n", "\\n")
    return text if len(text) <= width else text[: width - 3] + "..."


def cmd_calc(args) -> int:
    source = Path(args.file).read_text(encoding="utf-8")
    program = calculus.parse_program(source, multishot=args.multishot)
    mode = "multi-shot" if args.multishot else "one-shot"
    if args.action == "run":
        value = calculus.evaluate(
            program, mode, args.step_limit, on_emit=lambda v: print(calculus.show_value(v), flush=True)
        )
        print(f"=> {calculus.show_value(value)}")
        return EXIT_OK
    trace = calculus.trace_steps(program, mode, args.step_limit)
    for line in trace.lines():
        print(line)
    return EXIT_OK if isinstance(trace.outcome, calculus.Terminal) else EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = _spec(args)
            spec.check()
            if args.workflow == "research-topics":
                return cmd_research_topics(args, spec)
            return cmd_tot(args, spec, _numbers(args.numbers))
        if args.command == "bench":
            return cmd_bench(args)
        if args.command == "trace":
            return cmd_trace(args)
        return cmd_calc(args)
    except TraceFormatError as exc:
        print(f"error: malformed trace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, calculus.ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (calculus.StuckError, calculus.StepLimitExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # anything raised by the workflow itself
        print(f"error: workflow failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
