import json
import subprocess
import sys
from importlib import resources

import pytest

from effscript.cli import main
from effscript.llm import Trace


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def program_path(name):
    return str(resources.files("effscript.calculus").joinpath("programs", name))


def test_research_topics_mock(capsys):
    code, out, _ = run(capsys, "run", "research-topics", "--mode", "sync", "--latency-ms", "1")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 16
    assert lines[0] == "effect handlers"


def test_research_topics_json(capsys):
    code, out, _ = run(capsys, "run", "research-topics", "--json")
    data = json.loads(out)
    assert code == 0 and len(data["entries"]) == 8 and len(data["log"]) == 16


def test_tot_solution(capsys):
    code, out, _ = run(capsys, "run", "tot", "4", "9", "10", "13", "--clock", "virtual", "--latency-ms", "100")
    assert code == 0
    answer = out.strip().splitlines()[-1]
    assert answer.startswith("answer: ") and answer.endswith("= 24")


def test_tot_no_solution_exit_code(capsys):
    code, out, err = run(capsys, "run", "tot", "1", "1", "1", "1")
    assert code == 3
    assert "no valid solution" in err


def test_tot_zero_steps_prints_initial_state(capsys):
    code, out, _ = run(capsys, "run", "tot", "4,9,10,13", "--n-steps", "0")
    assert out.splitlines()[0] == "[[] left: [4; 9; 10; 13]]"
    assert code == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "tot", "1", "2", "3"],
        ["run", "tot", "1", "2", "3", "x"],
        ["run", "research-topics", "--llm", "replay"],
        ["run", "research-topics", "--llm", "replay", "--trace", "/nonexistent/t.jsonl"],
        ["run", "research-topics", "--seq", "--mode", "sync"],
        ["run", "research-topics", "--mode", "fast"],
        ["bench", "tot", "--trials", "0"],
    ],
)
def test_configuration_errors_exit_2(capsys, argv):
    code = None
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    assert code == 2


def test_live_without_key_is_config_error(capsys, monkeypatch):
    monkeypatch.setenv("LLM_BASE_URL", "https://llm.example.com/v1")
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    code, _, err = run(capsys, "run", "research-topics", "--llm", "live")
    assert code == 2 and "LLM_API_KEY" in err


def test_workflow_failure_exit_1(capsys, no_network):
    code, _, err = run(capsys, "run", "research-topics", "--llm", "live")
    assert code == 1 and "workflow failed" in err


def test_record_inspect_replay_roundtrip(capsys, tmp_path, no_network):
    path = tmp_path / "t.trace.jsonl"
    code, recorded, _ = run(capsys, "trace", "record", str(path), "research-topics", "--seq", "--latency-ms", "2")
    assert code == 0
    assert len(Trace.load(path)) == 9
    code, table, _ = run(capsys, "trace", "inspect", str(path))
    assert code == 0 and len(table.splitlines()) == 1 + 9
    code, replayed, _ = run(capsys, "trace", "replay", str(path), "research-topics", "--seq", "--strict")
    assert code == 0 and replayed == recorded
    code, replayed_run, _ = run(capsys, "run", "research-topics", "--seq", "--llm", "replay", "--trace", str(path))
    assert replayed_run == recorded
    assert no_network.attempts == []


def test_inspect_three_records(capsys, tmp_path):
    path = tmp_path / "three.jsonl"
    recs = [
        {"seq": i, "kind": "complete", "prompt": f"p{i}", "schema_id": None, "response": "r", "model": "m", "latency_ms": 1}
        for i in range(3)
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    code, out, _ = run(capsys, "trace", "inspect", str(path))
    assert code == 0 and len(out.splitlines()) == 4
    code, out, _ = run(capsys, "trace", "inspect", str(path), "--json")
    assert [json.loads(line) for line in out.splitlines()][2]["prompt"] == "p2"


def test_truncated_trace_exit_2(capsys, tmp_path):
    path = tmp_path / "bad.jsonl"
    good = {"seq": 0, "kind": "complete", "prompt": "p", "schema_id": None, "response": "r", "model": "m", "latency_ms": 1}
    path.write_text(json.dumps(good) + "\n" + json.dumps(good)[:20] + "\n")
    code, _, err = run(capsys, "trace", "inspect", str(path))
    assert code == 2 and "line 2" in err
    code, _, err = run(capsys, "trace", "replay", str(path), "research-topics")
    assert code == 2 and "line 2" in err


def test_bench_json_report(capsys):
    code, out, _ = run(
        capsys, "bench", "research-topics", "--latency-ms", "20", "--trials", "1", "--clock", "virtual", "--json"
    )
    assert code == 0
    report = json.loads(out)
    assert set(report) == {"workflow", "rows", "mean_speedup", "meta"}
    row = report["rows"][0]
    assert set(row) == {"input", "async_s", "sync_s", "speedup"}
    assert row["speedup"] == round(row["sync_s"] / row["async_s"], 3)
    assert {"latency_ms", "trials", "seed"} <= set(report["meta"])


def test_bench_table(capsys):
    code, out, _ = run(capsys, "bench", "tot", "--input", "4,9,10,13", "--trials", "1", "--clock", "virtual")
    assert code == 0
    assert "[4; 9; 10; 13]" in out and "mean" in out


def test_calc_run_multishot(capsys):
    code, out, _ = run(capsys, "calc", "run", program_path("backtrack.efc"), "--multishot")
    assert code == 0
    assert out.splitlines() == ["true", "false", "=> false"]


def test_calc_trace(capsys, tmp_path):
    src = tmp_path / "p.efc"
    src.write_text("do x <- return 1 in return x\n")
    code, out, _ = run(capsys, "calc", "trace", str(src))
    assert code == 0
    assert out.splitlines() == ["⟨∅; do x <- return 1 in return x⟩", "  --LetBind--> ⟨∅; return 1⟩", "Terminal(1)"]


def test_calc_errors(capsys, tmp_path):
    src = tmp_path / "bad.efc"
    src.write_text("do x <- \n")
    code, _, err = run(capsys, "calc", "run", str(src))
    assert code == 2 and "2:1" in err
    src.write_text("fail(1)")
    code, _, err = run(capsys, "calc", "run", str(src))
    assert code == 1 and "UnhandledOp" in err
    src.write_text("do a <- return 1 in do b <- return 2 in return b")
    code, _, err = run(capsys, "calc", "run", str(src), "--step-limit", "1")
    assert code == 1


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "effscript", "calc", "run", program_path("forward.efc")],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines() == ["42", "=> 42"]
