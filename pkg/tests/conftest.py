import json
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class StubChat:
    """Tiny OpenAI-style chat server; replies ``echo: <prompt>`` after ``delay`` seconds."""

    def __init__(self, delay=0.0):
        self.delay = delay
        self.requests = []
        self.status = 200
        self.reply = None  # callable(body) -> content, overrides echo
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                stub.requests.append({"path": self.path, "body": body, "auth": self.headers.get("Authorization")})
                time.sleep(stub.delay)
                if stub.status != 200:
                    payload = b'{"error": "nope"}'
                    self.send_response(stub.status)
                else:
                    prompt = body["messages"][-1]["content"]
                    content = stub.reply(body) if stub.reply else f"echo: {prompt}"
                    payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]}).encode()
                    self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_chat():
    server = StubChat()
    yield server
    server.close()


class NetworkGuard:
    def __init__(self):
        self.attempts = []


@pytest.fixture
def no_network(monkeypatch):
    """Fail (and count) every outbound socket connection."""
    guard = NetworkGuard()

    def refuse(self, address, *args, **kwargs):
        guard.attempts.append(address)
        raise ConnectionRefusedError(f"network disabled in test: {address}")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    monkeypatch.setattr(socket, "create_connection", lambda address, *a, **k: refuse(None, address))
    monkeypatch.setenv("LLM_BASE_URL", "http://127.0.0.1:9/v1")  # discard port: nothing listens
    return guard


# -- acceptance summary --------------------------------------------------------------

_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if "test_acceptance.py::test_criterion_" in report.nodeid:
            _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in sorted(_acceptance):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        number, _, label = name[len("test_criterion_"):].partition("_")
        terminalreporter.write_line(f"{verdict}  #{int(number):<2} {label.replace('_', ' '):<40} {duration:7.2f}s")
