"""Deterministic chat backends for tests and offline runs.

A fixture file is JSON of the form::

    {"match": {"adsorbate": "NNH", "catalyst": "CuPd3", "miller": [1, 1, 1]},
     "responses": ["reply 1", "reply 2", ...],
     "by_hash": {"<sha256 of the messages>": "reply"}}

Replies keyed by message hash take precedence; otherwise ``responses`` are
handed out in order, one per chat call, across all agent modules.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..errors import ChatError
from ..slab import reduced_composition
from ..structures import reduce_miller
from .llm import check_messages


def message_hash(messages) -> str:
    canon = json.dumps([{"role": m["role"], "content": m["content"]} for m in messages],
                       sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canon.encode()).hexdigest()


class ScriptedChat:
    """Replays a fixed list of replies; has its own cursor."""

    def __init__(self, responses, by_hash=None, name="mock"):
        self.responses = tuple(responses)
        self.by_hash = dict(by_hash or {})
        self.name = name
        self.calls = 0
        self._cursor = 0

    def __call__(self, messages) -> str:
        check_messages(messages)
        self.calls += 1
        h = message_hash(messages)
        if h in self.by_hash:
            return self.by_hash[h]
        if self._cursor >= len(self.responses):
            raise ChatError(f"mock script {self.name!r} exhausted after "
                            f"{len(self.responses)} replies")
        reply = self.responses[self._cursor]
        self._cursor += 1
        return reply


@dataclass(frozen=True)
class MockFixture:
    path: str
    adsorbate: str | None
    catalyst: dict | None
    miller: tuple | None
    responses: tuple
    by_hash: dict

    def matches(self, adsorbate, catalyst, miller):
        if self.adsorbate is not None and self.adsorbate.lstrip("*") != adsorbate.lstrip("*"):
            return False
        if self.catalyst is not None and self.catalyst != reduced_composition(catalyst):
            return False
        if self.miller is not None and self.miller != reduce_miller(miller):
            return False
        return True

    def chat(self):
        return ScriptedChat(self.responses, self.by_hash, Path(self.path).name)


class MockBackend:
    """A directory of scripted fixtures, matched by (adsorbate, catalyst, miller)."""

    def __init__(self, fixtures):
        self.fixtures = tuple(fixtures)

    @classmethod
    def load(cls, path):
        path = Path(path)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        if not files:
            raise ChatError(f"no mock fixtures found in {path}")
        out = []
        for f in files:
            try:
                doc = json.loads(f.read_text())
            except json.JSONDecodeError as exc:
                raise ChatError(f"mock fixture {f} is not valid JSON: {exc}") from None
            match = doc.get("match", {})
            miller = match.get("miller")
            out.append(MockFixture(
                str(f),
                match.get("adsorbate"),
                reduced_composition(match["catalyst"]) if match.get("catalyst") else None,
                reduce_miller(miller) if miller is not None else None,
                tuple(doc.get("responses", [])),
                dict(doc.get("by_hash", {})),
            ))
        return cls(out)

    def find(self, adsorbate, catalyst, miller) -> MockFixture:
        for fx in self.fixtures:
            if fx.matches(adsorbate, catalyst, miller):
                return fx
        raise ChatError(
            f"no mock fixture matches adsorbate={adsorbate} catalyst={catalyst} "
            f"miller={tuple(miller)}")

    def chat_for(self, adsorbate, catalyst, miller) -> ScriptedChat:
        return self.find(adsorbate, catalyst, miller).chat()


def make_mock_chat_server(mode="ok", reply="{}", host="127.0.0.1", port=0, delay=0.0):
    """Local HTTP server speaking the chat-completions shape.

    ``mode``: "ok" answers ``reply``; "unauthorized" answers 401; "slow"
    sleeps ``delay`` seconds first; "malformed" answers a body without
    choices; "flaky" fails with 500 once, then answers ``reply``.
    """
    import time

    state = {"requests": [], "failures": 0}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            n = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(n)
            state["requests"].append({"path": self.path, "body": json.loads(body),
                                      "auth": self.headers.get("Authorization")})
            if self.path.rstrip("/") != "/chat/completions":
                self._send(404, b'{"error": "not found"}')
            elif mode == "unauthorized":
                self._send(401, b'{"error": {"message": "invalid api key"}}')
            elif mode == "malformed":
                self._send(200, b'{"id": "x", "object": "chat.completion"}')
            elif mode == "flaky" and state["failures"] == 0:
                state["failures"] += 1
                self._send(500, b'{"error": "temporary"}')
            else:
                if mode == "slow":
                    time.sleep(delay)
                doc = {"choices": [{"index": 0, "message": {"role": "assistant",
                                                            "content": reply}}]}
                self._send(200, json.dumps(doc).encode())

        def _send(self, code, body):
            try:
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            except (BrokenPipeError, ConnectionResetError):
                pass

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer((host, port), Handler)
    server.state = state
    return server
