"""Tiny local chat-completion server for exercising the remote oracle offline."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable

# a responder maps the decoded request body to (status, reply text)
Responder = Callable[[dict], "tuple[int, str]"]


def scripted(replies: Iterable[str | tuple[int, str]]) -> Responder:
    """Serve the given replies in order, repeating the last one."""
    items = [r if isinstance(r, tuple) else (200, r) for r in replies]
    if not items:
        raise ValueError("need at least one reply")
    lock = threading.Lock()
    pos = [0]

    def respond(_body: dict) -> tuple[int, str]:
        with lock:
            k = min(pos[0], len(items) - 1)
            pos[0] += 1
        return items[k]

    return respond


class MockVisionServer:
    """Context manager running a chat-completion endpoint on localhost.

    ``requests`` collects ``(headers, body)`` for every call received.
    """

    def __init__(self, responder: Responder):
        self.responder = responder
        self.requests: list[tuple[dict, dict]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                n = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(n) or b"{}")
                outer.requests.append((dict(self.headers), body))
                status, text = outer.responder(body)
                if status == 200:
                    payload = json.dumps({"choices": [{"index": 0, "message": {
                        "role": "assistant", "content": text}}]}).encode()
                else:
                    payload = json.dumps({"error": text}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "MockVisionServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
