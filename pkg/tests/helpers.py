"""Shared test plumbing: tiny HTTP client, recording stub server, full stack."""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.parse
import urllib.request
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from liot.config import RunConfig
from liot.engine import Engine
from liot.gateway import GatewayServer, build_outbound
from liot.parser import parse_program
from liot.runtime import EngineRuntime


def http_get(url: str, timeout: float = 5.0) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def get_json(url: str) -> tuple[int, object]:
    status, body = http_get(url)
    return status, json.loads(body)


class StubServer:
    """Records every GET it receives; responds per-path or with a default."""

    def __init__(self):
        self.requests: list[tuple[str, list[tuple[str, str]]]] = []
        self.responses: dict[str, tuple[int, bytes]] = {}
        self.default_response: tuple[int, bytes] = (200, b"{}")
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_GET(self):
                split = urllib.parse.urlsplit(self.path)
                pairs = urllib.parse.parse_qsl(split.query, keep_blank_values=True)
                with stub._lock:
                    stub.requests.append((split.path, pairs))
                status, body = stub.responses.get(split.path, stub.default_response)
                self.send_response_only(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address[0], self.server.server_address[1]
        return f"http://{host}:{port}"

    def request_count(self, path: str) -> int:
        with self._lock:
            return sum(1 for p, _ in self.requests if p == path)

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()


@contextmanager
def stub_server():
    stub = StubServer()
    try:
        yield stub
    finally:
        stub.close()


@contextmanager
def running_stack(source: str, config: RunConfig | None = None):
    """Full engine + gateway on a free port; yields (runtime, base_url)."""
    config = config or RunConfig()
    program = parse_program(source)
    outbound = build_outbound(config)
    engine = Engine(program, config=config, outbound=outbound)
    runtime = EngineRuntime(engine)
    server = GatewayServer(runtime, host="127.0.0.1", port=0)
    if config.base_url is None:
        config.base_url = server.base_url
    runtime.start()
    server.start()
    try:
        yield runtime, server.base_url
    finally:
        server.stop()
        runtime.shutdown()
        outbound.delivery.close()
