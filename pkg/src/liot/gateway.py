"""Inbound HTTP surface and outbound HTTP client.

Everything is GET: sensors insert through query strings, reads return a JSON
array, endpoints accept asynchronous calls, and module calls / webhooks go out
as GETs too. Inbound handlers never touch engine state directly; they enqueue
an event or take a store snapshot. Response bodies use one fixed JSON
serialization so identical snapshots yield byte-identical responses.
"""

from __future__ import annotations

import logging
import queue
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .runtime import EngineRuntime, QueueFullError
from .store import Record
from .values import Value, dump_json, parse_query_value, value_to_json
from .errors import ScalarError

logger = logging.getLogger("liot.gateway")


# -- outbound ---------------------------------------------------------------------


class OutboundClient:
    """Thin urllib wrapper; timeouts surface as TimeoutError, other transport
    failures as ConnectionError, HTTP error statuses as plain results."""

    def __init__(self, body_limit: int = 1024 * 1024):
        self.body_limit = body_limit

    def get(self, url: str, params: list[tuple[str, str]], timeout_ms: int) -> tuple[int, bytes]:
        full = url + ("?" + urllib.parse.urlencode(params) if params else "")
        try:
            with urllib.request.urlopen(full, timeout=timeout_ms / 1000.0) as response:
                return response.status, response.read(self.body_limit + 1)
        except urllib.error.HTTPError as exc:
            body = exc.read(self.body_limit + 1) if exc.fp else b""
            return exc.code, body
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise TimeoutError(str(exc.reason)) from exc
            raise ConnectionError(str(exc.reason)) from exc
        except TimeoutError:
            raise
        except OSError as exc:
            raise ConnectionError(str(exc)) from exc


class AsyncDelivery:
    """Background fire-and-forget GETs for ACALL and trigger webhooks.

    With ``inline=True`` (scripts, tests) deliveries happen synchronously on
    the caller's thread, which keeps runs deterministic.
    """

    def __init__(self, client: OutboundClient, timeout_ms: int, inline: bool = False,
                 capacity: int = 1024):
        self.client = client
        self.timeout_ms = timeout_ms
        self.inline = inline
        self.delivered = 0
        self.failed = 0
        self._queue: queue.Queue[tuple[str, list[tuple[str, str]]] | None] = queue.Queue(capacity)
        self._worker: threading.Thread | None = None
        if not inline:
            self._worker = threading.Thread(target=self._run, name="liot-async", daemon=True)
            self._worker.start()

    def submit(self, url: str, params: list[tuple[str, str]]) -> None:
        if self.inline:
            self._deliver(url, params)
            return
        try:
            self._queue.put_nowait((url, params))
        except queue.Full:
            self.failed += 1
            logger.warning("async GET dropped (delivery queue full): %s", url)

    def _deliver(self, url: str, params: list[tuple[str, str]]) -> None:
        try:
            status, _ = self.client.get(url, params, self.timeout_ms)
            if 200 <= status < 300:
                self.delivered += 1
            else:
                self.failed += 1
                logger.warning("async GET %s returned %d", url, status)
        except (TimeoutError, OSError) as exc:
            self.failed += 1
            logger.warning("async GET %s failed: %s", url, exc)

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            try:
                if item is None:
                    return
                self._deliver(*item)
            finally:
                self._queue.task_done()

    def close(self) -> None:
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join()
            self._worker = None


class GatewayOutbound:
    """The Outbound implementation handed to the engine."""

    def __init__(self, client: OutboundClient, delivery: AsyncDelivery):
        self.client = client
        self.delivery = delivery

    def get(self, url: str, params: list[tuple[str, str]], timeout_ms: int) -> tuple[int, bytes]:
        return self.client.get(url, params, timeout_ms)

    def submit_async(self, url: str, params: list[tuple[str, str]]) -> None:
        self.delivery.submit(url, params)


def build_outbound(config, inline_async: bool | None = None) -> GatewayOutbound:
    client = OutboundClient(body_limit=config.body_limit)
    inline = config.inline_async if inline_async is None else inline_async
    delivery = AsyncDelivery(client, timeout_ms=config.call_timeout_ms, inline=inline)
    return GatewayOutbound(client, delivery)


# -- inbound -------------------------------------------------------------------


def render_record(record: Record, fields: tuple[str, ...]) -> dict:
    """Response object with fixed key order: T first, then declared fields."""
    out: dict = {"T": record.t}
    for name, value in zip(fields, record.values):
        out[name] = value_to_json(value)
    return out


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    runtime: EngineRuntime  # set on the subclass by serve()

    # -- plumbing -------------------------------------------------------

    def log_message(self, format: str, *args) -> None:
        logger.debug("%s " + format, self.address_string(), *args)

    def _reply(self, status: int, payload: object) -> None:
        body = dump_json(payload).encode("utf-8")
        self.send_response_only(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, status: int, message: str) -> None:
        self._reply(status, {"error": message})

    def _query_pairs(self) -> list[tuple[str, str]]:
        query = urllib.parse.urlsplit(self.path).query
        return urllib.parse.parse_qsl(query, keep_blank_values=True)

    def _collect_exact(self, names: tuple[str, ...]) -> list[Value] | None:
        """Each declared name exactly once, nothing extra; None means a 400
        was already sent."""
        pairs = self._query_pairs()
        seen: dict[str, str] = {}
        for key, raw in pairs:
            if key not in names:
                self._fail(400, f"unexpected parameter {key!r}")
                return None
            if key in seen:
                self._fail(400, f"duplicate parameter {key!r}")
                return None
            seen[key] = raw
        missing = [n for n in names if n not in seen]
        if missing:
            self._fail(400, f"missing parameter {missing[0]!r}")
            return None
        try:
            return [parse_query_value(seen[n]) for n in names]
        except ScalarError as exc:
            self._fail(400, str(exc))
            return None

    # -- routes ------------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        path = urllib.parse.urlsplit(self.path).path
        parts = [p for p in path.split("/") if p]
        try:
            if parts == ["healthz"]:
                self._reply(200, {"ok": True})
            elif len(parts) == 3 and parts[0] == "rel" and parts[2] == "insert":
                self._handle_ingest(parts[1])
            elif len(parts) == 3 and parts[0] == "rel" and parts[2] == "read":
                self._handle_read(parts[1])
            elif len(parts) == 2 and parts[0] == "endpoint":
                self._handle_endpoint(parts[1])
            else:
                self._fail(404, f"no route for {path}")
        except BrokenPipeError:
            pass

    def _handle_ingest(self, relation: str) -> None:
        engine = self.runtime.engine
        decl = engine.program.relation(relation)
        if decl is None:
            self._fail(404, f"unknown relation {relation}")
            return
        values = self._collect_exact(decl.fields)
        if values is None:
            return
        try:
            arrival = self.runtime.submit_insert(relation, tuple(values))
        except QueueFullError:
            self._fail(503, "event queue is full")
            return
        self._reply(202, {"queued": True, "seq": arrival})

    def _handle_read(self, relation: str) -> None:
        engine = self.runtime.engine
        decl = engine.program.relation(relation)
        if decl is None:
            self._fail(404, f"unknown relation {relation}")
            return
        pairs = dict(self._query_pairs())
        raw_limit = pairs.get("limit", "1")
        try:
            limit = int(raw_limit)
        except ValueError:
            self._fail(400, f"limit must be an integer, got {raw_limit!r}")
            return
        if limit < 1:
            self._fail(400, f"limit must be positive, got {limit}")
            return
        records = engine.store.read(relation, limit)
        self._reply(200, [render_record(r, decl.fields) for r in records])

    def _handle_endpoint(self, name: str) -> None:
        engine = self.runtime.engine
        decl = next((e for e in engine.program.endpoints if e.name == name), None)
        if decl is None:
            self._fail(404, f"unknown endpoint {name}")
            return
        args = self._collect_exact(decl.params)
        if args is None:
            return
        try:
            arrival = self.runtime.submit_endpoint(name, tuple(args))
        except QueueFullError:
            self._fail(503, "event queue is full")
            return
        self._reply(202, {"queued": True, "seq": arrival})


class GatewayServer:
    """Threaded HTTP server bound to the runtime; port 0 picks a free port."""

    def __init__(self, runtime: EngineRuntime, host: str = "127.0.0.1", port: int = 8080):
        handler = type("BoundHandler", (_Handler,), {"runtime": runtime})
        self.server = ThreadingHTTPServer((host, port), handler)
        self.server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[0], self.server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self.server.serve_forever, name="liot-http", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
