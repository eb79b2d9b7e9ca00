"""OTLP/HTTP trace receiver with a timeout-based trace completion buffer.

OTLP has no end-of-trace marker, so a trace counts as complete once no new
spans arrived for a configurable quiet period. Completed traces are handed
to a sink callback, one trace at a time.
"""

from __future__ import annotations

import logging
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .otlp import MalformedPayload, parse_otlp_json, parse_otlp_protobuf
from .spans import OtelSpan

logger = logging.getLogger(__name__)

DEFAULT_COMPLETION_TIMEOUT = 10.0

TraceSink = Callable[[str, list[OtelSpan]], None]


@dataclass(slots=True)
class _PendingTrace:
    spans: dict[str, OtelSpan] = field(default_factory=dict)
    last_arrival: float = 0.0


class TraceBuffer:
    """Buffers spans per trace id until the trace has been quiet long enough.

    Duplicate span ids within a trace are retransmissions: last write wins
    and the duplicate is counted. All mutations are serialized by an
    internal lock; the clock is injectable for tests.
    """

    def __init__(
        self,
        completion_timeout: float = DEFAULT_COMPLETION_TIMEOUT,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.completion_timeout = completion_timeout
        self._clock = clock
        self._lock = threading.Lock()
        self._pending: dict[str, _PendingTrace] = {}
        self.duplicate_count = 0

    def add(self, spans: list[OtelSpan]) -> None:
        now = self._clock()
        with self._lock:
            for span in spans:
                trace = self._pending.setdefault(span.trace_id, _PendingTrace())
                if span.span_id in trace.spans:
                    self.duplicate_count += 1
                    logger.warning(
                        "trace %s: duplicate span %s, keeping the newer one",
                        span.trace_id, span.span_id,
                    )
                trace.spans[span.span_id] = span
                trace.last_arrival = now

    def due(self) -> list[tuple[str, list[OtelSpan]]]:
        """Pop traces idle for at least the completion timeout, oldest first."""
        now = self._clock()
        with self._lock:
            ripe = [
                trace_id
                for trace_id, trace in self._pending.items()
                if now - trace.last_arrival >= self.completion_timeout
            ]
            return self._pop(ripe)

    def flush_all(self) -> list[tuple[str, list[OtelSpan]]]:
        """Pop every pending trace regardless of age, oldest first."""
        with self._lock:
            return self._pop(list(self._pending))

    def _pop(self, trace_ids: list[str]) -> list[tuple[str, list[OtelSpan]]]:
        trace_ids.sort(key=lambda tid: self._pending[tid].last_arrival)
        flushed = []
        for trace_id in trace_ids:
            trace = self._pending.pop(trace_id)
            flushed.append((trace_id, list(trace.spans.values())))
        return flushed

    def __len__(self) -> int:
        with self._lock:
            return len(self._pending)


class _ExportHandler(BaseHTTPRequestHandler):
    server: "_ReceiverServer"

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if self.path != "/v1/traces":
            self.send_error(404, "unknown path")
            return
        content_type = self.headers.get("Content-Type", "").split(";")[0].strip().lower()
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        if content_type == "application/x-protobuf":
            parse = parse_otlp_protobuf
            response = b""
        elif content_type == "application/json":
            parse = parse_otlp_json
            response = b"{}"
        else:
            self.send_error(415, f"unsupported content type {content_type!r}")
            return
        try:
            spans = parse(body)
        except MalformedPayload as exc:
            self.send_error(400, str(exc))
            return
        self.server.receiver._buffer.add(spans)
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(response)))
        self.end_headers()
        self.wfile.write(response)

    def log_message(self, format: str, *args: object) -> None:
        logger.debug("http: " + format, *args)


class _ReceiverServer(ThreadingHTTPServer):
    daemon_threads = True
    receiver: "TraceReceiver"


class TraceReceiver:
    """HTTP server accepting POST /v1/traces and flushing idle traces to a sink.

    The sink is invoked from one flusher at a time (sweep thread or final
    shutdown flush), never concurrently.
    """

    def __init__(
        self,
        listen_address: tuple[str, int],
        sink: TraceSink,
        completion_timeout: float = DEFAULT_COMPLETION_TIMEOUT,
        sweep_interval: float = 0.5,
        clock: Callable[[], float] = time.monotonic,
    ):
        self._sink = sink
        self._buffer = TraceBuffer(completion_timeout=completion_timeout, clock=clock)
        self._sweep_interval = sweep_interval
        self._server = _ReceiverServer(listen_address, _ExportHandler)
        self._server.receiver = self
        self._stop = threading.Event()
        self._flush_lock = threading.Lock()
        self._threads: list[threading.Thread] = []

    @property
    def bound_address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), port

    def start(self) -> None:
        server_thread = threading.Thread(
            target=self._server.serve_forever, name="otlp-receiver", daemon=True
        )
        sweep_thread = threading.Thread(target=self._sweep_loop, name="trace-sweeper", daemon=True)
        self._threads = [server_thread, sweep_thread]
        for thread in self._threads:
            thread.start()
        logger.info("listening on %s:%d", *self.bound_address)

    def shutdown(self) -> None:
        """Stop accepting requests, then flush everything still pending."""
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._flush(self._buffer.flush_all())

    def sweep_once(self) -> None:
        """Flush currently due traces; exposed for tests with injected clocks."""
        self._flush(self._buffer.due())

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self._sweep_interval):
            self.sweep_once()

    def _flush(self, completed: list[tuple[str, list[OtelSpan]]]) -> None:
        with self._flush_lock:
            for trace_id, spans in completed:
                try:
                    self._sink(trace_id, spans)
                except Exception:
                    logger.exception("sink failed for trace %s", trace_id)


def serve_receiver(
    listen_address: tuple[str, int],
    sink: TraceSink,
    completion_timeout: float = DEFAULT_COMPLETION_TIMEOUT,
    stop_event: threading.Event | None = None,
) -> None:
    """Run a receiver until the stop event is set or the process is interrupted.

    Pending traces are flushed to the sink on the way out. A bind failure
    propagates immediately.
    """
    receiver = TraceReceiver(listen_address, sink, completion_timeout=completion_timeout)
    receiver.start()
    wait_on = stop_event if stop_event is not None else threading.Event()
    try:
        # poll so signal handlers that set the event always get through
        while not wait_on.wait(0.2):
            pass
    except KeyboardInterrupt:
        logger.info("interrupted, flushing pending traces")
    finally:
        receiver.shutdown()
