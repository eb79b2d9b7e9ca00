"""Tests for the trace completion buffer and the OTLP/HTTP receiver."""

import json
import threading
import time
import urllib.error
import urllib.request

from span2records.generator import GeneratorSpec, generate, spans_to_otlp_request
from span2records.receiver import TraceBuffer, TraceReceiver

from conftest import make_span
from otlp_ref_encoder import encode_request


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


class TestTraceBuffer:
    def test_not_due_before_timeout(self):
        clock = FakeClock()
        buffer = TraceBuffer(completion_timeout=10.0, clock=clock)
        buffer.add([make_span("1")])
        clock.advance(9.9)
        assert buffer.due() == []
        assert len(buffer) == 1

    def test_due_after_quiet_period(self):
        clock = FakeClock()
        buffer = TraceBuffer(completion_timeout=10.0, clock=clock)
        buffer.add([make_span("1")])
        clock.advance(10.0)
        flushed = buffer.due()
        assert len(flushed) == 1
        assert len(buffer) == 0

    def test_new_spans_reset_the_clock(self):
        clock = FakeClock()
        buffer = TraceBuffer(completion_timeout=10.0, clock=clock)
        buffer.add([make_span("1")])
        clock.advance(8.0)
        buffer.add([make_span("2")])
        clock.advance(8.0)
        assert buffer.due() == []
        clock.advance(2.0)
        (flushed,) = buffer.due()
        assert len(flushed[1]) == 2

    def test_duplicate_span_last_write_wins(self):
        clock = FakeClock()
        buffer = TraceBuffer(completion_timeout=1.0, clock=clock)
        buffer.add([make_span("1", name="old")])
        buffer.add([make_span("1", name="new")])
        clock.advance(1.0)
        ((_, spans),) = buffer.due()
        assert [s.name for s in spans] == ["new"]
        assert buffer.duplicate_count == 1

    def test_flush_all_ignores_age(self):
        buffer = TraceBuffer(completion_timeout=100.0, clock=FakeClock())
        other = "f" + "0" * 31
        buffer.add([make_span("1"), make_span("2", trace_id=other)])
        flushed = buffer.flush_all()
        assert {trace_id for trace_id, _ in flushed} == {make_span("1").trace_id, other}
        assert len(buffer) == 0

    def test_flush_order_follows_last_arrival(self):
        clock = FakeClock()
        buffer = TraceBuffer(completion_timeout=1.0, clock=clock)
        first = "a" * 32
        second = "b" * 32
        buffer.add([make_span("1", trace_id=second)])
        clock.advance(0.5)
        buffer.add([make_span("2", trace_id=first)])
        clock.advance(0.5)
        buffer.add([make_span("3", trace_id=second)])  # second becomes youngest
        clock.advance(5.0)
        order = [trace_id for trace_id, _ in buffer.due()]
        assert order == [first, second]


def post(url: str, body: bytes, content_type: str) -> int:
    request = urllib.request.Request(
        url, data=body, method="POST", headers={"Content-Type": content_type}
    )
    try:
        with urllib.request.urlopen(request, timeout=5) as response:
            return response.status
    except urllib.error.HTTPError as error:
        return error.code


class TestReceiverIntegration:
    def run_receiver(self, completion_timeout=0.3):
        flushed = []
        done = threading.Event()

        def sink(trace_id, spans):
            flushed.append((trace_id, spans))
            done.set()

        receiver = TraceReceiver(
            ("127.0.0.1", 0), sink, completion_timeout=completion_timeout, sweep_interval=0.05
        )
        receiver.start()
        host, port = receiver.bound_address
        return receiver, f"http://{host}:{port}/v1/traces", flushed, done

    def test_single_post_flushes_once(self):
        receiver, url, flushed, done = self.run_receiver()
        try:
            spans = generate(GeneratorSpec(pattern="sequential", children=1))
            body = json.dumps(spans_to_otlp_request(spans)).encode()
            assert post(url, body, "application/json") == 200
            assert done.wait(10)
        finally:
            receiver.shutdown()
        assert len(flushed) == 1
        assert sorted(s.span_id for s in flushed[0][1]) == sorted(s.span_id for s in spans)

    def test_batches_sharing_a_trace_merge(self):
        receiver, url, flushed, done = self.run_receiver()
        try:
            spans = generate(GeneratorSpec(pattern="sequential", children=2))
            first = json.dumps(spans_to_otlp_request(spans[:2])).encode()
            second = encode_request(spans[2:])
            assert post(url, first, "application/json") == 200
            assert post(url, second, "application/x-protobuf") == 200
            assert done.wait(10)
        finally:
            receiver.shutdown()
        assert len(flushed) == 1
        trace_id, merged = flushed[0]
        assert trace_id == spans[0].trace_id
        assert sorted(s.span_id for s in merged) == sorted(s.span_id for s in spans)

    def test_malformed_payload_is_rejected(self):
        receiver, url, flushed, _ = self.run_receiver(completion_timeout=0.1)
        try:
            assert post(url, b"\x00\x01 garbage", "application/json") == 400
            assert post(url, b"\xff\xff\xff\xff\xff", "application/x-protobuf") == 400
            time.sleep(0.3)
        finally:
            receiver.shutdown()
        assert flushed == []

    def test_unknown_content_type_is_rejected(self):
        receiver, url, flushed, _ = self.run_receiver()
        try:
            assert post(url, b"anything", "text/plain") == 415
        finally:
            receiver.shutdown()
        assert flushed == []

    def test_unknown_path_is_rejected(self):
        receiver, url, _, _ = self.run_receiver()
        try:
            assert post(url.replace("/v1/traces", "/v2/other"), b"{}", "application/json") == 404
        finally:
            receiver.shutdown()

    def test_shutdown_flushes_pending_traces(self):
        receiver, url, flushed, _ = self.run_receiver(completion_timeout=3600)
        spans = generate(GeneratorSpec(pattern="nested", depth=2))
        body = json.dumps(spans_to_otlp_request(spans)).encode()
        assert post(url, body, "application/json") == 200
        receiver.shutdown()
        assert len(flushed) == 1
        assert len(flushed[0][1]) == 2

    def test_concurrent_posts_deliver_every_span_once(self):
        """Distinct traces posted in parallel each flush exactly once."""
        receiver, url, flushed, _ = self.run_receiver(completion_timeout=0.3)
        try:
            all_spans = [
                generate(GeneratorSpec(pattern="random", span_count=6, seed=seed))
                for seed in range(8)
            ]
            threads = [
                threading.Thread(
                    target=post,
                    args=(url, json.dumps(spans_to_otlp_request(spans)).encode(), "application/json"),
                )
                for spans in all_spans
            ]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
            deadline = time.time() + 10
            while len(flushed) < len(all_spans) and time.time() < deadline:
                time.sleep(0.05)
        finally:
            receiver.shutdown()
        assert len(flushed) == len(all_spans)
        delivered = sorted(s.span_id + s.trace_id for _, spans in flushed for s in spans)
        expected = sorted(s.span_id + s.trace_id for spans in all_spans for s in spans)
        assert delivered == expected
