"""Tests for field mapping, trace-id derivation and eoi/ess assignment."""

import pytest
from hypothesis import given, settings

from span2records.convert import (
    UNKNOWN_HOST,
    assign_eoi_ess,
    derive_hostname,
    derive_kieker_trace_id,
    is_synchronous,
    map_span_fields,
)
from span2records.spans import SpanEvent, build_span_forest

from conftest import make_span, hostname_spans, span_sets
from test_spans import fig3_spans


class TestDeriveKiekerTraceId:
    def test_low_bits_identity(self):
        assert derive_kieker_trace_id("0" * 31 + "1") == 1

    def test_high_bits_ignored(self):
        assert derive_kieker_trace_id("f" * 16 + "0" * 15 + "2") == 2

    def test_twos_complement_reinterpretation(self):
        assert derive_kieker_trace_id("0" * 16 + "f" * 16) == -1

    @given(hostname_spans())
    @settings(max_examples=100)
    def test_matches_big_integer_oracle(self, span):
        # independent route: reinterpret the low 8 bytes as a signed integer
        oracle = int.from_bytes(bytes.fromhex(span.trace_id)[8:], "big", signed=True)
        assert derive_kieker_trace_id(span.trace_id) == oracle


class TestDeriveHostname:
    def test_socket_peer_address(self):
        assert derive_hostname({"net.sock.peer.addr": "127.0.0.1"}, {}) == "127.0.0.1"

    def test_peer_name_wins_over_address(self):
        attrs = {"net.peer.name": "db.example", "net.sock.peer.addr": "10.0.0.1"}
        assert derive_hostname(attrs, {}) == "db.example"

    def test_service_name_fallback(self):
        assert derive_hostname({}, {"service.name": "checkout"}) == "checkout"

    def test_no_attributes_at_all(self):
        assert derive_hostname({}, {}) == UNKNOWN_HOST

    def test_empty_values_count_as_absent(self):
        assert derive_hostname({"net.peer.name": ""}, {"service.name": "svc"}) == "svc"


class TestMapSpanFields:
    def test_plain_field_copy(self):
        span = make_span("1", name="GET /products", start=5, end=9)
        mapped = map_span_fields(span)
        assert mapped.signature == "GET /products"
        assert mapped.tin == 5
        assert mapped.tout == 9

    def test_empty_name_becomes_unnamed(self):
        assert map_span_fields(make_span("1", name="")).signature == "<unnamed>"

    def test_events_have_no_mapping(self):
        span = make_span("1", name="op")
        span.events.append(SpanEvent(epoch_nanos=1, name="boom"))
        mapped = map_span_fields(span)
        assert mapped.signature == "op"  # nothing else to observe: events are dropped


class TestIsSynchronous:
    def test_sequential_children(self):
        spans = [
            make_span("1", start=0, end=1000),
            make_span("2", parent="1", start=100, end=200),
            make_span("3", parent="1", start=300, end=400),
        ]
        (forest,) = build_span_forest(spans)
        assert is_synchronous(forest)

    def test_overlapping_children(self):
        (forest,) = build_span_forest(fig3_spans())
        assert not is_synchronous(forest)

    def test_two_roots(self):
        spans = [make_span("1", start=0, end=10), make_span("2", start=20, end=30)]
        (forest,) = build_span_forest(spans)
        assert not is_synchronous(forest)

    def test_child_leaking_out_of_parent(self):
        spans = [
            make_span("1", start=0, end=100),
            make_span("2", parent="1", start=50, end=150),
        ]
        (forest,) = build_span_forest(spans)
        assert not is_synchronous(forest)

    def test_touching_siblings_still_synchronous(self):
        spans = [
            make_span("1", start=0, end=1000),
            make_span("2", parent="1", start=100, end=200),
            make_span("3", parent="1", start=200, end=300),
        ]
        (forest,) = build_span_forest(spans)
        assert is_synchronous(forest)


class TestAssignEoiEss:
    def test_single_span(self):
        (forest,) = build_span_forest([make_span("1")])
        records, report = assign_eoi_ess(forest)
        assert [(r.eoi, r.ess) for r in records] == [(0, 0)]
        assert report.span_count == 1
        assert report.synchronous

    def test_three_node_tree(self):
        spans = [
            make_span("1", name="root", start=0, end=1000),
            make_span("2", parent="1", name="A", start=100, end=200),
            make_span("3", parent="1", name="B", start=300, end=400),
        ]
        (forest,) = build_span_forest(spans)
        records, report = assign_eoi_ess(forest)
        assert [(r.operation_signature, r.eoi, r.ess) for r in records] == [
            ("root", 0, 0),
            ("A", 1, 1),
            ("B", 2, 1),
        ]
        assert report.synchronous

    def test_parallel_trace(self):
        (forest,) = build_span_forest(fig3_spans())
        records, report = assign_eoi_ess(forest)
        assert [(r.eoi, r.ess) for r in records] == [(0, 0), (1, 1), (2, 1), (3, 2), (4, 1)]
        assert [r.operation_signature for r in records] == [
            "root",
            "call1",
            "call2",
            "call4",
            "call3",
        ]
        assert not report.synchronous

    def test_logging_timestamp_is_tout(self):
        (forest,) = build_span_forest(fig3_spans())
        records, _ = assign_eoi_ess(forest)
        assert all(r.logging_timestamp == r.tout for r in records)


class TestConversionProperties:
    @given(span_sets())
    @settings(max_examples=100)
    def test_eoi_dense_and_ordered(self, spans):
        for forest in build_span_forest(spans):
            records, _ = assign_eoi_ess(forest)
            assert [r.eoi for r in records] == list(range(len(records)))
            keys = [(r.tin, node.span.span_id) for r, (node, _) in zip(records, _sorted_nodes(forest))]
            assert keys == sorted(keys)

    @given(span_sets())
    @settings(max_examples=100)
    def test_ess_is_ancestor_count(self, spans):
        for forest in build_span_forest(spans):
            records, _ = assign_eoi_ess(forest)
            depth_of = _independent_depths(forest)
            ordered = _sorted_nodes(forest)
            for record, (node, _) in zip(records, ordered):
                assert record.ess == depth_of[node.span.span_id]

    @given(span_sets())
    @settings(max_examples=50)
    def test_deterministic_under_arrival_order(self, spans):
        records_by_trace = {}
        for forest in build_span_forest(spans):
            records_by_trace[forest.trace_id] = assign_eoi_ess(forest)[0]
        for forest in build_span_forest(list(reversed(spans))):
            assert assign_eoi_ess(forest)[0] == records_by_trace[forest.trace_id]

    @given(hostname_spans())
    @settings(max_examples=100)
    def test_field_mapping_per_span(self, span):
        mapped = map_span_fields(span)
        assert mapped.tin == span.start_epoch_nanos
        assert mapped.tout == span.end_epoch_nanos
        assert mapped.signature == (span.name if span.name else "<unnamed>")
        assert mapped.hostname == _expected_hostname(span)

    @given(span_sets())
    @settings(max_examples=50)
    def test_synchronous_traces_never_jump_ess(self, spans):
        for forest in build_span_forest(spans):
            if not is_synchronous(forest):
                continue
            records, _ = assign_eoi_ess(forest)
            for previous, current in zip(records, records[1:]):
                assert current.ess <= previous.ess + 1


def _sorted_nodes(forest):
    return sorted(
        forest.iter_with_depth(), key=lambda pair: (pair[0].span.start_epoch_nanos, pair[0].span.span_id)
    )


def _independent_depths(forest):
    """Ancestor counts computed from raw parent references, not tree shape."""
    nodes = [node for node, _ in forest.iter_with_depth()]
    parent_node = {}
    for node in nodes:
        for child in node.children:
            parent_node[child.span.span_id] = node.span.span_id
    depths = {}
    for node in nodes:
        count = 0
        current = node.span.span_id
        while current in parent_node:
            current = parent_node[current]
            count += 1
        depths[node.span.span_id] = count
    return depths


def _expected_hostname(span):
    for value in (
        span.attributes.get("net.peer.name"),
        span.attributes.get("net.sock.peer.addr"),
        span.resource_attributes.get("service.name"),
    ):
        if value:
            return str(value)
    return UNKNOWN_HOST
